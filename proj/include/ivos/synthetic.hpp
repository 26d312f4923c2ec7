#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ivos/robot.hpp"

namespace ivos {

/// Moving convex polygons over a textured background.
struct SyntheticConfig {
  int frames = 24;
  int height = 64;
  int width = 64;
  int objects = 1;          ///< foreground objects; labels 1..objects
  double min_radius = 0.14;  ///< polygon radius as a fraction of min(h, w)
  double max_radius = 0.24;
  double max_speed = 1.5;  ///< pixels per frame
  double max_spin = 0.05;  ///< radians per frame
  double noise = 6.0;      ///< per-pixel uniform noise amplitude
  std::uint64_t seed = 1;

  void validate() const;
};

/// Painter's order: a higher object id is drawn in front. `silhouettes`, when
/// given, receives the unoccluded cells of every object per frame
/// ([t][o - 1]).
Video generate_synthetic_video(const SyntheticConfig& cfg, const std::string& name,
                               std::vector<std::vector<BinaryGrid>>* silhouettes = nullptr);

std::vector<Video> generate_corpus(const SyntheticConfig& base, int videos);

/// Writes <dir>/<name>/frames/00000.png ... and <dir>/<name>/gt/00000.png ...
void write_video(const std::filesystem::path& dir, const Video& video);

/// Reads a video in that layout. object_count = 1 + the largest label seen.
Video read_video(const std::filesystem::path& video_dir);

/// Every subdirectory holding frames/ and gt/, sorted by name.
std::vector<Video> read_corpus(const std::filesystem::path& dir);

}  // namespace ivos
