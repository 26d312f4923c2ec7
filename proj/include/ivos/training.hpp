#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ivos/embedding.hpp"
#include "ivos/heads.hpp"
#include "ivos/matching.hpp"
#include "ivos/robot.hpp"

namespace ivos {

// Checkpoint file: "MAHC", u16 version, u32 layers, channels, kernel,
// batch_norm, input_channels, then every tensor of HeadParams (statistics
// included) in declaration order, column-major, as little-endian f32.

inline constexpr std::uint16_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const HeadParams<Real>& p);
HeadParams<Real> decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const std::filesystem::path& path, const HeadParams<Real>& p);
HeadParams<Real> load_checkpoint(const std::filesystem::path& path);

/// Video with embeddings computed once up front.
struct EncodedVideo {
  const Video* video = nullptr;
  std::vector<Embedding> embeddings;
  std::vector<LabelMask> stride_gt;  ///< majority-vote labels at embedding resolution
};

std::vector<EncodedVideo> encode_videos(const std::vector<Video>& videos, const EmbeddingProvider& provider,
                                        int stride);

struct TrainConfig {
  int steps = 200;
  int batch = 2;
  double lr = 0.02;
  LossSchedule schedule{1.0, 0.15, 200};
  std::uint64_t seed = 7;
  MatchConfig match;
  double roi_margin = 0.5;  ///< rough ROI for first-round scribbles
  RobotConfig robot;        ///< scribble synthesis
  /// Stage 1: probability of replacing the reference mask by first-round
  /// scribbles drawn on it.
  double sparse_reference = 0.0;
  /// Stage 1: maximum shift, in cells, applied to the previous-frame mask.
  int mask_jitter = 0;

  void validate() const;
};

struct LossPoint {
  int step = 0;
  double loss = 0;
  double fraction = 0;
};

struct TrainResult {
  HeadParams<Real> params;
  std::vector<LossPoint> trace;
  std::vector<std::string> warnings;  ///< skipped videos
};

/// Propagation head. Every batch entry draws a reference frame (global map
/// from its ground truth) and an adjacent previous/current pair (local map and
/// previous mask from the previous frame's ground truth, target = current).
TrainResult train_stage1(const HeadParams<Real>& init, const std::vector<EncodedVideo>& corpus,
                         const TrainConfig& cfg);

/// Interaction head in circles of three rounds: round 1 uses ground-truth
/// positive scribbles plus the rough ROI and an all-background previous mask;
/// rounds 2 and 3 use robot scribbles from the current errors. With a
/// propagation head, round 2 moves to another frame of the video whose
/// previous-round mask is propagated from the round-1 scribbles (local map
/// from a jittered ground-truth neighbour); otherwise all rounds stay on one
/// frame.
TrainResult train_stage2(const HeadParams<Real>& init, const std::vector<EncodedVideo>& corpus,
                         const TrainConfig& cfg, const HeadParams<Real>* propagation = nullptr);

void write_loss_trace(const std::filesystem::path& path, const std::vector<LossPoint>& trace);

}  // namespace ivos
