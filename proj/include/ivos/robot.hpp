#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ivos/core.hpp"
#include "ivos/metrics.hpp"

namespace ivos {

/// Full-resolution error cells of one object.
struct ObjectErrors {
  BinaryGrid false_negative;  ///< gt = o, pred != o
  BinaryGrid false_positive;  ///< pred = o, gt != o
};

struct ErrorRegions {
  std::vector<ObjectErrors> objects;  ///< indexed by ObjectId, background included
};

ErrorRegions error_regions(const LabelMask& pred, const LabelMask& gt, int object_count);

struct RobotConfig {
  std::uint64_t seed = 1;
  int min_region_cells = 10;
  int max_strokes_per_round = 8;
  int stroke_subsample_step = 3;
  int brush_radius = 0;

  void validate() const;
};

/// Frame with the lowest mean object Jaccard; ties to the smallest index.
int worst_frame(const std::vector<LabelMask>& preds, const std::vector<LabelMask>& gts, int object_count);

// Skeleton geometry, exposed for testing.

/// 4-connected components as index lists (row-major cell index), largest first,
/// ties by first cell.
std::vector<std::vector<int>> connected_components(const BinaryGrid& g);

/// Zhang-Suen thinning; keeps 8-connectivity of each component.
BinaryGrid thin(const BinaryGrid& g);

/// Longest path through an 8-connected skeleton by double breadth-first
/// search from `start` (a set cell). Returns cells in path order.
std::vector<Point> skeleton_longest_path(const BinaryGrid& skeleton, Point start);

/// Positive strokes along the largest false-negative component and negative
/// strokes along the largest false-positive component of every object,
/// background included, so a positive stroke always carries the ground-truth
/// label under it. Every point lies inside its source region, and so does
/// every rasterized segment (radius 0). Empty when no region reaches
/// min_region_cells.
ScribbleSet synthesize_scribbles(const LabelMask& pred, const LabelMask& gt, int frame, const RobotConfig& cfg,
                                 int object_count);

/// First-round scribbles: positive strokes only, on ground-truth object regions.
ScribbleSet initial_scribbles(const LabelMask& gt, int frame, const RobotConfig& cfg, int object_count);

/// A video with ground truth for benchmarking.
struct Video {
  std::string name;
  FrameSequence frames;
  std::vector<LabelMask> gt;
  int object_count = 2;
};

/// Round-based segmenter driven by the robot.
class InteractivePipeline {
 public:
  virtual ~InteractivePipeline() = default;
  /// Runs one round and returns full-resolution masks for every frame.
  virtual std::vector<LabelMask> round(const ScribbleSet& scribbles) = 0;
};

using PipelineFactory = std::function<std::unique_ptr<InteractivePipeline>(const Video&)>;

/// Robot-driven rounds on every video. Round 1 annotates frame 0 from ground
/// truth, later rounds annotate the worst frame. Empty scribbles leave the
/// masks unchanged and the round is still recorded.
std::vector<RoundRecord> run_benchmark(const PipelineFactory& factory, const std::vector<Video>& videos, int rounds,
                                       const RobotConfig& cfg);

}  // namespace ivos
