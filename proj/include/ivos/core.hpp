#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "ivos/errors.hpp"

namespace ivos {

/// Scalar type used by the engine. Heads and kernels are templated and can be
/// instantiated with float as well; double keeps gradient checks meaningful.
using Real = double;

/// Row-major dense 2D grid. Index as (row, col).
template <typename T>
using Grid = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using BinaryGrid = Grid<std::uint8_t>;

/// Per-pixel distance map in [0, 1]. The owning object is carried by context
/// (memory slot, head call), not by the map.
using ScalarMap = Grid<Real>;

/// 0 is background.
using ObjectId = std::uint8_t;
inline constexpr ObjectId kBackground = 0;

enum class Resolution { kFull, kEmbedding, kLocal };

struct LabelMask {
  Grid<ObjectId> labels;
  Resolution resolution = Resolution::kFull;

  int rows() const { return static_cast<int>(labels.rows()); }
  int cols() const { return static_cast<int>(labels.cols()); }

  /// Cells equal to `o`, as a 0/1 grid.
  BinaryGrid binary(ObjectId o) const { return (labels == o).cast<std::uint8_t>(); }

  static LabelMask filled(int rows, int cols, ObjectId value, Resolution res) {
    LabelMask m;
    m.labels = Grid<ObjectId>::Constant(rows, cols, value);
    m.resolution = res;
    return m;
  }
};

/// 8-bit RGB raster, interleaved.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3

  RgbImage() = default;
  RgbImage(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0) {}

  std::uint8_t& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  bool operator==(const RgbImage&) const = default;
};

struct FrameSequence {
  std::vector<RgbImage> frames;

  int size() const { return static_cast<int>(frames.size()); }
  int height() const { return frames.empty() ? 0 : frames.front().height; }
  int width() const { return frames.empty() ? 0 : frames.front().width; }

  /// Throws ContractViolation unless n >= 1 and all frames share dimensions.
  void validate() const;
};

enum class Polarity { kPositive, kNegative };

struct Point {
  int x = 0;
  int y = 0;
  bool operator==(const Point&) const = default;
};

struct ScribbleStroke {
  ObjectId object = 0;
  Polarity polarity = Polarity::kPositive;
  std::vector<Point> points;
  int brush_radius = 0;
  bool operator==(const ScribbleStroke&) const = default;
};

struct ScribbleSet {
  int frame_index = 0;
  std::vector<ScribbleStroke> strokes;
  bool operator==(const ScribbleSet&) const = default;
};

/// Ceiling division for grid sizes at a stride.
constexpr int ceil_div(int a, int b) { return (a + b - 1) / b; }

}  // namespace ivos
