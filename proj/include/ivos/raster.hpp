#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "ivos/core.hpp"

namespace ivos {

/// Per-object scribble channels at full resolution, indexed by ObjectId.
struct RasterizedScribbles {
  int height = 0;
  int width = 0;
  std::vector<BinaryGrid> positive;
  std::vector<BinaryGrid> negative;

  int object_count() const { return static_cast<int>(positive.size()); }
};

/// Checks stroke geometry and object ids. Errors name the offending stroke index.
void validate_scribbles(const ScribbleSet& scribbles, int height, int width, int object_count);

/// Draws every stroke with integer line stepping, dilated by its brush radius
/// (Chebyshev). Validates first; overlapping positive strokes of two different
/// objects are rejected.
RasterizedScribbles rasterize_scribbles(const ScribbleSet& scribbles, int height, int width,
                                        int object_count);

/// Cells on the integer line from a to b, endpoints included.
std::vector<Point> line_points(Point a, Point b);

/// Positive and negative strokes of object o at `stride`.
std::pair<BinaryGrid, BinaryGrid> scribble_channels(const RasterizedScribbles& r, ObjectId o, int stride);

/// A cell at `stride` is set iff any covered full-resolution cell is set.
BinaryGrid to_stride_grid(const BinaryGrid& full, int stride);

/// Majority label per stride block (ties to the smaller id).
LabelMask to_stride_labels(const LabelMask& full, int stride, int object_count);

/// Keeps cells (stride*i, stride*j).
template <typename T>
Grid<T> decimate(const Grid<T>& g, int factor) {
  detail::require(factor >= 1, "decimate: factor must be >= 1");
  const int h = ceil_div(static_cast<int>(g.rows()), factor);
  const int w = ceil_div(static_cast<int>(g.cols()), factor);
  Grid<T> out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) out(r, c) = g(r * factor, c * factor);
  return out;
}

enum class UpsampleMode { kNearest, kBilinear };

/// Upsamples by an integer factor. Bilinear uses half-pixel centers with edge
/// clamping, so outputs are convex combinations of inputs.
template <typename T>
Grid<T> upsample_map(const Grid<T>& in, int factor, UpsampleMode mode) {
  detail::require(factor >= 1, "upsample_map: factor must be >= 1");
  const int h = static_cast<int>(in.rows());
  const int w = static_cast<int>(in.cols());
  Grid<T> out(h * factor, w * factor);
  if (mode == UpsampleMode::kNearest) {
    for (int y = 0; y < h * factor; ++y)
      for (int x = 0; x < w * factor; ++x) out(y, x) = in(y / factor, x / factor);
    return out;
  }
  auto source = [factor](int i, int n, int& i0, int& i1, double& frac) {
    double s = (i + 0.5) / factor - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<int>(std::floor(s));
    i1 = std::min(i0 + 1, n - 1);
    frac = s - i0;
  };
  for (int y = 0; y < h * factor; ++y) {
    int y0, y1;
    double fy;
    source(y, h, y0, y1, fy);
    for (int x = 0; x < w * factor; ++x) {
      int x0, x1;
      double fx;
      source(x, w, x0, x1, fx);
      const double top = (1.0 - fx) * in(y0, x0) + fx * in(y0, x1);
      const double bottom = (1.0 - fx) * in(y1, x0) + fx * in(y1, x1);
      out(y, x) = static_cast<T>((1.0 - fy) * top + fy * bottom);
    }
  }
  return out;
}

/// Upsamples then crops to exactly rows x cols (for sizes that are not a
/// multiple of the factor).
template <typename T>
Grid<T> upsample_to(const Grid<T>& in, int factor, int rows, int cols, UpsampleMode mode) {
  Grid<T> up = upsample_map(in, factor, mode);
  detail::require(up.rows() >= rows && up.cols() >= cols, "upsample_to: target larger than upsampled grid");
  return up.topLeftCorner(rows, cols);
}

}  // namespace ivos
