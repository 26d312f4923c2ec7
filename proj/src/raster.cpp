#include "ivos/raster.hpp"

#include <cstdlib>
#include <string>

namespace ivos {

void FrameSequence::validate() const {
  detail::require(!frames.empty(), "FrameSequence: at least one frame required");
  const int h = frames.front().height;
  const int w = frames.front().width;
  detail::require(h > 0 && w > 0, "FrameSequence: empty frame dimensions");
  for (const auto& f : frames) {
    detail::require(f.height == h && f.width == w, "FrameSequence: frames differ in size");
    detail::require(f.pixels.size() == static_cast<std::size_t>(h) * w * 3, "FrameSequence: pixel buffer size");
  }
}

std::vector<Point> line_points(Point a, Point b) {
  std::vector<Point> pts;
  int dx = std::abs(b.x - a.x), sx = a.x < b.x ? 1 : -1;
  int dy = -std::abs(b.y - a.y), sy = a.y < b.y ? 1 : -1;
  int err = dx + dy;
  Point p = a;
  for (;;) {
    pts.push_back(p);
    if (p == b) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      p.x += sx;
    }
    if (e2 <= dx) {
      err += dx;
      p.y += sy;
    }
  }
  return pts;
}

void validate_scribbles(const ScribbleSet& scribbles, int height, int width, int object_count) {
  for (std::size_t i = 0; i < scribbles.strokes.size(); ++i) {
    const auto& s = scribbles.strokes[i];
    const std::string where = "stroke " + std::to_string(i) + ": ";
    if (s.points.size() < 2) throw ValidationError(where + "needs at least 2 points");
    if (s.brush_radius < 0) throw ValidationError(where + "negative brush radius");
    if (static_cast<int>(s.object) >= object_count)
      throw ValidationError(where + "unknown object id " + std::to_string(s.object));
    for (const auto& p : s.points) {
      if (p.x < 0 || p.y < 0 || p.x >= width || p.y >= height)
        throw ValidationError(where + "point (" + std::to_string(p.x) + "," + std::to_string(p.y) +
                              ") out of bounds");
    }
  }
}

RasterizedScribbles rasterize_scribbles(const ScribbleSet& scribbles, int height, int width,
                                        int object_count) {
  validate_scribbles(scribbles, height, width, object_count);
  RasterizedScribbles out;
  out.height = height;
  out.width = width;
  out.positive.assign(object_count, BinaryGrid::Zero(height, width));
  out.negative.assign(object_count, BinaryGrid::Zero(height, width));

  for (const auto& s : scribbles.strokes) {
    BinaryGrid& target = s.polarity == Polarity::kPositive ? out.positive[s.object] : out.negative[s.object];
    const int rad = s.brush_radius;
    for (std::size_t k = 0; k + 1 < s.points.size(); ++k) {
      for (const Point& p : line_points(s.points[k], s.points[k + 1])) {
        const int y0 = std::max(0, p.y - rad), y1 = std::min(height - 1, p.y + rad);
        const int x0 = std::max(0, p.x - rad), x1 = std::min(width - 1, p.x + rad);
        target.block(y0, x0, y1 - y0 + 1, x1 - x0 + 1) = 1;
      }
    }
  }

  for (int a = 0; a < object_count; ++a) {
    for (int b = a + 1; b < object_count; ++b) {
      if ((out.positive[a] * out.positive[b]).any())
        throw ValidationError("positive scribbles of objects " + std::to_string(a) + " and " +
                              std::to_string(b) + " overlap");
    }
  }
  return out;
}

BinaryGrid to_stride_grid(const BinaryGrid& full, int stride) {
  detail::require(stride >= 1, "to_stride_grid: stride must be >= 1");
  const int H = static_cast<int>(full.rows()), W = static_cast<int>(full.cols());
  BinaryGrid out = BinaryGrid::Zero(ceil_div(H, stride), ceil_div(W, stride));
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (full(y, x)) out(y / stride, x / stride) = 1;
  return out;
}

LabelMask to_stride_labels(const LabelMask& full, int stride, int object_count) {
  detail::require(stride >= 1, "to_stride_labels: stride must be >= 1");
  const int H = full.rows(), W = full.cols();
  const int h = ceil_div(H, stride), w = ceil_div(W, stride);
  LabelMask out = LabelMask::filled(h, w, kBackground, Resolution::kEmbedding);
  std::vector<int> votes(object_count);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      std::fill(votes.begin(), votes.end(), 0);
      for (int y = r * stride; y < std::min(H, (r + 1) * stride); ++y)
        for (int x = c * stride; x < std::min(W, (c + 1) * stride); ++x) {
          const int id = full.labels(y, x);
          detail::require(id < object_count, "to_stride_labels: label exceeds object count");
          ++votes[id];
        }
      out.labels(r, c) = static_cast<ObjectId>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    }
  }
  return out;
}

std::pair<BinaryGrid, BinaryGrid> scribble_channels(const RasterizedScribbles& r, ObjectId o, int stride) {
  detail::require(o < r.object_count(), "scribble_channels: object out of range");
  return {to_stride_grid(r.positive[o], stride), to_stride_grid(r.negative[o], stride)};
}

}  // namespace ivos
