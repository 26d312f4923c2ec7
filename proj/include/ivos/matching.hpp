#pragma once

#include <algorithm>
#include <vector>

#include "ivos/embedding.hpp"
#include "ivos/raster.hpp"

namespace ivos {

struct MatchConfig {
  int window = 12;           ///< Chebyshev radius k, in embedding cells
  int local_downsample = 2;  ///< decimation applied to the local map only

  void validate() const {
    detail::require(window >= 1, "MatchConfig: window must be >= 1");
    detail::require(local_downsample >= 1, "MatchConfig: local_downsample must be >= 1");
  }
};

enum class PixelOrigin { kScribble, kPredicted };

/// Cells of one object on one frame, as a mask at embedding resolution.
struct PixelSet {
  int frame_index = 0;
  ObjectId object = 0;
  BinaryGrid cells;
  PixelOrigin origin = PixelOrigin::kScribble;

  bool empty() const { return cells.size() == 0 || !cells.any(); }
};

namespace detail {

inline std::vector<int> set_cells(const BinaryGrid& g) {
  std::vector<int> idx;
  for (Eigen::Index r = 0; r < g.rows(); ++r)
    for (Eigen::Index c = 0; c < g.cols(); ++c)
      if (g(r, c)) idx.push_back(static_cast<int>(r * g.cols() + c));
  return idx;
}

/// min over q in sources within Chebyshev `radius` of p, else 1.
template <typename Scalar>
Grid<Scalar> windowed_min(const EmbeddingField<Scalar>& current, const EmbeddingField<Scalar>& source,
                          const BinaryGrid& source_cells, int radius) {
  const int h = current.rows(), w = current.cols();
  Grid<Scalar> out = Grid<Scalar>::Ones(h, w);
  if (!source_cells.any()) return out;
  for (int r = 0; r < h; ++r) {
    const int r0 = std::max(0, r - radius), r1 = std::min(h - 1, r + radius);
    for (int c = 0; c < w; ++c) {
      const int c0 = std::max(0, c - radius), c1 = std::min(w - 1, c + radius);
      const auto ep = current.cell(r, c);
      Scalar best = 1;
      for (int qr = r0; qr <= r1; ++qr)
        for (int qc = c0; qc <= c1; ++qc)
          if (source_cells(qr, qc)) best = std::min(best, pixel_distance<Scalar>(ep, source.cell(qr, qc)));
      out(r, c) = best;
    }
  }
  return out;
}

}  // namespace detail

/// Nearest-neighbor distance from every cell of `current` to the reference
/// cells of `reference`, unwindowed. Throws EmptyReferenceError when the
/// reference set is empty.
template <typename Scalar>
Grid<Scalar> global_map(const EmbeddingField<Scalar>& current, const EmbeddingField<Scalar>& reference,
                        const PixelSet& ref_pixels) {
  detail::require(current.dim() == reference.dim() && current.stride() == reference.stride(),
                  "global_map: fields differ in dimension or stride");
  detail::require(ref_pixels.cells.rows() == reference.rows() && ref_pixels.cells.cols() == reference.cols(),
                  "global_map: reference pixel grid does not match reference field");
  const std::vector<int> refs = detail::set_cells(ref_pixels.cells);
  if (refs.empty()) throw EmptyReferenceError("global_map: empty reference pixel set");

  // Gather reference vectors contiguously.
  const int dim = current.dim();
  std::vector<Scalar> gathered(refs.size() * dim);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto v = reference.cell(refs[i] / reference.cols(), refs[i] % reference.cols());
    std::copy(v.begin(), v.end(), gathered.begin() + static_cast<std::ptrdiff_t>(i * dim));
  }

  Grid<Scalar> out(current.rows(), current.cols());
  for (int r = 0; r < current.rows(); ++r) {
    for (int c = 0; c < current.cols(); ++c) {
      const auto ep = current.cell(r, c);
      Scalar best = 1;
      for (std::size_t i = 0; i < refs.size(); ++i) {
        best = std::min(best, pixel_distance<Scalar>(ep, {gathered.data() + i * dim, static_cast<std::size_t>(dim)}));
        if (best == 0) break;
      }
      out(r, c) = best;
    }
  }
  return out;
}

/// Windowed nearest-neighbor distance to the previous frame's object cells.
/// Runs on grids decimated by cfg.local_downsample with radius ceil(k / f),
/// then nearest-upsamples back. Cells with no source in the window are 1.
template <typename Scalar>
Grid<Scalar> local_map(const EmbeddingField<Scalar>& current, const EmbeddingField<Scalar>& previous,
                       const PixelSet& prev_pixels, const MatchConfig& cfg) {
  cfg.validate();
  detail::require(current.same_shape(previous), "local_map: fields are not aligned");
  detail::require(prev_pixels.cells.rows() == previous.rows() && prev_pixels.cells.cols() == previous.cols(),
                  "local_map: previous pixel grid does not match field");
  const int f = cfg.local_downsample;
  if (f == 1) return detail::windowed_min(current, previous, prev_pixels.cells, cfg.window);
  const Grid<Scalar> low = detail::windowed_min(current.decimated(f), previous.decimated(f),
                                                decimate(prev_pixels.cells, f), ceil_div(cfg.window, f));
  return upsample_to(low, f, current.rows(), current.cols(), UpsampleMode::kNearest);
}

/// Windowed nearest-neighbor distance from every cell of the interactive
/// frame to its own scribbled cells, at full embedding resolution.
template <typename Scalar>
Grid<Scalar> augmented_map(const EmbeddingField<Scalar>& field, const PixelSet& scribble_pixels,
                           const MatchConfig& cfg) {
  cfg.validate();
  detail::require(scribble_pixels.cells.rows() == field.rows() && scribble_pixels.cells.cols() == field.cols(),
                  "augmented_map: scribble grid does not match field");
  return detail::windowed_min(field, field, scribble_pixels.cells, cfg.window);
}

}  // namespace ivos
