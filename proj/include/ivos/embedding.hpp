#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>

#include "ivos/core.hpp"

namespace ivos {

/// Per-frame grid of D-dimensional embedding vectors at a given stride.
/// Storage is one row per cell (row-major cell order), so each cell vector is
/// contiguous.
template <typename Scalar>
class EmbeddingField {
 public:
  using Storage = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  EmbeddingField() = default;
  EmbeddingField(int rows, int cols, int dim, int stride, int frame_index = 0)
      : rows_(rows), cols_(cols), stride_(stride), frame_index_(frame_index), data_(Storage::Zero(rows * cols, dim)) {
    detail::require(rows >= 1 && cols >= 1 && dim >= 1, "EmbeddingField: dimensions must be positive");
    detail::require(stride >= 1, "EmbeddingField: stride must be >= 1");
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int cells() const { return rows_ * cols_; }
  int dim() const { return static_cast<int>(data_.cols()); }
  int stride() const { return stride_; }
  int frame_index() const { return frame_index_; }
  void set_frame_index(int t) { frame_index_ = t; }

  std::span<const Scalar> cell(int r, int c) const {
    return {data_.data() + static_cast<std::ptrdiff_t>(r * cols_ + c) * dim(), static_cast<std::size_t>(dim())};
  }
  std::span<Scalar> cell(int r, int c) {
    return {data_.data() + static_cast<std::ptrdiff_t>(r * cols_ + c) * dim(), static_cast<std::size_t>(dim())};
  }

  const Storage& data() const { return data_; }
  Storage& data() { return data_; }

  bool same_shape(const EmbeddingField& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && dim() == o.dim() && stride_ == o.stride_;
  }

  bool operator==(const EmbeddingField& o) const { return same_shape(o) && data_ == o.data_; }

  /// Keeps every `factor`-th cell in both directions.
  EmbeddingField decimated(int factor) const {
    detail::require(factor >= 1, "EmbeddingField::decimated: factor must be >= 1");
    EmbeddingField out(ceil_div(rows_, factor), ceil_div(cols_, factor), dim(), stride_ * factor, frame_index_);
    for (int r = 0; r < out.rows(); ++r)
      for (int c = 0; c < out.cols(); ++c) out.data_.row(r * out.cols() + c) = data_.row(r * factor * cols_ + c * factor);
    return out;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  int stride_ = 1;
  int frame_index_ = 0;
  Storage data_;
};

/// Largest representable value strictly below one.
template <typename Scalar>
constexpr Scalar kBelowOne = Scalar(1) - std::numeric_limits<Scalar>::epsilon() / 2;

/// 1 - 2 / (1 + exp(s)) written as tanh(s / 2), which keeps precision near 0,
/// then capped below 1 so the range stays [0, 1) once the sigmoid saturates.
template <typename Scalar>
Scalar distance_from_squared_norm(Scalar squared_norm) {
  return std::min(std::tanh(squared_norm / Scalar(2)), kBelowOne<Scalar>);
}

/// Normalized embedding distance between two pixels. The squared norm is
/// accumulated in index order so every caller gets bit-identical results.
template <typename Scalar>
Scalar pixel_distance(std::span<const Scalar> a, std::span<const Scalar> b) {
  if (a.size() != b.size()) throw ContractViolation("pixel_distance: dimension mismatch");
  Scalar s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Scalar d = a[i] - b[i];
    s += d * d;
  }
  return distance_from_squared_norm(s);
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar pixel_distance(const Eigen::DenseBase<DerivedA>& a, const Eigen::DenseBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> va = a.derived().reshaped();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> vb = b.derived().reshaped();
  return pixel_distance<Scalar>(std::span<const Scalar>(va.data(), va.size()),
                                std::span<const Scalar>(vb.data(), vb.size()));
}

using Embedding = EmbeddingField<Real>;

/// Source of per-frame embeddings. Implementations are deterministic and
/// read-only after construction, so encode() may be called concurrently.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual Embedding encode(const RgbImage& frame, int frame_index, int stride) const = 0;
  virtual int dim() const = 0;
};

struct FeatureEmbeddingConfig {
  int dim = 100;
  double gain = 1.0;
  std::uint64_t seed = 0x5eed;
  double color_weight = 1.0;
  double position_weight = 0.5;
  double gradient_weight = 0.5;
  double bias = 1.0;
};

/// Hand-crafted features per stride cell (bias, mean RGB, cell center, per
/// channel gradient magnitude) pushed through a fixed seeded projection,
/// L2-normalized, scaled by `gain`, and rounded to float precision so that
/// saving to the f32 file format is lossless.
class FeatureEmbeddingProvider final : public EmbeddingProvider {
 public:
  static constexpr int kFeatureCount = 9;

  explicit FeatureEmbeddingProvider(FeatureEmbeddingConfig cfg);

  Embedding encode(const RgbImage& frame, int frame_index, int stride) const override;
  int dim() const override { return cfg_.dim; }
  const FeatureEmbeddingConfig& config() const { return cfg_; }

  /// kFeatureCount x cells matrix of weighted raw features, before projection.
  Eigen::MatrixXd cell_features(const RgbImage& frame, int stride) const;
  const Eigen::MatrixXd& projection() const { return projection_; }

 private:
  FeatureEmbeddingConfig cfg_;
  Eigen::MatrixXd projection_;  // dim x kFeatureCount
};

/// Reads <dir>/<frame_file_name(t, ".maef")> for frame t.
class FileEmbeddingProvider final : public EmbeddingProvider {
 public:
  FileEmbeddingProvider(std::filesystem::path dir, int dim);

  Embedding encode(const RgbImage& frame, int frame_index, int stride) const override;
  int dim() const override { return dim_; }

 private:
  std::filesystem::path dir_;
  int dim_;
};

// Embedding file format: "MAEF", u16 version, u32 h, w, D, stride, then h*w*D
// little-endian f32 in (row, column, channel) order.

inline constexpr std::uint16_t kMaefVersion = 1;

void save_embeddings(const std::filesystem::path& path, const Embedding& field);
Embedding load_embeddings(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_maef(const Embedding& field);
Embedding decode_maef(const std::vector<std::uint8_t>& bytes);

/// D = 1 variant used for memory snapshots.
void save_scalar_map(const std::filesystem::path& path, const ScalarMap& map, int stride);
ScalarMap load_scalar_map(const std::filesystem::path& path);

}  // namespace ivos
