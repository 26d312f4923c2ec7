#include "ivos/embedding.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <random>

#include "ivos/image_io.hpp"

namespace ivos {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "MAEF I/O assumes a little-endian host");

FeatureEmbeddingProvider::FeatureEmbeddingProvider(FeatureEmbeddingConfig cfg) : cfg_(cfg) {
  detail::require(cfg_.dim >= 1, "FeatureEmbeddingProvider: dim must be >= 1");
  std::mt19937_64 rng(cfg_.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd gauss(cfg_.dim, kFeatureCount);
  for (int i = 0; i < gauss.rows(); ++i)
    for (int j = 0; j < gauss.cols(); ++j) gauss(i, j) = normal(rng);
  if (cfg_.dim >= kFeatureCount) {
    // Orthonormal columns: the projection is an isometry on feature space.
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
    projection_ = qr.householderQ() * Eigen::MatrixXd::Identity(cfg_.dim, kFeatureCount);
  } else {
    projection_ = gauss / std::sqrt(static_cast<double>(cfg_.dim));
  }
}

Eigen::MatrixXd FeatureEmbeddingProvider::cell_features(const RgbImage& frame, int stride) const {
  detail::require(stride >= 1, "encode: stride must be >= 1");
  const int h = ceil_div(frame.height, stride), w = ceil_div(frame.width, stride);
  // Mean color per cell in [0, 1].
  std::array<Eigen::ArrayXXd, 3> mean;
  for (auto& m : mean) m = Eigen::ArrayXXd::Zero(h, w);
  Eigen::ArrayXXd count = Eigen::ArrayXXd::Zero(h, w);
  for (int y = 0; y < frame.height; ++y)
    for (int x = 0; x < frame.width; ++x) {
      for (int c = 0; c < 3; ++c) mean[c](y / stride, x / stride) += frame.at(y, x, c);
      count(y / stride, x / stride) += 1.0;
    }
  for (auto& m : mean) m = m / (count * 255.0);

  Eigen::MatrixXd f(kFeatureCount, h * w);
  auto at = [&](const Eigen::ArrayXXd& g, int r, int c) {
    return g(std::clamp(r, 0, h - 1), std::clamp(c, 0, w - 1));
  };
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int i = r * w + c;
      f(0, i) = cfg_.bias;
      for (int ch = 0; ch < 3; ++ch) f(1 + ch, i) = cfg_.color_weight * (2.0 * mean[ch](r, c) - 1.0);
      f(4, i) = cfg_.position_weight * (w > 1 ? 2.0 * c / (w - 1) - 1.0 : 0.0);
      f(5, i) = cfg_.position_weight * (h > 1 ? 2.0 * r / (h - 1) - 1.0 : 0.0);
      for (int ch = 0; ch < 3; ++ch) {
        const auto& g = mean[ch];
        // 3x3 Sobel over cell means, edges clamped.
        const double gx = (at(g, r - 1, c + 1) + 2 * at(g, r, c + 1) + at(g, r + 1, c + 1)) -
                          (at(g, r - 1, c - 1) + 2 * at(g, r, c - 1) + at(g, r + 1, c - 1));
        const double gy = (at(g, r + 1, c - 1) + 2 * at(g, r + 1, c) + at(g, r + 1, c + 1)) -
                          (at(g, r - 1, c - 1) + 2 * at(g, r - 1, c) + at(g, r - 1, c + 1));
        f(6 + ch, i) = cfg_.gradient_weight * std::sqrt(gx * gx + gy * gy) / 4.0;
      }
    }
  }
  return f;
}

Embedding FeatureEmbeddingProvider::encode(const RgbImage& frame, int frame_index, int stride) const {
  const Eigen::MatrixXd features = cell_features(frame, stride);
  const int h = ceil_div(frame.height, stride), w = ceil_div(frame.width, stride);
  Embedding field(h, w, cfg_.dim, stride, frame_index);
  const Eigen::MatrixXd projected = projection_ * features;  // dim x cells
  for (int i = 0; i < h * w; ++i) {
    Eigen::VectorXd v = projected.col(i);
    const double n = v.norm();
    if (n > 0) v *= cfg_.gain / n;
    field.data().row(i) = v.cast<float>().cast<double>().transpose();
  }
  return field;
}

FileEmbeddingProvider::FileEmbeddingProvider(fs::path dir, int dim) : dir_(std::move(dir)), dim_(dim) {}

Embedding FileEmbeddingProvider::encode(const RgbImage& frame, int frame_index, int stride) const {
  const fs::path p = dir_ / frame_file_name(frame_index, ".maef");
  if (!fs::exists(p)) throw LoadError("no embedding entry for frame " + std::to_string(frame_index) + " at " + p.string());
  Embedding field = load_embeddings(p);
  if (field.dim() != dim_) throw FormatError("embedding file " + p.string() + " has unexpected dimension");
  if (field.stride() != stride) throw FormatError("embedding file " + p.string() + " has unexpected stride");
  if (field.rows() != ceil_div(frame.height, stride) || field.cols() != ceil_div(frame.width, stride))
    throw FormatError("embedding file " + p.string() + " does not match frame size");
  field.set_frame_index(frame_index);
  return field;
}

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.insert(out.end(), b, b + sizeof(T));
}

template <typename T>
T get(const std::vector<std::uint8_t>& in, std::size_t& off) {
  if (off + sizeof(T) > in.size()) throw FormatError("MAEF: truncated file");
  T v;
  std::memcpy(&v, in.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

constexpr std::size_t kHeaderBytes = 4 + 2 + 4 * 4;

}  // namespace

std::vector<std::uint8_t> encode_maef(const Embedding& field) {
  std::vector<std::uint8_t> out{'M', 'A', 'E', 'F'};
  out.reserve(kHeaderBytes + static_cast<std::size_t>(field.data().size()) * 4);
  put<std::uint16_t>(out, kMaefVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(field.rows()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(field.cols()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(field.dim()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(field.stride()));
  const auto& d = field.data();
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index j = 0; j < d.cols(); ++j) put<float>(out, static_cast<float>(d(i, j)));
  return out;
}

Embedding decode_maef(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeaderBytes) throw FormatError("MAEF: truncated header");
  if (std::memcmp(bytes.data(), "MAEF", 4) != 0) throw FormatError("MAEF: bad magic");
  std::size_t off = 4;
  const auto version = get<std::uint16_t>(bytes, off);
  if (version != kMaefVersion) throw FormatError("MAEF: unsupported version " + std::to_string(version));
  const auto h = get<std::uint32_t>(bytes, off);
  const auto w = get<std::uint32_t>(bytes, off);
  const auto dim = get<std::uint32_t>(bytes, off);
  const auto stride = get<std::uint32_t>(bytes, off);
  if (h == 0 || w == 0 || dim == 0 || stride == 0) throw FormatError("MAEF: zero dimension in header");
  const std::uint64_t count = static_cast<std::uint64_t>(h) * w * dim;
  if (bytes.size() != kHeaderBytes + count * 4) throw FormatError("MAEF: payload size does not match header");
  Embedding field(static_cast<int>(h), static_cast<int>(w), static_cast<int>(dim), static_cast<int>(stride));
  auto& d = field.data();
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index j = 0; j < d.cols(); ++j) d(i, j) = get<float>(bytes, off);
  return field;
}

void save_embeddings(const fs::path& path, const Embedding& field) { write_file(path, encode_maef(field)); }

Embedding load_embeddings(const fs::path& path) { return decode_maef(read_file(path)); }

void save_scalar_map(const fs::path& path, const ScalarMap& map, int stride) {
  Embedding f(static_cast<int>(map.rows()), static_cast<int>(map.cols()), 1, stride);
  f.data().col(0) = map.reshaped<Eigen::RowMajor>().matrix();
  save_embeddings(path, f);
}

ScalarMap load_scalar_map(const fs::path& path) {
  const Embedding f = load_embeddings(path);
  if (f.dim() != 1) throw FormatError("scalar map file " + path.string() + " has D != 1");
  ScalarMap m(f.rows(), f.cols());
  m.reshaped<Eigen::RowMajor>() = f.data().col(0).array();
  return m;
}

}  // namespace ivos
