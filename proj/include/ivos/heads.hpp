#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "ivos/core.hpp"
#include "ivos/embedding.hpp"

namespace ivos {

/// Shape of a shallow segmentation head: `layers` depthwise-separable blocks
/// (depthwise k x k, pointwise to `channels`, normalization, ReLU) followed by
/// a 1x1 projection to a single logit channel.
struct HeadConfig {
  int layers = 2;
  int channels = 32;
  int kernel = 3;
  bool batch_norm = false;  ///< false: learned per-channel affine only

  void validate() const {
    detail::require(layers >= 1, "HeadConfig: layers must be >= 1");
    detail::require(channels >= 1, "HeadConfig: channels must be >= 1");
    detail::require(kernel >= 1 && kernel % 2 == 1, "HeadConfig: kernel must be odd");
  }
  bool operator==(const HeadConfig&) const = default;
};

template <typename Scalar>
struct HeadParams {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  struct Layer {
    Mat depthwise;       ///< (k*k) x Cin, row j = offset (j / k, j % k)
    Mat pointwise;       ///< Cout x Cin
    Mat bias;            ///< Cout x 1
    Mat scale;           ///< Cout x 1, normalization gain
    Mat shift;           ///< Cout x 1, normalization offset
    Mat running_mean;    ///< Cout x 1, batch-norm inference statistics
    Mat running_var;     ///< Cout x 1
  };

  HeadConfig config;
  int input_channels = 0;
  std::vector<Layer> layers;
  Mat projection;       ///< 1 x C
  Mat projection_bias;  ///< 1 x 1

  /// Seeded He-style uniform kernels, zero biases, unit scale.
  static HeadParams init(const HeadConfig& cfg, int input_channels, std::uint64_t seed) {
    cfg.validate();
    detail::require(input_channels >= 1, "HeadParams: input_channels must be >= 1");
    std::mt19937_64 rng(seed);
    auto uniform = [&rng](int rows, int cols, double fan_in) {
      const double bound = std::sqrt(6.0 / fan_in);
      std::uniform_real_distribution<double> u(-bound, bound);
      Mat m(rows, cols);
      for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) m(i, j) = static_cast<Scalar>(u(rng));
      return m;
    };
    HeadParams p;
    p.config = cfg;
    p.input_channels = input_channels;
    int cin = input_channels;
    const int kk = cfg.kernel * cfg.kernel;
    for (int l = 0; l < cfg.layers; ++l) {
      Layer layer;
      layer.depthwise = uniform(kk, cin, kk);
      layer.pointwise = uniform(cfg.channels, cin, cin);
      layer.bias = Mat::Zero(cfg.channels, 1);
      layer.scale = Mat::Ones(cfg.channels, 1);
      layer.shift = Mat::Zero(cfg.channels, 1);
      layer.running_mean = Mat::Zero(cfg.channels, 1);
      layer.running_var = Mat::Ones(cfg.channels, 1);
      p.layers.push_back(std::move(layer));
      cin = cfg.channels;
    }
    p.projection = uniform(1, cfg.channels, cfg.channels);
    p.projection_bias = Mat::Zero(1, 1);
    return p;
  }

  /// Same shapes, all zeros (gradient accumulators).
  HeadParams zeros_like() const {
    HeadParams z = *this;
    z.for_each_tensor([](const std::string&, Mat& m) { m.setZero(); }, true);
    return z;
  }

  /// Visits tensors in declaration order. Trainable tensors only unless
  /// `include_statistics` is set.
  template <typename F>
  void for_each_tensor(F&& f, bool include_statistics = false) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      f(p + "depthwise", layers[l].depthwise);
      f(p + "pointwise", layers[l].pointwise);
      f(p + "bias", layers[l].bias);
      f(p + "scale", layers[l].scale);
      f(p + "shift", layers[l].shift);
      if (include_statistics) {
        f(p + "running_mean", layers[l].running_mean);
        f(p + "running_var", layers[l].running_var);
      }
    }
    f(std::string("projection"), projection);
    f(std::string("projection_bias"), projection_bias);
  }
  template <typename F>
  void for_each_tensor(F&& f, bool include_statistics = false) const {
    const_cast<HeadParams*>(this)->for_each_tensor(
        [&f](const std::string& name, Mat& m) { f(name, static_cast<const Mat&>(m)); }, include_statistics);
  }

  bool all_finite() const {
    bool ok = true;
    for_each_tensor([&ok](const std::string&, const Mat& m) { ok = ok && m.allFinite(); }, true);
    return ok;
  }
};

/// One head input: rows x cols cells, features as (rows*cols) x C, cell-major
/// in row-major cell order, one column per channel.
template <typename Scalar>
struct HeadInput {
  int rows = 0;
  int cols = 0;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> features;
};

enum class HeadMode { kTrain, kInfer };

template <typename Scalar>
class SegmentationHead {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Params = HeadParams<Scalar>;
  static constexpr Scalar kBnEpsilon = Scalar(1e-5);

  struct SampleCache {
    std::vector<Mat> inputs;       ///< per layer input X
    std::vector<Mat> depthwise;    ///< per layer depthwise output
    std::vector<Mat> normalized;   ///< per layer pre-affine value (P or P-hat)
    std::vector<Mat> activations;  ///< per layer pre-ReLU Z
    Mat last;                      ///< final ReLU output
  };

  struct Cache {
    HeadMode mode = HeadMode::kInfer;
    std::vector<SampleCache> samples;
    std::vector<Mat> batch_mean;     ///< per layer, BN train mode
    std::vector<Mat> batch_inv_std;  ///< per layer
    std::vector<Mat> batch_var;
  };

  /// Logits per sample, (rows*cols) x 1. In train mode with batch norm the
  /// statistics span every sample of the batch.
  static std::vector<Mat> forward(const Params& p, const std::vector<HeadInput<Scalar>>& batch, HeadMode mode,
                                  Cache* cache = nullptr) {
    detail::require(!batch.empty(), "SegmentationHead::forward: empty batch");
    for (const auto& in : batch) {
      detail::require(in.features.cols() == p.input_channels, "SegmentationHead: input channel count mismatch");
      detail::require(in.features.rows() == static_cast<Eigen::Index>(in.rows) * in.cols,
                      "SegmentationHead: feature rows do not match grid");
    }
    const int k = p.config.kernel;
    const bool bn_batch = p.config.batch_norm && mode == HeadMode::kTrain;
    std::vector<Mat> x(batch.size());
    for (std::size_t s = 0; s < batch.size(); ++s) x[s] = batch[s].features;
    if (cache) {
      cache->mode = mode;
      cache->samples.assign(batch.size(), SampleCache{});
      cache->batch_mean.clear();
      cache->batch_inv_std.clear();
      cache->batch_var.clear();
    }

    for (const auto& layer : p.layers) {
      std::vector<Mat> pre(batch.size());
      std::vector<Mat> dw(batch.size());
      for (std::size_t s = 0; s < batch.size(); ++s) {
        dw[s] = depthwise_conv(x[s], batch[s].rows, batch[s].cols, layer.depthwise, k);
        pre[s] = dw[s] * layer.pointwise.transpose();
        pre[s].rowwise() += layer.bias.transpose().row(0);
      }
      Mat mean, inv_std, var;
      if (p.config.batch_norm) {
        if (bn_batch) {
          Eigen::Index count = 0;
          mean = Mat::Zero(1, layer.pointwise.rows());
          for (const auto& m : pre) {
            mean += m.colwise().sum();
            count += m.rows();
          }
          mean /= static_cast<Scalar>(count);
          var = Mat::Zero(1, mean.cols());
          for (const auto& m : pre) var += (m.rowwise() - mean.row(0)).array().square().matrix().colwise().sum();
          var /= static_cast<Scalar>(count);
        } else {
          mean = layer.running_mean.transpose();
          var = layer.running_var.transpose();
        }
        inv_std = (var.array() + kBnEpsilon).rsqrt().matrix();
        if (cache && bn_batch) {
          cache->batch_mean.push_back(mean);
          cache->batch_inv_std.push_back(inv_std);
          cache->batch_var.push_back(var);
        }
      }
      for (std::size_t s = 0; s < batch.size(); ++s) {
        Mat normalized = pre[s];
        if (p.config.batch_norm) {
          normalized.rowwise() -= mean.row(0);
          normalized = normalized.array().rowwise() * inv_std.row(0).array();
        }
        Mat z = normalized.array().rowwise() * layer.scale.transpose().row(0).array();
        z.rowwise() += layer.shift.transpose().row(0);
        Mat a = z.cwiseMax(Scalar(0));
        if (cache) {
          auto& sc = cache->samples[s];
          sc.inputs.push_back(std::move(x[s]));
          sc.depthwise.push_back(std::move(dw[s]));
          sc.normalized.push_back(std::move(normalized));
          sc.activations.push_back(std::move(z));
        }
        x[s] = std::move(a);
      }
    }

    std::vector<Mat> logits(batch.size());
    for (std::size_t s = 0; s < batch.size(); ++s) {
      logits[s] = x[s] * p.projection.transpose();
      logits[s].array() += p.projection_bias(0, 0);
      if (cache) cache->samples[s].last = std::move(x[s]);
    }
    return logits;
  }

  /// Gradients of sum_s <dlogits[s], logits[s]> w.r.t. every trainable tensor.
  /// When `input_grads` is given it receives d/d(input features) per sample.
  static Params backward(const Params& p, const std::vector<HeadInput<Scalar>>& batch, const Cache& cache,
                         const std::vector<Mat>& dlogits, std::vector<Mat>* input_grads = nullptr) {
    detail::require(dlogits.size() == batch.size() && cache.samples.size() == batch.size(),
                    "SegmentationHead::backward: batch size mismatch");
    const int k = p.config.kernel;
    const bool bn_batch = p.config.batch_norm && cache.mode == HeadMode::kTrain;
    Params g = p.zeros_like();

    std::vector<Mat> da(batch.size());
    for (std::size_t s = 0; s < batch.size(); ++s) {
      const auto& sc = cache.samples[s];
      g.projection += dlogits[s].transpose() * sc.last;
      g.projection_bias(0, 0) += dlogits[s].sum();
      da[s] = dlogits[s] * p.projection;
    }

    for (int l = static_cast<int>(p.layers.size()) - 1; l >= 0; --l) {
      const auto& layer = p.layers[l];
      auto& gl = g.layers[l];
      std::vector<Mat> dnorm(batch.size());
      for (std::size_t s = 0; s < batch.size(); ++s) {
        const auto& sc = cache.samples[s];
        const Mat dz = da[s].cwiseProduct((sc.activations[l].array() > Scalar(0)).template cast<Scalar>().matrix());
        gl.scale += (dz.cwiseProduct(sc.normalized[l])).colwise().sum().transpose();
        gl.shift += dz.colwise().sum().transpose();
        dnorm[s] = dz.array().rowwise() * layer.scale.transpose().row(0).array();
      }
      std::vector<Mat> dpre(batch.size());
      if (p.config.batch_norm && bn_batch) {
        // d/dP of batch-normalized values, with statistics over every sample.
        Eigen::Index count = 0;
        Mat sum_d = Mat::Zero(1, layer.pointwise.rows());
        Mat sum_dx = Mat::Zero(1, layer.pointwise.rows());
        for (std::size_t s = 0; s < batch.size(); ++s) {
          sum_d += dnorm[s].colwise().sum();
          sum_dx += dnorm[s].cwiseProduct(cache.samples[s].normalized[l]).colwise().sum();
          count += dnorm[s].rows();
        }
        const Mat& inv_std = cache.batch_inv_std[l];
        const Scalar n = static_cast<Scalar>(count);
        for (std::size_t s = 0; s < batch.size(); ++s) {
          Mat t = dnorm[s] * n;
          t.rowwise() -= sum_d.row(0);
          t -= (cache.samples[s].normalized[l].array().rowwise() * sum_dx.row(0).array()).matrix();
          dpre[s] = (t.array().rowwise() * (inv_std.row(0).array() / n)).matrix();
        }
      } else if (p.config.batch_norm) {
        for (std::size_t s = 0; s < batch.size(); ++s) {
          const Mat inv_std = (layer.running_var.transpose().array() + kBnEpsilon).rsqrt().matrix();
          dpre[s] = dnorm[s].array().rowwise() * inv_std.row(0).array();
        }
      } else {
        dpre = std::move(dnorm);
      }

      for (std::size_t s = 0; s < batch.size(); ++s) {
        const auto& sc = cache.samples[s];
        gl.pointwise += dpre[s].transpose() * sc.depthwise[l];
        gl.bias += dpre[s].colwise().sum().transpose();
        const Mat ddw = dpre[s] * layer.pointwise;
        Mat dx;
        depthwise_conv_backward(sc.inputs[l], ddw, batch[s].rows, batch[s].cols, layer.depthwise, k, gl.depthwise,
                                (l > 0 || input_grads) ? &dx : nullptr);
        da[s] = std::move(dx);
      }
    }
    if (input_grads) *input_grads = std::move(da);
    return g;
  }

  /// Running-statistics update after a batch-norm training forward.
  static void update_running_stats(Params& p, const Cache& cache, Scalar momentum) {
    if (!p.config.batch_norm || cache.batch_mean.size() != p.layers.size()) return;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      p.layers[l].running_mean = (1 - momentum) * p.layers[l].running_mean + momentum * cache.batch_mean[l].transpose();
      p.layers[l].running_var = (1 - momentum) * p.layers[l].running_var + momentum * cache.batch_var[l].transpose();
    }
  }

  /// Zero-padded "same" depthwise convolution. Column c of `x` is channel c.
  static Mat depthwise_conv(const Mat& x, int rows, int cols, const Mat& kernel, int k) {
    const int pad = k / 2;
    Mat out = Mat::Zero(x.rows(), x.cols());
    using RowGrid = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      Eigen::Map<const RowGrid> in(x.col(c).data(), rows, cols);
      Eigen::Map<RowGrid> o(out.col(c).data(), rows, cols);
      for (int dy = 0; dy < k; ++dy) {
        for (int dx = 0; dx < k; ++dx) {
          const int oy = dy - pad, ox = dx - pad;
          const int r0 = std::max(0, -oy), r1 = std::min(rows, rows - oy);
          const int c0 = std::max(0, -ox), c1 = std::min(cols, cols - ox);
          if (r1 <= r0 || c1 <= c0) continue;
          const Scalar w = kernel(dy * k + dx, c);
          o.block(r0, c0, r1 - r0, c1 - c0) += w * in.block(r0 + oy, c0 + ox, r1 - r0, c1 - c0);
        }
      }
    }
    return out;
  }

  static void depthwise_conv_backward(const Mat& x, const Mat& dout, int rows, int cols, const Mat& kernel, int k,
                                      Mat& dkernel, Mat* dx) {
    const int pad = k / 2;
    using RowGrid = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    if (dx) *dx = Mat::Zero(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      Eigen::Map<const RowGrid> in(x.col(c).data(), rows, cols);
      Eigen::Map<const RowGrid> g(dout.col(c).data(), rows, cols);
      for (int dy = 0; dy < k; ++dy) {
        for (int ddx = 0; ddx < k; ++ddx) {
          const int oy = dy - pad, ox = ddx - pad;
          const int r0 = std::max(0, -oy), r1 = std::min(rows, rows - oy);
          const int c0 = std::max(0, -ox), c1 = std::min(cols, cols - ox);
          if (r1 <= r0 || c1 <= c0) continue;
          const auto gb = g.block(r0, c0, r1 - r0, c1 - c0);
          dkernel(dy * k + ddx, c) += (gb * in.block(r0 + oy, c0 + ox, r1 - r0, c1 - c0)).sum();
          if (dx) {
            Eigen::Map<RowGrid> d(dx->col(c).data(), rows, cols);
            d.block(r0 + oy, c0 + ox, r1 - r0, c1 - c0) += kernel(dy * k + ddx, c) * gb;
          }
        }
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Input assembly

/// [embedding D | global | local | previous mask]
template <typename Scalar>
HeadInput<Scalar> propagation_input(const EmbeddingField<Scalar>& embedding, const Grid<Scalar>& global,
                                    const Grid<Scalar>& local, const BinaryGrid& prev_mask) {
  const int h = embedding.rows(), w = embedding.cols(), d = embedding.dim();
  auto same = [h, w](const auto& g) { return g.rows() == h && g.cols() == w; };
  detail::require(same(global) && same(local) && same(prev_mask), "propagation_input: map shape mismatch");
  HeadInput<Scalar> in{h, w, Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>(h * w, d + 3)};
  in.features.leftCols(d) = embedding.data();
  in.features.col(d) = global.template reshaped<Eigen::RowMajor>().matrix();
  in.features.col(d + 1) = local.template reshaped<Eigen::RowMajor>().matrix();
  in.features.col(d + 2) = prev_mask.template cast<Scalar>().template reshaped<Eigen::RowMajor>().matrix();
  return in;
}

/// [embedding D | positive scribbles | negative scribbles | previous-round mask]
template <typename Scalar>
HeadInput<Scalar> interaction_input(const EmbeddingField<Scalar>& embedding, const BinaryGrid& positive,
                                    const BinaryGrid& negative, const BinaryGrid& prev_round_mask) {
  const int h = embedding.rows(), w = embedding.cols(), d = embedding.dim();
  auto same = [h, w](const auto& g) { return g.rows() == h && g.cols() == w; };
  detail::require(same(positive) && same(negative) && same(prev_round_mask), "interaction_input: map shape mismatch");
  HeadInput<Scalar> in{h, w, Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>(h * w, d + 3)};
  in.features.leftCols(d) = embedding.data();
  in.features.col(d) = positive.template cast<Scalar>().template reshaped<Eigen::RowMajor>().matrix();
  in.features.col(d + 1) = negative.template cast<Scalar>().template reshaped<Eigen::RowMajor>().matrix();
  in.features.col(d + 2) = prev_round_mask.template cast<Scalar>().template reshaped<Eigen::RowMajor>().matrix();
  return in;
}

template <typename Scalar>
Grid<Scalar> logits_to_grid(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& logits, int rows, int cols) {
  Grid<Scalar> g(rows, cols);
  g.template reshaped<Eigen::RowMajor>() = logits.col(0).array();
  return g;
}

template <typename Scalar>
Grid<Scalar> propagation_forward(const HeadParams<Scalar>& params, const EmbeddingField<Scalar>& embedding,
                                 const Grid<Scalar>& global, const Grid<Scalar>& local, const BinaryGrid& prev_mask) {
  const auto in = propagation_input(embedding, global, local, prev_mask);
  const auto out = SegmentationHead<Scalar>::forward(params, {in}, HeadMode::kInfer);
  return logits_to_grid<Scalar>(out[0], in.rows, in.cols);
}

template <typename Scalar>
Grid<Scalar> interaction_forward(const HeadParams<Scalar>& params, const EmbeddingField<Scalar>& embedding,
                                 const BinaryGrid& positive, const BinaryGrid& negative,
                                 const BinaryGrid& prev_round_mask) {
  const auto in = interaction_input(embedding, positive, negative, prev_round_mask);
  const auto out = SegmentationHead<Scalar>::forward(params, {in}, HeadMode::kInfer);
  return logits_to_grid<Scalar>(out[0], in.rows, in.cols);
}

// ---------------------------------------------------------------------------
// Softmax over objects and the bootstrapped loss

/// Per-pixel softmax across the object stack, max-subtracted.
template <typename Scalar>
std::vector<Grid<Scalar>> softmax_objects(const std::vector<Grid<Scalar>>& logits) {
  detail::require(!logits.empty(), "softmax_objects: no channels");
  for (const auto& l : logits)
    detail::require(l.rows() == logits[0].rows() && l.cols() == logits[0].cols(), "softmax_objects: shape mismatch");
  Grid<Scalar> mx = logits[0];
  for (std::size_t o = 1; o < logits.size(); ++o) mx = mx.max(logits[o]);
  std::vector<Grid<Scalar>> probs(logits.size());
  Grid<Scalar> total = Grid<Scalar>::Zero(mx.rows(), mx.cols());
  for (std::size_t o = 0; o < logits.size(); ++o) {
    probs[o] = (logits[o] - mx).exp();
    total += probs[o];
  }
  for (auto& p : probs) p /= total;
  return probs;
}

/// Argmax across the stack; ties go to the lower object id.
template <typename Scalar>
Grid<ObjectId> argmax_objects(const std::vector<Grid<Scalar>>& scores) {
  detail::require(!scores.empty(), "argmax_objects: no channels");
  Grid<ObjectId> out = Grid<ObjectId>::Zero(scores[0].rows(), scores[0].cols());
  Grid<Scalar> best = scores[0];
  for (std::size_t o = 1; o < scores.size(); ++o)
    for (Eigen::Index i = 0; i < best.size(); ++i)
      if (scores[o](i) > best(i)) {
        best(i) = scores[o](i);
        out(i) = static_cast<ObjectId>(o);
      }
  return out;
}

template <typename Scalar>
struct LossResult {
  Scalar loss = 0;
  std::vector<Grid<Scalar>> grad_logits;  ///< one per object
  std::size_t selected = 0;
};

/// Cross-entropy averaged over the ceil(fraction * N) hardest pixels. The
/// gradient is w.r.t. the logits that produced `probs` and is zero outside
/// the selected pixels.
template <typename Scalar>
LossResult<Scalar> bootstrapped_ce_loss(const std::vector<Grid<Scalar>>& probs, const LabelMask& target,
                                        double fraction) {
  detail::require(fraction > 0.0 && fraction <= 1.0, "bootstrapped_ce_loss: fraction must be in (0, 1]");
  detail::require(target.labels.size() > 0, "bootstrapped_ce_loss: empty target");
  detail::require(!probs.empty(), "bootstrapped_ce_loss: no channels");
  const Eigen::Index n = target.labels.size();
  for (const auto& p : probs)
    detail::require(p.rows() == target.rows() && p.cols() == target.cols(), "bootstrapped_ce_loss: shape mismatch");

  std::vector<Scalar> pixel_loss(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = target.labels(i);
    detail::require(y < static_cast<int>(probs.size()), "bootstrapped_ce_loss: label outside object stack");
    pixel_loss[i] = -std::log(std::max(probs[y](i), std::numeric_limits<Scalar>::min()));
  }
  const auto keep = static_cast<std::size_t>(
      std::clamp<double>(std::ceil(fraction * static_cast<double>(n) - 1e-9), 1.0, static_cast<double>(n)));
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&pixel_loss](Eigen::Index a, Eigen::Index b) { return pixel_loss[a] > pixel_loss[b]; });

  LossResult<Scalar> res;
  res.selected = keep;
  res.grad_logits.assign(probs.size(), Grid<Scalar>::Zero(target.rows(), target.cols()));
  const Scalar inv = Scalar(1) / static_cast<Scalar>(keep);
  Scalar sum = 0;
  for (std::size_t j = 0; j < keep; ++j) {
    const Eigen::Index i = order[j];
    sum += pixel_loss[i];
    const int y = target.labels(i);
    for (std::size_t o = 0; o < probs.size(); ++o)
      res.grad_logits[o](i) = (probs[o](i) - (static_cast<int>(o) == y ? Scalar(1) : Scalar(0))) * inv;
  }
  res.loss = sum * inv;
  return res;
}

/// Hardest-pixel fraction ramped linearly from start to end over ramp_steps.
struct LossSchedule {
  double start_fraction = 1.0;
  double end_fraction = 0.15;
  int ramp_steps = 50000;

  void validate() const {
    detail::require(start_fraction > 0 && start_fraction <= 1 && end_fraction > 0 && end_fraction <= 1,
                    "LossSchedule: fractions must be in (0, 1]");
    detail::require(end_fraction <= start_fraction, "LossSchedule: end fraction above start");
    detail::require(ramp_steps >= 0, "LossSchedule: negative ramp");
  }

  double fraction(int step) const {
    if (ramp_steps == 0) return end_fraction;
    const double t = std::clamp(static_cast<double>(step) / ramp_steps, 0.0, 1.0);
    return start_fraction + (end_fraction - start_fraction) * t;
  }
};

/// p <- p - lr * g over every trainable tensor. Throws TrainingAbort on
/// non-finite gradients, leaving params untouched.
template <typename Scalar>
void sgd_step(HeadParams<Scalar>& params, const HeadParams<Scalar>& grads, Scalar lr) {
  bool finite = true;
  grads.for_each_tensor([&finite](const std::string&, const auto& g) { finite = finite && g.allFinite(); });
  if (!finite) throw TrainingAbort("sgd_step: non-finite gradient");
  std::vector<const typename HeadParams<Scalar>::Mat*> g;
  grads.for_each_tensor([&g](const std::string&, const auto& m) { g.push_back(&m); });
  std::size_t i = 0;
  params.for_each_tensor([&](const std::string& name, auto& m) {
    detail::require(m.rows() == g[i]->rows() && m.cols() == g[i]->cols(), "sgd_step: shape mismatch at " + name);
    m -= lr * *g[i];
    ++i;
  });
}

}  // namespace ivos
