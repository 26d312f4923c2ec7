#pragma once
// Brute-force reference implementations shared by the unit tests and the
// acceptance binary. Written for clarity, not speed; none of them calls the
// library routine it checks.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <optional>
#include <random>
#include <tuple>
#include <vector>

#include "ivos/embedding.hpp"
#include "ivos/heads.hpp"
#include "ivos/matching.hpp"
#include "ivos/memory.hpp"
#include "ivos/metrics.hpp"

namespace oracle {

using namespace ivos;

/// 1 - 2 / (1 + exp(s)) in extended precision.
inline long double distance(long double squared_norm) { return 1.0L - 2.0L / (1.0L + std::exp(squared_norm)); }

inline Embedding random_field(std::mt19937_64& rng, int rows, int cols, int dim, double spread = 1.0) {
  std::normal_distribution<double> n(0.0, spread);
  Embedding e(rows, cols, dim, 1);
  for (Eigen::Index i = 0; i < e.data().size(); ++i) e.data().data()[i] = n(rng);
  return e;
}

inline BinaryGrid random_cells(std::mt19937_64& rng, int rows, int cols, double density) {
  std::bernoulli_distribution b(density);
  BinaryGrid g(rows, cols);
  for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = b(rng) ? 1 : 0;
  return g;
}

inline ScalarMap global_map(const Embedding& cur, const Embedding& ref, const BinaryGrid& cells) {
  ScalarMap out(cur.rows(), cur.cols());
  for (int r = 0; r < cur.rows(); ++r)
    for (int c = 0; c < cur.cols(); ++c) {
      std::vector<Real> d;
      for (int y = 0; y < ref.rows(); ++y)
        for (int x = 0; x < ref.cols(); ++x)
          if (cells(y, x)) d.push_back(pixel_distance<Real>(cur.cell(r, c), ref.cell(y, x)));
      out(r, c) = *std::min_element(d.begin(), d.end());
    }
  return out;
}

/// Every source cell that survives decimation by f and lies within
/// ceil(k / f) decimated cells of p's decimated cell.
inline ScalarMap local_map(const Embedding& cur, const Embedding& prev, const BinaryGrid& cells, int k, int f) {
  const int radius = (k + f - 1) / f;
  ScalarMap out(cur.rows(), cur.cols());
  for (int r = 0; r < cur.rows(); ++r)
    for (int c = 0; c < cur.cols(); ++c) {
      const int lr = r / f, lc = c / f;
      Real best = 1;
      for (int y = 0; y < prev.rows(); ++y)
        for (int x = 0; x < prev.cols(); ++x) {
          if (!cells(y, x) || y % f || x % f) continue;
          if (std::max(std::abs(y / f - lr), std::abs(x / f - lc)) > radius) continue;
          best = std::min(best, pixel_distance<Real>(cur.cell(lr * f, lc * f), prev.cell(y, x)));
        }
      out(r, c) = best;
    }
  return out;
}

inline ScalarMap augmented_map(const Embedding& field, const BinaryGrid& cells, int k) {
  ScalarMap out(field.rows(), field.cols());
  for (int r = 0; r < field.rows(); ++r)
    for (int c = 0; c < field.cols(); ++c) {
      Real best = 1;
      for (int y = 0; y < field.rows(); ++y)
        for (int x = 0; x < field.cols(); ++x)
          if (cells(y, x) && std::max(std::abs(y - r), std::abs(x - c)) <= k)
            best = std::min(best, pixel_distance<Real>(field.cell(r, c), field.cell(y, x)));
      out(r, c) = best;
    }
  return out;
}

/// Local-memory history: which (t, round, o) entries exist and which frame
/// each round annotated.
struct LocalHistory {
  std::vector<int> annotated;             // [round - 1]
  std::map<std::tuple<int, int, int>, int> entries;  // (t, round, o) -> tag
  std::optional<int> retain;
};

/// Enumerates every admissible round and picks the nearest annotated frame,
/// newest round on ties.
inline std::optional<int> read_local(const LocalHistory& h, int t, int o, int current_round, int R) {
  const int latest = static_cast<int>(h.annotated.size());
  std::vector<std::pair<int, int>> cands;  // (distance, -round)
  for (int r = 1; r <= current_round; ++r) {
    if (current_round - r >= R) continue;
    if (h.retain && latest - r >= *h.retain) continue;
    if (!h.entries.count({t, r, o})) continue;
    cands.push_back({std::abs(t - h.annotated[r - 1]), -r});
  }
  if (cands.empty()) return std::nullopt;
  return -std::min_element(cands.begin(), cands.end())->second;
}

/// Direct nested-loop forward pass of a head on one input.
inline std::vector<double> head_forward(const HeadParams<double>& p, const HeadInput<double>& in) {
  const int h = in.rows, w = in.cols, k = p.config.kernel, pad = k / 2;
  std::vector<std::vector<double>> x(static_cast<std::size_t>(h) * w);
  for (int i = 0; i < h * w; ++i)
    for (int c = 0; c < in.features.cols(); ++c) x[i].push_back(in.features(i, c));
  for (const auto& L : p.layers) {
    const int cin = static_cast<int>(L.depthwise.cols()), cout = static_cast<int>(L.pointwise.rows());
    std::vector<std::vector<double>> next(x.size(), std::vector<double>(cout));
    for (int r = 0; r < h; ++r)
      for (int col = 0; col < w; ++col) {
        std::vector<double> dw(cin, 0.0);
        for (int c = 0; c < cin; ++c)
          for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx) {
              const int y = r + dy - pad, xx = col + dx - pad;
              if (y < 0 || y >= h || xx < 0 || xx >= w) continue;
              dw[c] += L.depthwise(dy * k + dx, c) * x[y * w + xx][c];
            }
        for (int j = 0; j < cout; ++j) {
          double v = L.bias(j, 0);
          for (int c = 0; c < cin; ++c) v += L.pointwise(j, c) * dw[c];
          if (p.config.batch_norm) v = (v - L.running_mean(j, 0)) / std::sqrt(L.running_var(j, 0) + 1e-5);
          v = L.scale(j, 0) * v + L.shift(j, 0);
          next[r * w + col][j] = std::max(0.0, v);
        }
      }
    x = std::move(next);
  }
  std::vector<double> out;
  for (const auto& v : x) {
    double s = p.projection_bias(0, 0);
    for (std::size_t j = 0; j < v.size(); ++j) s += p.projection(0, static_cast<Eigen::Index>(j)) * v[j];
    out.push_back(s);
  }
  return out;
}

inline double jaccard(const LabelMask& a, const LabelMask& b, int o) {
  int inter = 0, uni = 0;
  for (int r = 0; r < a.rows(); ++r)
    for (int c = 0; c < a.cols(); ++c) {
      const bool x = a.labels(r, c) == o, y = b.labels(r, c) == o;
      inter += x && y;
      uni += x || y;
    }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

/// Sum of trapezoids divided by the span.
inline double auc(const std::vector<CurvePoint>& pts) {
  double area = 0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    area += (pts[i].budget - pts[i - 1].budget) * (pts[i].j + pts[i - 1].j) / 2;
  return area / (pts.back().budget - pts.front().budget);
}

inline double j_at_budget(const std::vector<CurvePoint>& pts, double b) {
  if (b <= pts.front().budget) return pts.front().j;
  for (std::size_t i = 1; i < pts.size(); ++i)
    if (b <= pts[i].budget) {
      const double t = (b - pts[i - 1].budget) / (pts[i].budget - pts[i - 1].budget);
      return pts[i - 1].j + t * (pts[i].j - pts[i - 1].j);
    }
  return pts.back().j;
}

/// Mean J per round: objects, then frames, then videos.
inline std::map<int, double> round_means(const std::vector<RoundRecord>& recs) {
  std::map<int, std::map<std::string, std::map<int, std::vector<double>>>> g;
  for (const auto& r : recs) g[r.round][r.video][r.frame].push_back(r.jaccard);
  std::map<int, double> out;
  for (const auto& [round, videos] : g) {
    double vs = 0;
    for (const auto& [v, frames] : videos) {
      double fs = 0;
      for (const auto& [f, js] : frames) {
        double s = 0;
        for (double j : js) s += j;
        fs += s / js.size();
      }
      vs += fs / frames.size();
    }
    out[round] = vs / videos.size();
  }
  return out;
}

}  // namespace oracle
