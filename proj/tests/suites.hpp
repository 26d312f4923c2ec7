#pragma once
// Randomized property suites. The unit tests run them small; the acceptance
// binary runs them at full size.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include "oracles.hpp"

namespace suites {

using namespace ivos;

struct Result {
  long cases = 0;
  long failures = 0;
  std::string first_failure;

  bool ok() const { return cases > 0 && failures == 0; }
  void fail(const std::string& what) {
    if (failures++ == 0) first_failure = what;
  }
  void check(bool cond, const std::string& what) {
    if (!cond) fail(what);
  }
};

// --- distance ---------------------------------------------------------------

inline Result distance_suite(long pairs, std::uint64_t seed) {
  Result res;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dim(1, 16);
  std::uniform_real_distribution<double> log_spread(-4.0, 1.2);
  for (long i = 0; i < pairs; ++i) {
    const int d = dim(rng);
    std::normal_distribution<double> n(0.0, std::pow(10.0, log_spread(rng)));
    std::vector<double> a(d), b(d);
    for (int j = 0; j < d; ++j) {
      a[j] = n(rng);
      b[j] = n(rng);
    }
    const double dab = pixel_distance<double>(a, b), dba = pixel_distance<double>(b, a);
    long double s = 0;
    for (int j = 0; j < d; ++j) s += (static_cast<long double>(a[j]) - b[j]) * (static_cast<long double>(a[j]) - b[j]);
    const double expect = static_cast<double>(oracle::distance(s));
    std::ostringstream where;
    where << "pair " << i << " s=" << static_cast<double>(s);
    res.check(dab == dba, "asymmetric at " + where.str());
    res.check(pixel_distance<double>(a, a) == 0.0, "nonzero self distance at " + where.str());
    res.check(dab >= 0.0 && dab < 1.0, "out of range at " + where.str());
    res.check(std::abs(dab - expect) <= 1e-9, "oracle mismatch at " + where.str());
    res.check(a == b || dab > 0.0, "zero for distinct vectors at " + where.str());

    // Strict growth wherever the exact step is resolvable in double; near 1
    // the spacing of doubles swallows it, so only non-decrease is required.
    const double s1 = static_cast<double>(s), s2 = s1 * 1.01 + 1e-9;
    const double d1 = distance_from_squared_norm(s1), d2 = distance_from_squared_norm(s2);
    const long double step = oracle::distance(s2) - oracle::distance(s1);
    if (d2 < kBelowOne<double> && step > 4 * std::numeric_limits<double>::epsilon())
      res.check(d2 > d1, "not strictly increasing at " + where.str());
    else
      res.check(d2 >= d1, "decreasing at " + where.str());
    ++res.cases;
  }
  return res;
}

// --- matching ---------------------------------------------------------------

inline bool identical(const ScalarMap& a, const ScalarMap& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a == b).all();
}

inline Result matching_suite(long instances, std::uint64_t seed) {
  Result res;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> side(1, 32), dim(1, 8);
  std::uniform_real_distribution<double> density(0.0, 0.15), spread(0.05, 1.0);
  const int windows[] = {1, 3, 12};
  for (long i = 0; i < instances; ++i) {
    const int rows = side(rng), cols = side(rng), d = dim(rng);
    const int k = windows[i % 3], f = 1 + static_cast<int>((i / 3) % 2);
    const double sp = spread(rng);
    const Embedding cur = oracle::random_field(rng, rows, cols, d, sp);
    const Embedding prev = oracle::random_field(rng, rows, cols, d, sp);
    const BinaryGrid cells = oracle::random_cells(rng, rows, cols, density(rng));
    const PixelSet px{0, 1, cells, PixelOrigin::kPredicted};
    const MatchConfig cfg{k, f};
    std::ostringstream where;
    where << "instance " << i << " (" << rows << "x" << cols << " D=" << d << " k=" << k << " f=" << f << ")";

    if (cells.any()) {
      const ScalarMap g = global_map(cur, prev, px);
      res.check(identical(g, oracle::global_map(cur, prev, cells)), "global differs from oracle at " + where.str());
      res.check(g.minCoeff() >= 0 && g.maxCoeff() <= 1, "global out of range at " + where.str());
    } else {
      bool threw = false;
      try {
        global_map(cur, prev, px);
      } catch (const EmptyReferenceError&) {
        threw = true;
      }
      res.check(threw, "empty reference accepted at " + where.str());
    }

    const ScalarMap l = local_map(cur, prev, px, cfg);
    res.check(identical(l, oracle::local_map(cur, prev, cells, k, f)), "local differs from oracle at " + where.str());
    const ScalarMap a = augmented_map(cur, px, cfg);
    res.check(identical(a, oracle::augmented_map(cur, cells, k)), "augmented differs from oracle at " + where.str());
    res.check(l.minCoeff() >= 0 && l.maxCoeff() <= 1 && a.minCoeff() >= 0 && a.maxCoeff() <= 1,
              "windowed map out of range at " + where.str());

    // Cells out of reach of every source are exactly 1.
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        bool near = false;
        for (int y = std::max(0, r - k); y <= std::min(rows - 1, r + k) && !near; ++y)
          for (int x = std::max(0, c - k); x <= std::min(cols - 1, c + k) && !near; ++x) near = cells(y, x);
        if (!near) res.check(a(r, c) == 1.0, "unreached augmented cell below 1 at " + where.str());
      }
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        if (cells(r, c)) res.check(a(r, c) == 0.0, "scribbled cell not 0 at " + where.str());

    // More reference pixels never raise any cell.
    BinaryGrid more = cells;
    more(static_cast<int>(rng() % rows), static_cast<int>(rng() % cols)) = 1;
    const PixelSet mpx{0, 1, more, PixelOrigin::kPredicted};
    res.check((local_map(cur, prev, mpx, cfg) <= l).all(), "local grew with more pixels at " + where.str());
    res.check((augmented_map(cur, mpx, cfg) <= a).all(), "augmented grew with more pixels at " + where.str());
    if (cells.any())
      res.check((global_map(cur, prev, mpx) <= global_map(cur, prev, px)).all(),
                "global grew with more pixels at " + where.str());

    // A singleton reference gives the direct distance field.
    BinaryGrid one = BinaryGrid::Zero(rows, cols);
    const int qr = static_cast<int>(rng() % rows), qc = static_cast<int>(rng() % cols);
    one(qr, qc) = 1;
    const ScalarMap gs = global_map(cur, prev, PixelSet{0, 1, one, PixelOrigin::kScribble});
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        res.check(gs(r, c) == pixel_distance<Real>(cur.cell(r, c), prev.cell(qr, qc)),
                  "singleton global differs at " + where.str());
    ++res.cases;
  }
  return res;
}

// --- memory -----------------------------------------------------------------

inline ScalarMap random_map(std::mt19937_64& rng, int rows, int cols) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ScalarMap m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = u(rng);
  return m;
}

/// Global: fold-min, monotone, idempotent, order independent. Local: every
/// read equals the enumeration oracle, and nothing outside the last R rounds
/// is ever returned. Cases cycle R through 1, 2 and larger values.
inline Result memory_suite(long cases, std::uint64_t seed) {
  Result res;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> small(1, 4);
  std::bernoulli_distribution coin(0.5), mostly(0.8);
  for (long i = 0; i < cases; ++i) {
    std::ostringstream where;
    where << "case " << i;
    const int rows = small(rng), cols = small(rng);

    // Global memory.
    {
      const int n = small(rng), objects = 1 + small(rng) % 3, writes = 1 + static_cast<int>(rng() % 6);
      GlobalMapMemory mem(n, objects, rows, cols), shuffled(n, objects, rows, cols);
      for (int t = 0; t < n; ++t)
        for (int o = 0; o < objects; ++o) res.check((mem.read(t, o) == 1.0).all(), "init not ones at " + where.str());
      std::vector<std::tuple<int, int, ScalarMap>> log;
      for (int w = 0; w < writes; ++w) log.emplace_back(static_cast<int>(rng() % n), static_cast<int>(rng() % objects),
                                                        random_map(rng, rows, cols));
      std::vector<ScalarMap> fold(static_cast<std::size_t>(n) * objects, ScalarMap::Ones(rows, cols));
      for (std::size_t w = 0; w < log.size(); ++w) {
        const auto& [t, o, m] = log[w];
        const ScalarMap before = mem.read(t, o);
        mem.write(t, o, static_cast<int>(w) + 1, m);
        fold[t * objects + o] = fold[t * objects + o].min(m);
        res.check((mem.read(t, o) <= before).all(), "global increased at " + where.str());
        const ScalarMap after = mem.read(t, o);
        mem.write(t, o, static_cast<int>(w) + 1, m);
        res.check(identical(mem.read(t, o), after), "global write not idempotent at " + where.str());
      }
      std::shuffle(log.begin(), log.end(), rng);
      for (const auto& [t, o, m] : log) shuffled.write(t, o, 1, m);
      for (int t = 0; t < n; ++t)
        for (int o = 0; o < objects; ++o) {
          res.check(identical(mem.read(t, o), fold[t * objects + o]), "global differs from fold at " + where.str());
          res.check(identical(shuffled.read(t, o), fold[t * objects + o]), "global order dependent at " + where.str());
        }
    }

    // Local memory.
    {
      const int n = 1 + static_cast<int>(rng() % 8), objects = 1 + small(rng) % 3;
      const int rounds = 1 + static_cast<int>(rng() % 6);
      const int R = i % 4 == 0 ? 1 : i % 4 == 1 ? 2 : small(rng);
      oracle::LocalHistory h;
      if (coin(rng)) h.retain = small(rng);
      LocalMapMemory mem(n, objects, h.retain);
      std::map<std::tuple<int, int, int>, ScalarMap> maps;
      for (int r = 1; r <= rounds; ++r) {
        const int ann = static_cast<int>(rng() % n);
        mem.begin_round(r, ann);
        h.annotated.push_back(ann);
        for (int t = 0; t < n; ++t)
          for (int o = 0; o < objects; ++o)
            if (mostly(rng)) {
              ScalarMap m = random_map(rng, rows, cols);
              mem.write(t, r, o, m);
              h.entries[{t, r, o}] = 1;
              maps[{t, r, o}] = std::move(m);
            }
        // Reads at every admissible current round after each begin.
        for (int cur = 1; cur <= r; ++cur)
          for (int t = 0; t < n; ++t)
            for (int o = 0; o < objects; ++o) {
              const auto got = mem.read(t, o, cur, ForgettingConfig{R});
              const auto want = oracle::read_local(h, t, o, cur, R);
              res.check(got.has_value() == want.has_value(), "local hit/miss differs from oracle at " + where.str());
              if (got && want) {
                res.check(got->round == *want, "local round differs from oracle at " + where.str());
                res.check(identical(got->map, maps.at({t, got->round, o})), "local map not verbatim at " + where.str());
                res.check(cur - got->round < R, "forgotten round returned at " + where.str());
              }
              if (R == 1 && got) res.check(got->round == cur, "R=1 read a past round at " + where.str());
            }
      }
      bool dup = false;
      if (mem.contains(0, rounds, 0)) {
        try {
          mem.write(0, rounds, 0, ScalarMap::Ones(rows, cols));
        } catch (const ContractViolation&) {
          dup = true;
        }
        res.check(dup, "duplicate local write accepted at " + where.str());
      }
    }
    ++res.cases;
  }
  return res;
}

// --- heads ------------------------------------------------------------------

inline HeadInput<double> random_input(std::mt19937_64& rng, int rows, int cols, int channels) {
  std::normal_distribution<double> n(0.0, 1.0);
  HeadInput<double> in{rows, cols, Eigen::MatrixXd(rows * cols, channels)};
  for (Eigen::Index i = 0; i < in.features.size(); ++i) in.features.data()[i] = n(rng);
  return in;
}

/// Randomizes biases, affine terms and statistics so every tensor matters.
inline void perturb(HeadParams<double>& p, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 0.3);
  std::uniform_real_distribution<double> pos(0.5, 2.0);
  for (auto& L : p.layers) {
    for (auto* m : {&L.bias, &L.shift, &L.running_mean})
      for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = n(rng);
    for (auto* m : {&L.scale, &L.running_var})
      for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = pos(rng);
  }
  p.projection_bias(0, 0) = n(rng);
}

inline double relative_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3}); }

/// Central differences (eps 1e-4) against backward() for every parameter
/// tensor and the inputs, then against the loss gradient w.r.t. logits.
/// Configurations cycle kernel size, depth, width, batch-norm mode and batch.
inline Result gradient_suite(long configs, std::uint64_t seed, double tol = 1e-4) {
  Result res;
  std::mt19937_64 rng(seed);
  const double eps = 1e-4;
  using Head = SegmentationHead<double>;
  for (long i = 0; i < configs; ++i) {
    HeadConfig cfg;
    cfg.layers = 1 + static_cast<int>(i % 3);
    cfg.channels = 2 + static_cast<int>(i % 4);
    cfg.kernel = 1 + 2 * static_cast<int>((i / 3) % 3);
    cfg.batch_norm = (i / 2) % 2 == 1;
    const HeadMode mode = cfg.batch_norm && i % 3 == 0 ? HeadMode::kInfer : HeadMode::kTrain;
    const int in_ch = 1 + static_cast<int>(rng() % 4), rows = 2 + static_cast<int>(rng() % 4),
              cols = 2 + static_cast<int>(rng() % 4), batch = 1 + static_cast<int>(i % 2);
    HeadParams<double> p = HeadParams<double>::init(cfg, in_ch, rng());
    perturb(p, rng);
    std::vector<HeadInput<double>> inputs;
    std::vector<Eigen::MatrixXd> weights;
    for (int s = 0; s < batch; ++s) {
      inputs.push_back(random_input(rng, rows, cols, in_ch));
      weights.push_back(random_input(rng, rows, cols, 1).features);
    }
    auto objective = [&](const HeadParams<double>& q, const std::vector<HeadInput<double>>& in) {
      const auto out = Head::forward(q, in, mode);
      double v = 0;
      for (std::size_t s = 0; s < out.size(); ++s) v += out[s].cwiseProduct(weights[s]).sum();
      return v;
    };
    Head::Cache cache;
    Head::forward(p, inputs, mode, &cache);
    std::vector<Eigen::MatrixXd> dx;
    const HeadParams<double> g = Head::backward(p, inputs, cache, weights, &dx);

    std::ostringstream where;
    where << "config " << i << " (layers=" << cfg.layers << " C=" << cfg.channels << " k=" << cfg.kernel
          << " bn=" << cfg.batch_norm << " train=" << (mode == HeadMode::kTrain) << " batch=" << batch << ")";

    std::vector<const Eigen::MatrixXd*> grads;
    g.for_each_tensor([&grads](const std::string&, const Eigen::MatrixXd& m) { grads.push_back(&m); });
    std::size_t ti = 0;
    HeadParams<double> q = p;
    q.for_each_tensor([&](const std::string& name, Eigen::MatrixXd& m) {
      const Eigen::MatrixXd& gm = *grads[ti++];
      for (Eigen::Index j = 0; j < m.size(); ++j) {
        const double keep = m.data()[j];
        m.data()[j] = keep + eps;
        const double up = objective(q, inputs);
        m.data()[j] = keep - eps;
        const double down = objective(q, inputs);
        m.data()[j] = keep;
        const double num = (up - down) / (2 * eps);
        if (relative_error(gm.data()[j], num) >= tol) {
          std::ostringstream msg;
          msg << name << "[" << j << "] analytic " << gm.data()[j] << " numeric " << num << " at " << where.str();
          res.fail(msg.str());
        }
      }
    });
    for (int s = 0; s < batch; ++s)
      for (Eigen::Index j = 0; j < inputs[s].features.size(); ++j) {
        auto in = inputs;
        const double keep = in[s].features.data()[j];
        in[s].features.data()[j] = keep + eps;
        const double up = objective(p, in);
        in[s].features.data()[j] = keep - eps;
        const double down = objective(p, in);
        const double num = (up - down) / (2 * eps);
        if (relative_error(dx[s].data()[j], num) >= tol) res.fail("input gradient at " + where.str());
      }

    // Loss gradient w.r.t. logits through the softmax.
    const int objects = 2 + static_cast<int>(i % 3);
    std::vector<Grid<double>> logits;
    std::normal_distribution<double> logit(0.0, 2.0);
    for (int o = 0; o < objects; ++o) {
      Grid<double> l(rows, cols);
      for (Eigen::Index j = 0; j < l.size(); ++j) l(j) = logit(rng);
      logits.push_back(std::move(l));
    }
    LabelMask target = LabelMask::filled(rows, cols, 0, Resolution::kEmbedding);
    for (Eigen::Index j = 0; j < target.labels.size(); ++j) target.labels(j) = static_cast<ObjectId>(rng() % objects);
    const double fraction = (i % 2) ? 1.0 : 0.5;
    const auto lr = bootstrapped_ce_loss(softmax_objects(logits), target, fraction);
    for (int o = 0; o < objects; ++o)
      for (Eigen::Index j = 0; j < logits[o].size(); ++j) {
        auto lp = logits;
        lp[o](j) += eps;
        const double up = bootstrapped_ce_loss(softmax_objects(lp), target, fraction).loss;
        lp[o](j) -= 2 * eps;
        const double down = bootstrapped_ce_loss(softmax_objects(lp), target, fraction).loss;
        if (relative_error(lr.grad_logits[o](j), (up - down) / (2 * eps)) >= tol) res.fail("logit gradient at " + where.str());
      }
    ++res.cases;
  }
  return res;
}

/// Softmax rows sum to one and fraction 1 equals the plain mean CE.
inline Result softmax_loss_suite(long cases, std::uint64_t seed) {
  Result res;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 5.0);
  for (long i = 0; i < cases; ++i) {
    const int objects = 2 + static_cast<int>(rng() % 4), rows = 1 + static_cast<int>(rng() % 6),
              cols = 1 + static_cast<int>(rng() % 6);
    std::vector<Grid<double>> logits(objects, Grid<double>(rows, cols));
    for (auto& l : logits)
      for (Eigen::Index j = 0; j < l.size(); ++j) l(j) = n(rng);
    LabelMask target = LabelMask::filled(rows, cols, 0, Resolution::kEmbedding);
    for (Eigen::Index j = 0; j < target.labels.size(); ++j) target.labels(j) = static_cast<ObjectId>(rng() % objects);
    const auto probs = softmax_objects(logits);
    double ce = 0;
    for (Eigen::Index j = 0; j < target.labels.size(); ++j) {
      double total = 0;
      for (const auto& l : logits) total += std::exp(l(j));
      double sum = 0;
      for (int o = 0; o < objects; ++o) {
        sum += probs[o](j);
        res.check(std::abs(probs[o](j) - std::exp(logits[o](j)) / total) <= 1e-12, "softmax differs from exp-normalize");
      }
      res.check(std::abs(sum - 1.0) <= 1e-6, "softmax does not sum to 1");
      ce += -std::log(probs[target.labels(j)](j));
    }
    ce /= static_cast<double>(target.labels.size());
    const auto full = bootstrapped_ce_loss(probs, target, 1.0);
    res.check(std::abs(full.loss - ce) <= 1e-12, "fraction 1 differs from mean CE");
    res.check(bootstrapped_ce_loss(probs, target, 0.3).loss >= full.loss - 1e-12, "hard subset below overall mean");
    ++res.cases;
  }
  return res;
}

}  // namespace suites
