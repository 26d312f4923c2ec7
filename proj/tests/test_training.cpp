#include <doctest.h>

#include <numeric>

#include "ivos/experiment.hpp"

using namespace ivos;

namespace {

struct Fixture {
  std::vector<Video> videos;
  FeatureEmbeddingProvider provider{ExperimentConfig{}.embedding};
  std::vector<EncodedVideo> encoded;

  Fixture() {
    SyntheticConfig sc;
    sc.frames = 6;
    sc.height = 24;
    sc.width = 24;
    sc.seed = 3;
    videos = generate_corpus(sc, 2);
    encoded = encode_videos(videos, provider, 2);
  }
};

HeadParams<Real> fresh(int dim) { return HeadParams<Real>::init({1, 8, 3, false}, dim + 3, 5); }

TrainConfig small(int steps) {
  TrainConfig t = ExperimentConfig::default_stage(steps, 0.5);
  t.batch = 2;
  return t;
}

double mean(const std::vector<LossPoint>& t, std::size_t from, std::size_t to) {
  double s = 0;
  for (std::size_t i = from; i < to; ++i) s += t[i].loss;
  return s / static_cast<double>(to - from);
}

}  // namespace

TEST_CASE("zero steps leave the parameters unchanged") {
  Fixture f;
  const auto init = fresh(f.provider.dim());
  const auto a = train_stage1(init, f.encoded, small(0));
  CHECK(a.trace.empty());
  CHECK(a.params.projection == init.projection);
  const auto b = train_stage2(init, f.encoded, small(0));
  CHECK(b.params.layers[0].depthwise == init.layers[0].depthwise);
}

TEST_CASE("training is deterministic under a fixed seed") {
  Fixture f;
  const auto init = fresh(f.provider.dim());
  const auto a = train_stage1(init, f.encoded, small(20)), b = train_stage1(init, f.encoded, small(20));
  REQUIRE(a.trace.size() == 20);
  for (std::size_t i = 0; i < a.trace.size(); ++i) CHECK(a.trace[i].loss == b.trace[i].loss);
  const auto c = train_stage2(init, f.encoded, small(10), &a.params),
             d = train_stage2(init, f.encoded, small(10), &a.params);
  REQUIRE(c.trace.size() == 10);
  for (std::size_t i = 0; i < c.trace.size(); ++i) CHECK(c.trace[i].loss == d.trace[i].loss);
}

TEST_CASE("smoothed loss decreases") {
  Fixture f;
  const auto init = fresh(f.provider.dim());
  TrainConfig cfg = small(200);
  cfg.schedule = {1.0, 1.0, 0};  // fixed fraction so the losses are comparable
  const auto s1 = train_stage1(init, f.encoded, cfg);
  CHECK(mean(s1.trace, 180, 200) < mean(s1.trace, 0, 20));
  const auto s2 = train_stage2(init, f.encoded, cfg);
  CHECK(mean(s2.trace, 180, 200) < mean(s2.trace, 0, 20));
  CHECK(s1.params.all_finite());
}

TEST_CASE("videos shorter than three frames are skipped with a warning") {
  Fixture f;
  SyntheticConfig sc;
  sc.frames = 2;
  sc.height = 24;
  sc.width = 24;
  std::vector<Video> vids = f.videos;
  vids.push_back(generate_synthetic_video(sc, "short"));
  const auto enc = encode_videos(vids, f.provider, 2);
  const auto r = train_stage1(fresh(f.provider.dim()), enc, small(2));
  REQUIRE(r.warnings.size() == 1);
  CHECK(r.warnings[0].find("short") != std::string::npos);
}
