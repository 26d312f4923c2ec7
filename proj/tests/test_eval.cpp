#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ivos/synthetic.hpp"
#include "oracles.hpp"

using namespace ivos;
namespace fs = std::filesystem;

namespace {

RoundCurve curve(std::vector<CurvePoint> pts) { return RoundCurve{std::move(pts)}; }

std::vector<RoundRecord> records(const std::string& video, const std::vector<double>& per_round) {
  std::vector<RoundRecord> out;
  for (std::size_t r = 0; r < per_round.size(); ++r)
    for (int f = 0; f < 2; ++f)
      for (int o = 1; o <= 2; ++o)
        out.push_back({video, static_cast<int>(r) + 1, f, o, per_round[r] + (o == 1 ? 0.05 : -0.05), 0, 10.0 * (r + 1)});
  return out;
}

}  // namespace

TEST_CASE("jaccard examples") {
  LabelMask a = LabelMask::filled(2, 2, 0, Resolution::kFull), b = a;
  a.labels(0, 0) = a.labels(0, 1) = 1;
  b.labels(0, 0) = b.labels(1, 0) = 1;
  CHECK(jaccard(a, b, 1) == doctest::Approx(1.0 / 3));
  CHECK(jaccard(a, a, 1) == 1.0);
  LabelMask c = LabelMask::filled(2, 2, 0, Resolution::kFull);
  c.labels(1, 1) = 1;
  CHECK(jaccard(a, c, 1) == 0.0);
  CHECK(jaccard(c, c, 2) == 1.0);
  CHECK_THROWS_AS(jaccard(a, LabelMask::filled(3, 2, 0, Resolution::kFull), 1), ContractViolation);
}

TEST_CASE("jaccard matches brute force and is symmetric") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 40; ++trial) {
    const int h = 1 + static_cast<int>(rng() % 64), w = 1 + static_cast<int>(rng() % 64);
    LabelMask a = LabelMask::filled(h, w, 0, Resolution::kFull), b = a;
    for (Eigen::Index i = 0; i < a.labels.size(); ++i) {
      a.labels(i) = static_cast<ObjectId>(rng() % 3);
      b.labels(i) = static_cast<ObjectId>(rng() % 3);
    }
    for (int o = 0; o < 3; ++o) {
      CHECK(jaccard(a, b, o) == doctest::Approx(oracle::jaccard(a, b, o)).epsilon(1e-15));
      CHECK(jaccard(a, b, o) == jaccard(b, a, o));
    }
    CHECK(mean_object_jaccard(a, b, 3) ==
          doctest::Approx((oracle::jaccard(a, b, 1) + oracle::jaccard(a, b, 2)) / 2).epsilon(1e-15));
  }
}

TEST_CASE("auc examples") {
  CHECK(auc(curve({{1, 0.4}, {2, 0.4}, {5, 0.4}})) == doctest::Approx(0.4));
  CHECK(auc(curve({{0, 0}, {1, 1}})) == doctest::Approx(0.5));
  CHECK(auc(curve({{1, 0.2}, {2, 0.6}, {3, 0.8}})) == doctest::Approx(0.55));
  CHECK_THROWS_AS(auc(curve({{1, 0.5}})), ContractViolation);
  CHECK_THROWS_AS(auc(curve({{2, 0.5}, {1, 0.6}})), ContractViolation);
}

TEST_CASE("j at budget") {
  const RoundCurve c = curve({{1, 0.2}, {2, 0.6}, {3, 0.8}});
  CHECK(j_at_budget(c, 2) == doctest::Approx(0.6));
  CHECK(j_at_budget(c, 1.5) == doctest::Approx(0.4));
  CHECK(j_at_budget(c, 60) == doctest::Approx(0.8));
  CHECK(j_at_budget(c, 0) == doctest::Approx(0.2));
}

TEST_CASE("auc and interpolation match brute force and stay in range") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<CurvePoint> pts;
    double b = u(rng);
    for (int i = 0; i < 2 + trial % 8; ++i) {
      pts.push_back({b, u(rng)});
      b += 0.01 + u(rng);
    }
    const RoundCurve c = curve(pts);
    double lo = 1, hi = 0;
    for (const auto& p : pts) {
      lo = std::min(lo, p.j);
      hi = std::max(hi, p.j);
    }
    const double a = auc(c);
    CHECK(a == doctest::Approx(oracle::auc(pts)).epsilon(1e-12));
    CHECK(a >= lo - 1e-12);
    CHECK(a <= hi + 1e-12);
    const double q = pts.front().budget + u(rng) * (pts.back().budget - pts.front().budget + 1);
    CHECK(j_at_budget(c, q) == doctest::Approx(oracle::j_at_budget(pts, q)).epsilon(1e-12));
  }
}

TEST_CASE("round curve averages objects, then frames, then videos") {
  std::vector<RoundRecord> recs = records("a", {0.3, 0.5});
  auto more = records("b", {0.7, 0.9});
  // Unequal frame counts per video make the averaging order observable.
  more.push_back({"b", 1, 2, 1, 0.0, 0, 10});
  more.push_back({"b", 1, 2, 2, 0.0, 0, 10});
  recs.insert(recs.end(), more.begin(), more.end());
  const RoundCurve c = round_curve(recs);
  const auto want = oracle::round_means(recs);
  REQUIRE(c.points.size() == 2);
  for (const auto& p : c.points) CHECK(p.j == doctest::Approx(want.at(static_cast<int>(p.budget))).epsilon(1e-14));
  const RoundCurve t = time_curve(recs);
  CHECK(t.points.size() == 2);
  CHECK(t.points[0].budget < t.points[1].budget);
}

TEST_CASE("records CSV round trip") {
  const fs::path p = fs::temp_directory_path() / "ivos_test_records.csv";
  const auto recs = records("vid,with comma", {0.25, 0.5, 0.75});
  write_records_csv(p, recs);
  CHECK(read_records_csv(p) == recs);
  fs::remove(p);
}

TEST_CASE("report writes curves, summary and a re-parsable plot") {
  const fs::path dir = fs::temp_directory_path() / "ivos_test_report";
  fs::remove_all(dir);
  CHECK_THROWS_AS(report({}, dir), ContractViolation);

  const auto one = report({{"full", records("a", {0.3, 0.5, 0.6})}}, dir);
  CHECK(one.size() == 1);
  CHECK(fs::exists(dir / "curves" / "full.csv"));
  fs::remove_all(dir);

  const std::vector<LabeledRun> runs{{"full", records("a", {0.3, 0.5, 0.6})},
                                     {"no-global", records("a", {0.3, 0.4, 0.45})}};
  const auto sums = report(runs, dir);
  REQUIRE(sums.size() == 2);
  const auto series = parse_svg_series(dir / "curves.svg");
  REQUIRE(series.size() == 2);
  for (const auto& run : runs) {
    const RoundCurve c = round_curve(run.records);
    const auto& got = series.at(run.label);
    REQUIRE(got.size() == c.points.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].budget == doctest::Approx(c.points[i].budget));
      CHECK(got[i].j == doctest::Approx(c.points[i].j).epsilon(1e-6));
    }
  }
  std::ifstream in(dir / "summary.json");
  const auto j = nlohmann::json::parse(in);
  CHECK(j.dump().find("no-global") != std::string::npos);
  CHECK(sums[0].auc == doctest::Approx(auc(round_curve(runs[0].records))));
  fs::remove_all(dir);
}

TEST_CASE("rise then plateau") {
  CHECK(monotone_then_flat({0.5, 0.6, 0.7, 0.7, 0.7}, 0.005));
  CHECK(monotone_then_flat({0.5, 0.6, 0.6}, 0.005));
  CHECK(monotone_then_flat({0.7, 0.7, 0.7}, 0.005));
  CHECK(monotone_then_flat({0.5, 0.6, 0.7, 0.698}, 0.005));
  CHECK_FALSE(monotone_then_flat({0.5, 0.6, 0.7, 0.6}, 0.005));
  CHECK_FALSE(monotone_then_flat({0.5, 0.4, 0.7, 0.7}, 0.005));
  CHECK(monotone_then_flat({}, 0.005));
}

TEST_CASE("synthetic videos are deterministic") {
  SyntheticConfig sc;
  sc.frames = 5;
  sc.height = 32;
  sc.width = 40;
  sc.objects = 2;
  sc.seed = 9;
  const Video a = generate_synthetic_video(sc, "a"), b = generate_synthetic_video(sc, "a");
  CHECK(a.frames.frames == b.frames.frames);
  for (int t = 0; t < 5; ++t) CHECK((a.gt[t].labels == b.gt[t].labels).all());
  CHECK(a.object_count == 3);
  sc.seed = 10;
  CHECK(generate_synthetic_video(sc, "a").frames.frames != a.frames.frames);
}

TEST_CASE("no motion gives identical masks") {
  SyntheticConfig sc;
  sc.frames = 4;
  sc.height = 32;
  sc.width = 32;
  sc.max_speed = 0;
  sc.max_spin = 0;
  const Video v = generate_synthetic_video(sc, "still");
  for (int t = 1; t < 4; ++t) CHECK((v.gt[t].labels == v.gt[0].labels).all());
  CHECK((v.gt[0].labels == 1).any());
}

TEST_CASE("occlusion follows painter's order") {
  int overlapping = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SyntheticConfig sc;
    sc.frames = 6;
    sc.height = 40;
    sc.width = 40;
    sc.objects = 3;
    sc.max_radius = 0.3;
    sc.seed = seed;
    std::vector<std::vector<BinaryGrid>> sil;
    const Video v = generate_synthetic_video(sc, "occ", &sil);
    REQUIRE(sil.size() == 6);
    for (int t = 0; t < 6; ++t)
      for (int y = 0; y < 40; ++y)
        for (int x = 0; x < 40; ++x) {
          int front = 0, covering = 0;
          for (int o = 1; o <= 3; ++o)
            if (sil[t][o - 1](y, x)) {
              front = o;
              ++covering;
            }
          overlapping += covering > 1;
          CHECK(v.gt[t].labels(y, x) == front);
        }
  }
  CHECK(overlapping > 0);
}

TEST_CASE("corpus directories round trip") {
  const fs::path dir = fs::temp_directory_path() / "ivos_test_corpus";
  fs::remove_all(dir);
  SyntheticConfig sc;
  sc.frames = 3;
  sc.height = 16;
  sc.width = 16;
  sc.objects = 2;
  const auto vids = generate_corpus(sc, 2);
  for (const auto& v : vids) write_video(dir, v);
  const auto back = read_corpus(dir);
  REQUIRE(back.size() == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK(back[i].name == vids[i].name);
    CHECK(back[i].frames.frames == vids[i].frames.frames);
    for (int t = 0; t < 3; ++t) CHECK((back[i].gt[t].labels == vids[i].gt[t].labels).all());
  }
  fs::remove_all(dir);
}

TEST_CASE("synthetic config validation") {
  SyntheticConfig sc;
  sc.objects = 0;
  CHECK_THROWS_AS(generate_synthetic_video(sc, "x"), ContractViolation);
  sc.objects = 1;
  sc.height = 0;
  CHECK_THROWS_AS(generate_synthetic_video(sc, "x"), ContractViolation);
}
