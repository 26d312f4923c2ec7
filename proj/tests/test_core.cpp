#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "ivos/image_io.hpp"
#include "ivos/raster.hpp"
#include "ivos/scribble_json.hpp"
#include "oracles.hpp"

using namespace ivos;

namespace {

ScribbleStroke stroke(ObjectId o, std::vector<Point> pts, int radius = 0, Polarity p = Polarity::kPositive) {
  return {o, p, std::move(pts), radius};
}

// Euclidean distance from (px, py) to segment ab.
double segment_distance(double px, double py, Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 == 0 ? 0 : ((px - a.x) * dx + (py - a.y) * dy) / len2;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - (a.x + t * dx), py - (a.y + t * dy));
}

}  // namespace

TEST_CASE("horizontal stroke of length 5 sets 5 cells") {
  const auto r = rasterize_scribbles({0, {stroke(1, {{2, 3}, {6, 3}})}}, 10, 10, 2);
  CHECK(r.positive[1].cast<int>().sum() == 5);
  CHECK(r.positive[1](3, 2) == 1);
  CHECK(r.positive[1](3, 6) == 1);
  CHECK(r.negative[1].cast<int>().sum() == 0);
}

TEST_CASE("empty stroke list rasterizes to zeros") {
  const auto r = rasterize_scribbles({0, {}}, 8, 8, 3);
  REQUIRE(r.object_count() == 3);
  for (int o = 0; o < 3; ++o) {
    CHECK(!r.positive[o].any());
    CHECK(!r.negative[o].any());
  }
}

TEST_CASE("diagonal stroke matches point-to-segment oracle") {
  const Point a{0, 0}, b{3, 3};
  const auto r = rasterize_scribbles({0, {stroke(1, {a, b})}}, 6, 6, 2);
  int expected = 0;
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) {
      const bool on = segment_distance(x, y, a, b) <= 0.5;
      expected += on;
      CHECK(static_cast<bool>(r.positive[1](y, x)) == on);
    }
  CHECK(expected == 4);
}

TEST_CASE("brush radius dilates with Chebyshev distance") {
  const auto r = rasterize_scribbles({0, {stroke(1, {{5, 5}, {5, 5}}, 2)}}, 11, 11, 2);
  CHECK(r.positive[1].cast<int>().sum() == 25);
  CHECK(r.positive[1](3, 3) == 1);
  CHECK(r.positive[1](2, 5) == 0);
}

TEST_CASE("negative strokes stay in their own channel") {
  const auto r = rasterize_scribbles({0, {stroke(1, {{0, 0}, {4, 0}}, 0, Polarity::kNegative)}}, 5, 5, 2);
  CHECK(!r.positive[1].any());
  CHECK(r.negative[1].cast<int>().sum() == 5);
}

TEST_CASE("validation names the offending stroke") {
  ScribbleSet s{0, {stroke(1, {{0, 0}, {1, 1}}), stroke(1, {{0, 0}, {10, 1}})}};
  try {
    validate_scribbles(s, 8, 8, 2);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("stroke 1") != std::string::npos);
  }
  CHECK_THROWS_AS(validate_scribbles({0, {stroke(1, {{0, 0}})}}, 8, 8, 2), ValidationError);
  CHECK_THROWS_AS(validate_scribbles({0, {stroke(2, {{0, 0}, {1, 1}})}}, 8, 8, 2), ValidationError);
  CHECK_THROWS_AS(validate_scribbles({0, {stroke(1, {{0, 0}, {1, 1}}, -1)}}, 8, 8, 2), ValidationError);
}

TEST_CASE("overlapping positive strokes of two objects are rejected") {
  ScribbleSet s{0, {stroke(1, {{0, 2}, {7, 2}}), stroke(2, {{3, 0}, {3, 7}})}};
  CHECK_THROWS_AS(rasterize_scribbles(s, 8, 8, 3), ValidationError);
}

TEST_CASE("to_stride_grid examples") {
  BinaryGrid g = BinaryGrid::Zero(16, 16);
  g(5, 5) = 1;
  const BinaryGrid s = to_stride_grid(g, 4);
  CHECK(s.rows() == 4);
  CHECK(s(1, 1) == 1);
  CHECK(s.cast<int>().sum() == 1);
  CHECK(to_stride_grid(BinaryGrid::Ones(10, 10), 4).all());
  CHECK(to_stride_grid(BinaryGrid::Ones(10, 10), 4).rows() == 3);
}

TEST_CASE("to_stride_grid equals block OR on random grids") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const BinaryGrid g = oracle::random_cells(rng, 16, 16, 0.05);
    const BinaryGrid s = to_stride_grid(g, 4);
    for (int by = 0; by < 4; ++by)
      for (int bx = 0; bx < 4; ++bx) {
        bool any = false;
        for (int y = 0; y < 4; ++y)
          for (int x = 0; x < 4; ++x) any = any || g(by * 4 + y, bx * 4 + x);
        CHECK(static_cast<bool>(s(by, bx)) == any);
      }
    CHECK((to_stride_grid(g, 1) == g).all());
  }
}

TEST_CASE("adding a stroke never clears a stride cell") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> coord(0, 23);
  ScribbleSet s{0, {}};
  BinaryGrid prev = BinaryGrid::Zero(6, 6);
  for (int i = 0; i < 15; ++i) {
    s.strokes.push_back(stroke(1, {{coord(rng), coord(rng)}, {coord(rng), coord(rng)}}, i % 3));
    const BinaryGrid now = to_stride_grid(rasterize_scribbles(s, 24, 24, 2).positive[1], 4);
    CHECK(((now.cast<int>() - prev.cast<int>()) >= 0).all());
    prev = now;
  }
}

TEST_CASE("upsample_map nearest and bilinear") {
  ScalarMap m(2, 2);
  m << 0, 1, 0, 1;
  const ScalarMap n = upsample_map(m, 2, UpsampleMode::kNearest);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) CHECK(n(y, x) == m(y / 2, x / 2));

  ScalarMap q(2, 2);
  q << 0.2, 0.9, 0.4, 0.1;
  const ScalarMap b = upsample_map(q, 2, UpsampleMode::kBilinear);
  // Weight of the second source row/column for each output index.
  const double w[4] = {0.0, 0.25, 0.75, 1.0};
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      const double top = (1 - w[x]) * q(0, 0) + w[x] * q(0, 1);
      const double bot = (1 - w[x]) * q(1, 0) + w[x] * q(1, 1);
      CHECK(b(y, x) == doctest::Approx((1 - w[y]) * top + w[y] * bot).epsilon(1e-12));
    }

  for (auto mode : {UpsampleMode::kNearest, UpsampleMode::kBilinear}) {
    const ScalarMap c = upsample_map(ScalarMap(ScalarMap::Constant(3, 5, 0.37)), 3, mode);
    CHECK((c == 0.37).all());
  }
}

TEST_CASE("upsample_map keeps the value range") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    ScalarMap m(1 + trial % 5, 1 + trial % 7);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = u(rng);
    for (auto mode : {UpsampleMode::kNearest, UpsampleMode::kBilinear}) {
      const ScalarMap up = upsample_map(m, 1 + trial % 4, mode);
      CHECK(up.minCoeff() >= m.minCoeff() - 1e-15);
      CHECK(up.maxCoeff() <= m.maxCoeff() + 1e-15);
    }
  }
}

TEST_CASE("scribble JSON round trip and schema") {
  ScribbleSet s{3, {stroke(1, {{1, 2}, {3, 4}, {5, 6}}, 2), stroke(0, {{0, 0}, {1, 0}}, 0, Polarity::kNegative)}};
  CHECK(parse_scribbles(dump_scribbles(s)) == s);
  const auto j = scribbles_to_json(s);
  CHECK(j["frame"] == 3);
  CHECK(j["strokes"][1]["polarity"] == "neg");
  CHECK(j["strokes"][0]["points"][2][1] == 6);
  CHECK_THROWS_AS(parse_scribbles(R"({"frame":0,"strokes":[{"object":1,"polarity":"up","radius":0,"points":[[0,0],[1,1]]}]})"),
                  ValidationError);
  CHECK_THROWS_AS(scribbles_from_json(nlohmann::json{{"strokes", nlohmann::json::array()}}), ValidationError);
}

TEST_CASE("PNG round trips") {
  RgbImage img(5, 7);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 37);
  CHECK(decode_png_rgb(encode_png_rgb(img)) == img);

  LabelMask m = LabelMask::filled(4, 6, 0, Resolution::kFull);
  m.labels(1, 2) = 3;
  m.labels(3, 5) = 7;
  CHECK((decode_png_labels(encode_png_labels(m)).labels == m.labels).all());
  CHECK_THROWS_AS(decode_png_rgb({1, 2, 3, 4}), FormatError);
}

TEST_CASE("frame directory ingestion") {
  const auto dir = std::filesystem::temp_directory_path() / "ivos_test_frames";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  for (int t = 0; t < 3; ++t) {
    RgbImage img(4, 6);
    img.at(0, 0, 0) = static_cast<std::uint8_t>(t);
    write_png(dir / frame_file_name(t), img);
  }
  const FrameSequence seq = load_frame_directory(dir);
  REQUIRE(seq.size() == 3);
  CHECK(seq.frames[2].at(0, 0, 0) == 2);
  CHECK(frame_file_name(12) == "00012.png");
  std::filesystem::remove_all(dir);
}

TEST_CASE("frame sequences must share dimensions") {
  FrameSequence s;
  CHECK_THROWS_AS(s.validate(), ContractViolation);
  s.frames = {RgbImage(4, 4), RgbImage(4, 5)};
  CHECK_THROWS_AS(s.validate(), ContractViolation);
}
