#include "ivos/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "ivos/image_io.hpp"

namespace ivos {

void SyntheticConfig::validate() const {
  detail::require(frames >= 1 && height >= 8 && width >= 8, "SyntheticConfig: bad dimensions");
  detail::require(objects >= 1 && objects <= 254, "SyntheticConfig: objects must be in [1, 254]");
  detail::require(min_radius > 0 && min_radius <= max_radius, "SyntheticConfig: bad radius range");
  detail::require(max_speed >= 0 && max_spin >= 0, "SyntheticConfig: negative motion");
}

namespace {

struct Shape {
  std::vector<double> angles;  // vertex angles, sorted
  std::vector<double> radii;
  double cx, cy, vx, vy, rot, spin;
  double color[3];
};

bool inside_convex(const std::vector<std::pair<double, double>>& poly, double x, double y) {
  // Vertices are counter-clockwise in angle order (y down flips orientation,
  // so accept a consistent sign either way).
  int sign = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto [x0, y0] = poly[i];
    const auto [x1, y1] = poly[(i + 1) % poly.size()];
    const double cross = (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0);
    const int s = cross > 0 ? 1 : (cross < 0 ? -1 : 0);
    if (s == 0) continue;
    if (sign == 0) sign = s;
    else if (s != sign) return false;
  }
  return true;
}

}  // namespace

Video generate_synthetic_video(const SyntheticConfig& cfg, const std::string& name,
                               std::vector<std::vector<BinaryGrid>>* silhouettes) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double two_pi = 2 * std::numbers::pi;
  const double scale = std::min(cfg.height, cfg.width);

  // Background texture: sum of two sinusoids over a base color.
  double bg[3], fx[2], fy[2], ph[2];
  for (double& c : bg) c = 60 + 80 * u(rng);
  for (int i = 0; i < 2; ++i) {
    fx[i] = (0.5 + 3 * u(rng)) * two_pi / cfg.width;
    fy[i] = (0.5 + 3 * u(rng)) * two_pi / cfg.height;
    ph[i] = two_pi * u(rng);
  }

  std::vector<Shape> shapes(cfg.objects);
  for (auto& s : shapes) {
    const int n = 5 + static_cast<int>(u(rng) * 3);
    const double r = scale * (cfg.min_radius + (cfg.max_radius - cfg.min_radius) * u(rng));
    for (int i = 0; i < n; ++i) {
      s.angles.push_back(two_pi * (i + 0.2 + 0.6 * u(rng)) / n);
      s.radii.push_back(r * (0.75 + 0.25 * u(rng)));
    }
    s.cx = r + (cfg.width - 2 * r) * u(rng);
    s.cy = r + (cfg.height - 2 * r) * u(rng);
    const double dir = two_pi * u(rng);
    const double speed = cfg.max_speed * (0.3 + 0.7 * u(rng));
    s.vx = speed * std::cos(dir);
    s.vy = speed * std::sin(dir);
    s.rot = two_pi * u(rng);
    s.spin = (2 * u(rng) - 1) * cfg.max_spin;
    // Pick a color far from the background mean.
    for (int c = 0; c < 3; ++c) s.color[c] = bg[c] > 128 ? 20 + 60 * u(rng) : 170 + 70 * u(rng);
  }

  Video v;
  v.name = name;
  v.object_count = cfg.objects + 1;
  for (int t = 0; t < cfg.frames; ++t) {
    RgbImage img(cfg.height, cfg.width);
    LabelMask gt = LabelMask::filled(cfg.height, cfg.width, kBackground, Resolution::kFull);
    for (int y = 0; y < cfg.height; ++y)
      for (int x = 0; x < cfg.width; ++x) {
        const double tex = 25 * std::sin(fx[0] * x + fy[0] * y + ph[0]) + 15 * std::sin(fx[1] * x - fy[1] * y + ph[1]);
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(bg[c] + tex, 0.0, 255.0));
      }
    if (silhouettes) silhouettes->emplace_back();
    for (int o = 0; o < cfg.objects; ++o) {
      const Shape& s = shapes[o];
      if (silhouettes) silhouettes->back().push_back(BinaryGrid::Zero(cfg.height, cfg.width));
      std::vector<std::pair<double, double>> poly;
      double min_x = 1e9, max_x = -1e9, min_y = 1e9, max_y = -1e9;
      for (std::size_t i = 0; i < s.angles.size(); ++i) {
        const double a = s.angles[i] + s.rot;
        poly.emplace_back(s.cx + s.radii[i] * std::cos(a), s.cy + s.radii[i] * std::sin(a));
        min_x = std::min(min_x, poly.back().first);
        max_x = std::max(max_x, poly.back().first);
        min_y = std::min(min_y, poly.back().second);
        max_y = std::max(max_y, poly.back().second);
      }
      const int y0 = std::max(0, static_cast<int>(std::floor(min_y))), y1 = std::min(cfg.height - 1, static_cast<int>(max_y));
      const int x0 = std::max(0, static_cast<int>(std::floor(min_x))), x1 = std::min(cfg.width - 1, static_cast<int>(max_x));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          if (!inside_convex(poly, x + 0.5, y + 0.5)) continue;
          if (silhouettes) silhouettes->back().back()(y, x) = 1;
          // Simple shading across the shape.
          const double shade = 1.0 + 0.15 * ((x - s.cx) + (y - s.cy)) / (max_x - min_x + 1);
          for (int c = 0; c < 3; ++c)
            img.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(s.color[c] * shade, 0.0, 255.0));
          gt.labels(y, x) = static_cast<ObjectId>(o + 1);
        }
    }
    for (auto& p : img.pixels)
      p = static_cast<std::uint8_t>(std::clamp(p + cfg.noise * (2 * u(rng) - 1), 0.0, 255.0));
    v.frames.frames.push_back(std::move(img));
    v.gt.push_back(std::move(gt));

    for (auto& s : shapes) {
      s.cx += s.vx;
      s.cy += s.vy;
      s.rot += s.spin;
      const double r = s.radii.front();
      if (s.cx < r * 0.5 || s.cx > cfg.width - r * 0.5) s.vx = -s.vx;
      if (s.cy < r * 0.5 || s.cy > cfg.height - r * 0.5) s.vy = -s.vy;
    }
  }
  return v;
}

std::vector<Video> generate_corpus(const SyntheticConfig& base, int videos) {
  std::vector<Video> out;
  for (int i = 0; i < videos; ++i) {
    SyntheticConfig c = base;
    c.seed = base.seed * 1000003ull + static_cast<std::uint64_t>(i);
    char name[32];
    std::snprintf(name, sizeof name, "video_%03d", i);
    out.push_back(generate_synthetic_video(c, name));
  }
  return out;
}

void write_video(const std::filesystem::path& dir, const Video& video) {
  const auto root = dir / video.name;
  for (int t = 0; t < video.frames.size(); ++t) {
    write_png(root / "frames" / frame_file_name(t), video.frames.frames[t]);
    write_label_png(root / "gt" / frame_file_name(t), video.gt[t]);
  }
}

Video read_video(const std::filesystem::path& video_dir) {
  Video v;
  v.name = video_dir.filename().string();
  v.frames = load_frame_directory(video_dir / "frames");
  int max_label = 0;
  for (const auto& p : list_frame_files(video_dir / "gt")) {
    v.gt.push_back(read_label_png(p));
    max_label = std::max(max_label, static_cast<int>(v.gt.back().labels.maxCoeff()));
  }
  if (static_cast<int>(v.gt.size()) != v.frames.size())
    throw LoadError("read_video: " + video_dir.string() + " has " + std::to_string(v.frames.size()) +
                    " frames but " + std::to_string(v.gt.size()) + " masks");
  v.object_count = max_label + 1;
  return v;
}

std::vector<Video> read_corpus(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> dirs;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_directory() && std::filesystem::is_directory(e.path() / "frames") &&
        std::filesystem::is_directory(e.path() / "gt"))
      dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  std::vector<Video> out;
  for (const auto& d : dirs) out.push_back(read_video(d));
  return out;
}

}  // namespace ivos
