#include "ivos/robot.hpp"

#include <algorithm>
#include <chrono>
#include <deque>
#include <random>

#include "ivos/raster.hpp"

namespace ivos {

void RobotConfig::validate() const {
  detail::require(min_region_cells >= 1, "RobotConfig: min_region_cells must be >= 1");
  detail::require(max_strokes_per_round >= 1, "RobotConfig: max_strokes_per_round must be >= 1");
  detail::require(stroke_subsample_step >= 1, "RobotConfig: stroke_subsample_step must be >= 1");
  detail::require(brush_radius >= 0, "RobotConfig: brush_radius must be >= 0");
}

ErrorRegions error_regions(const LabelMask& pred, const LabelMask& gt, int object_count) {
  detail::require(pred.rows() == gt.rows() && pred.cols() == gt.cols(), "error_regions: masks not aligned");
  ErrorRegions e;
  e.objects.resize(object_count);
  for (int o = 0; o < object_count; ++o) {
    const auto p = pred.labels == static_cast<ObjectId>(o);
    const auto g = gt.labels == static_cast<ObjectId>(o);
    e.objects[o].false_negative = (g && !p).cast<std::uint8_t>();
    e.objects[o].false_positive = (p && !g).cast<std::uint8_t>();
  }
  return e;
}

int worst_frame(const std::vector<LabelMask>& preds, const std::vector<LabelMask>& gts, int object_count) {
  detail::require(preds.size() == gts.size() && !preds.empty(), "worst_frame: frame counts differ or are zero");
  int best = 0;
  double best_j = 2.0;
  for (std::size_t t = 0; t < preds.size(); ++t) {
    const double j = mean_object_jaccard(preds[t], gts[t], object_count);
    if (j < best_j) {
      best_j = j;
      best = static_cast<int>(t);
    }
  }
  return best;
}

std::vector<std::vector<int>> connected_components(const BinaryGrid& g) {
  const int h = static_cast<int>(g.rows()), w = static_cast<int>(g.cols());
  std::vector<int> label(static_cast<std::size_t>(h) * w, -1);
  std::vector<std::vector<int>> comps;
  for (int start = 0; start < h * w; ++start) {
    if (!g(start / w, start % w) || label[start] >= 0) continue;
    std::vector<int> comp;
    std::deque<int> q{start};
    label[start] = static_cast<int>(comps.size());
    while (!q.empty()) {
      const int i = q.front();
      q.pop_front();
      comp.push_back(i);
      const int r = i / w, c = i % w;
      const int nbr[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
      for (const auto& n : nbr) {
        if (n[0] < 0 || n[0] >= h || n[1] < 0 || n[1] >= w) continue;
        const int j = n[0] * w + n[1];
        if (g(n[0], n[1]) && label[j] < 0) {
          label[j] = label[start];
          q.push_back(j);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    comps.push_back(std::move(comp));
  }
  std::stable_sort(comps.begin(), comps.end(), [](const auto& a, const auto& b) { return a.size() > b.size(); });
  return comps;
}

BinaryGrid thin(const BinaryGrid& g) {
  const int h = static_cast<int>(g.rows()), w = static_cast<int>(g.cols());
  // One cell of zero padding so neighborhoods never leave the grid.
  BinaryGrid img = BinaryGrid::Zero(h + 2, w + 2);
  img.block(1, 1, h, w) = (g != 0).cast<std::uint8_t>();
  std::vector<std::pair<int, int>> del;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      del.clear();
      for (int r = 1; r <= h; ++r) {
        for (int c = 1; c <= w; ++c) {
          if (!img(r, c)) continue;
          // P2..P9 clockwise from north.
          const int p[8] = {img(r - 1, c), img(r - 1, c + 1), img(r, c + 1), img(r + 1, c + 1),
                            img(r + 1, c), img(r + 1, c - 1), img(r, c - 1), img(r - 1, c - 1)};
          int b = 0, a = 0;
          for (int i = 0; i < 8; ++i) {
            b += p[i];
            if (!p[i] && p[(i + 1) % 8]) ++a;
          }
          if (b < 2 || b > 6 || a != 1) continue;
          if (pass == 0) {
            if (p[0] * p[2] * p[4] != 0 || p[2] * p[4] * p[6] != 0) continue;
          } else {
            if (p[0] * p[2] * p[6] != 0 || p[0] * p[4] * p[6] != 0) continue;
          }
          del.emplace_back(r, c);
        }
      }
      for (const auto& [r, c] : del) img(r, c) = 0;
      changed = changed || !del.empty();
    }
  }
  return img.block(1, 1, h, w);
}

namespace {

// BFS over 8-connected set cells; returns the farthest cell and parents.
int bfs_farthest(const BinaryGrid& s, int start, std::vector<int>& parent) {
  const int h = static_cast<int>(s.rows()), w = static_cast<int>(s.cols());
  parent.assign(static_cast<std::size_t>(h) * w, -2);
  std::deque<int> q{start};
  parent[start] = -1;
  int last = start;
  while (!q.empty()) {
    const int i = q.front();
    q.pop_front();
    last = i;
    const int r = i / w, c = i % w;
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        if (!dr && !dc) continue;
        const int nr = r + dr, nc = c + dc;
        if (nr < 0 || nr >= h || nc < 0 || nc >= w || !s(nr, nc)) continue;
        const int j = nr * w + nc;
        if (parent[j] != -2) continue;
        parent[j] = i;
        q.push_back(j);
      }
  }
  return last;
}

bool segment_inside(const BinaryGrid& region, Point a, Point b) {
  for (const Point& p : line_points(a, b))
    if (!region(p.y, p.x)) return false;
  return true;
}

/// Keeps path points so that consecutive kept points are at most `step` path
/// cells apart and the straight segment between them stays in `region`.
std::vector<Point> subsample_path(const std::vector<Point>& path, const BinaryGrid& region, int step) {
  std::vector<Point> out{path.front()};
  std::size_t i = 0;
  while (i + 1 < path.size()) {
    std::size_t next = i + 1;
    for (std::size_t j = std::min(path.size() - 1, i + static_cast<std::size_t>(step)); j > i + 1; --j) {
      if (segment_inside(region, path[i], path[j])) {
        next = j;
        break;
      }
    }
    out.push_back(path[next]);
    i = next;
  }
  if (out.size() == 1) out.push_back(out.front());
  return out;
}

std::vector<Point> stroke_for_component(const std::vector<int>& comp, int h, int w, const RobotConfig& cfg,
                                        std::mt19937_64& rng) {
  BinaryGrid region = BinaryGrid::Zero(h, w);
  for (int i : comp) region(i / w, i % w) = 1;
  BinaryGrid skel = thin(region);
  std::vector<int> cells;
  for (int i : comp)
    if (skel(i / w, i % w)) cells.push_back(i);
  if (cells.empty()) {
    // Thinning erased the region (2-cell-thick blobs); use its most central cell.
    double cy = 0, cx = 0;
    for (int i : comp) {
      cy += i / w;
      cx += i % w;
    }
    cy /= comp.size();
    cx /= comp.size();
    int best = comp.front();
    double bd = 1e300;
    for (int i : comp) {
      const double d = (i / w - cy) * (i / w - cy) + (i % w - cx) * (i % w - cx);
      if (d < bd) {
        bd = d;
        best = i;
      }
    }
    const Point p{best % w, best / w};
    return {p, p};
  }
  std::uniform_int_distribution<std::size_t> pick(0, cells.size() - 1);
  const int start = cells[pick(rng)];
  const auto path = skeleton_longest_path(skel, {start % w, start / w});
  return subsample_path(path, region, cfg.stroke_subsample_step);
}

struct Candidate {
  std::size_t size;
  ObjectId object;
  Polarity polarity;
  std::vector<int> cells;
};

ScribbleSet strokes_from_candidates(std::vector<Candidate> cands, int frame, int h, int w, const RobotConfig& cfg) {
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.size > b.size; });
  if (static_cast<int>(cands.size()) > cfg.max_strokes_per_round) cands.resize(cfg.max_strokes_per_round);
  // Emit in object order so output does not depend on region sizes beyond selection.
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    return a.object != b.object ? a.object < b.object : a.polarity < b.polarity;
  });
  std::mt19937_64 rng(cfg.seed ^ (static_cast<std::uint64_t>(frame) * 0x9E3779B97F4A7C15ull));
  ScribbleSet s;
  s.frame_index = frame;
  for (const auto& c : cands) {
    ScribbleStroke st;
    st.object = c.object;
    st.polarity = c.polarity;
    st.brush_radius = cfg.brush_radius;
    st.points = stroke_for_component(c.cells, h, w, cfg, rng);
    s.strokes.push_back(std::move(st));
  }
  return s;
}

}  // namespace

std::vector<Point> skeleton_longest_path(const BinaryGrid& skeleton, Point start) {
  detail::require(start.y >= 0 && start.y < skeleton.rows() && start.x >= 0 && start.x < skeleton.cols() &&
                      skeleton(start.y, start.x),
                  "skeleton_longest_path: start must be a skeleton cell");
  const int w = static_cast<int>(skeleton.cols());
  std::vector<int> parent;
  const int a = bfs_farthest(skeleton, start.y * w + start.x, parent);
  const int b = bfs_farthest(skeleton, a, parent);
  std::vector<Point> path;
  for (int i = b; i != -1; i = parent[i]) path.push_back({i % w, i / w});
  return path;
}

namespace {

ScribbleSet synthesize(const LabelMask& pred, const LabelMask& gt, int frame, const RobotConfig& cfg,
                       int object_count, bool negatives) {
  cfg.validate();
  const ErrorRegions err = error_regions(pred, gt, object_count);
  std::vector<Candidate> cands;
  for (int o = 0; o < object_count; ++o) {
    for (const Polarity pol : {Polarity::kPositive, Polarity::kNegative}) {
      if (pol == Polarity::kNegative && !negatives) continue;
      const BinaryGrid& g =
          pol == Polarity::kPositive ? err.objects[o].false_negative : err.objects[o].false_positive;
      const auto comps = connected_components(g);
      if (comps.empty() || static_cast<int>(comps.front().size()) < cfg.min_region_cells) continue;
      cands.push_back({comps.front().size(), static_cast<ObjectId>(o), pol, comps.front()});
    }
  }
  return strokes_from_candidates(std::move(cands), frame, gt.rows(), gt.cols(), cfg);
}

}  // namespace

ScribbleSet synthesize_scribbles(const LabelMask& pred, const LabelMask& gt, int frame, const RobotConfig& cfg,
                                 int object_count) {
  return synthesize(pred, gt, frame, cfg, object_count, true);
}

ScribbleSet initial_scribbles(const LabelMask& gt, int frame, const RobotConfig& cfg, int object_count) {
  // Against an all-background prediction the only false negatives are the
  // foreground objects.
  const LabelMask empty = LabelMask::filled(gt.rows(), gt.cols(), kBackground, gt.resolution);
  return synthesize(empty, gt, frame, cfg, object_count, false);
}

std::vector<RoundRecord> run_benchmark(const PipelineFactory& factory, const std::vector<Video>& videos, int rounds,
                                       const RobotConfig& cfg) {
  cfg.validate();
  std::vector<RoundRecord> records;
  if (rounds <= 0) return records;
  for (const auto& video : videos) {
    detail::require(static_cast<int>(video.gt.size()) == video.frames.size(), "run_benchmark: gt count mismatch");
    auto pipeline = factory(video);
    std::vector<LabelMask> preds;
    for (int r = 1; r <= rounds; ++r) {
      int frame = 0;
      ScribbleSet scribbles;
      if (preds.empty()) {
        scribbles = initial_scribbles(video.gt[0], 0, cfg, video.object_count);
      } else {
        frame = worst_frame(preds, video.gt, video.object_count);
        scribbles = synthesize_scribbles(preds[frame], video.gt[frame], frame, cfg, video.object_count);
      }
      double millis = 0;
      if (!scribbles.strokes.empty()) {
        const auto t0 = std::chrono::steady_clock::now();
        preds = pipeline->round(scribbles);
        millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        detail::require(static_cast<int>(preds.size()) == video.frames.size(), "run_benchmark: pipeline mask count");
      }
      if (preds.empty()) {
        // No scribbles at all in round 1: nothing is segmented yet.
        for (int t = 0; t < video.frames.size(); ++t)
          preds.push_back(LabelMask::filled(video.gt[t].rows(), video.gt[t].cols(), kBackground, Resolution::kFull));
      }
      for (int t = 0; t < video.frames.size(); ++t)
        for (int o = 1; o < video.object_count; ++o)
          records.push_back({video.name, r, t, o, jaccard(preds[t], video.gt[t], static_cast<ObjectId>(o)), frame,
                             millis});
    }
  }
  return records;
}

}  // namespace ivos
