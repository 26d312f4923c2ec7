#include "ivos/training.hpp"

#include <cstring>
#include <fstream>
#include <random>
#include <tuple>
#include <utility>

#include "ivos/image_io.hpp"
#include "ivos/session.hpp"

namespace ivos {

namespace fs = std::filesystem;
using Mat = HeadParams<Real>::Mat;
using Head = SegmentationHead<Real>;

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.insert(out.end(), b, b + sizeof(T));
}

template <typename T>
T get(const std::vector<std::uint8_t>& in, std::size_t& off) {
  if (off + sizeof(T) > in.size()) throw FormatError("checkpoint: truncated file");
  T v;
  std::memcpy(&v, in.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const HeadParams<Real>& p) {
  std::vector<std::uint8_t> out{'M', 'A', 'H', 'C'};
  put<std::uint16_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(p.config.layers));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(p.config.channels));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(p.config.kernel));
  put<std::uint32_t>(out, p.config.batch_norm ? 1u : 0u);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(p.input_channels));
  p.for_each_tensor(
      [&out](const std::string&, const Mat& m) {
        for (Eigen::Index i = 0; i < m.size(); ++i) put<float>(out, static_cast<float>(m.data()[i]));
      },
      true);
  return out;
}

HeadParams<Real> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "MAHC", 4) != 0) throw FormatError("checkpoint: bad magic");
  std::size_t off = 4;
  const auto version = get<std::uint16_t>(bytes, off);
  if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  HeadConfig cfg;
  cfg.layers = static_cast<int>(get<std::uint32_t>(bytes, off));
  cfg.channels = static_cast<int>(get<std::uint32_t>(bytes, off));
  cfg.kernel = static_cast<int>(get<std::uint32_t>(bytes, off));
  cfg.batch_norm = get<std::uint32_t>(bytes, off) != 0;
  const int in_ch = static_cast<int>(get<std::uint32_t>(bytes, off));
  if (cfg.layers < 1 || cfg.layers > 64 || cfg.channels < 1 || cfg.channels > 4096 || cfg.kernel < 1 ||
      cfg.kernel % 2 == 0 || cfg.kernel > 31 || in_ch < 1 || in_ch > 65536)
    throw FormatError("checkpoint: implausible header");
  HeadParams<Real> p = HeadParams<Real>::init(cfg, in_ch, 0);
  p.for_each_tensor(
      [&](const std::string&, Mat& m) {
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = get<float>(bytes, off);
      },
      true);
  if (off != bytes.size()) throw FormatError("checkpoint: trailing bytes");
  return p;
}

void save_checkpoint(const fs::path& path, const HeadParams<Real>& p) { write_file(path, encode_checkpoint(p)); }

HeadParams<Real> load_checkpoint(const fs::path& path) { return decode_checkpoint(read_file(path)); }

void write_loss_trace(const fs::path& path, const std::vector<LossPoint>& trace) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw LoadError("cannot write " + path.string());
  out << "step,loss,fraction\n";
  out.precision(10);
  for (const auto& p : trace) out << p.step << ',' << p.loss << ',' << p.fraction << '\n';
}

// ---------------------------------------------------------------------------
// Corpus

std::vector<EncodedVideo> encode_videos(const std::vector<Video>& videos, const EmbeddingProvider& provider,
                                        int stride) {
  std::vector<EncodedVideo> out;
  for (const auto& v : videos) {
    EncodedVideo e;
    e.video = &v;
    for (int t = 0; t < v.frames.size(); ++t) {
      e.embeddings.push_back(provider.encode(v.frames.frames[t], t, stride));
      LabelMask s = to_stride_labels(v.gt[t], stride, v.object_count);
      s.resolution = Resolution::kEmbedding;
      e.stride_gt.push_back(std::move(s));
    }
    out.push_back(std::move(e));
  }
  return out;
}

void TrainConfig::validate() const {
  detail::require(steps >= 0, "TrainConfig: steps must be >= 0");
  detail::require(batch >= 1, "TrainConfig: batch must be >= 1");
  detail::require(lr >= 0 && std::isfinite(lr), "TrainConfig: lr must be finite and >= 0");
  detail::require(sparse_reference >= 0 && sparse_reference <= 1, "TrainConfig: sparse_reference must be in [0, 1]");
  detail::require(mask_jitter >= 0, "TrainConfig: mask_jitter must be >= 0");
  schedule.validate();
  match.validate();
  robot.validate();
}

namespace {

std::vector<int> eligible_videos(const std::vector<EncodedVideo>& corpus, std::vector<std::string>& warnings) {
  std::vector<int> ok;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].embeddings.size() < 3)
      warnings.push_back("skipping video " + corpus[i].video->name + ": fewer than 3 frames");
    else
      ok.push_back(static_cast<int>(i));
  }
  return ok;
}

LabelMask shifted(const LabelMask& m, int dy, int dx) {
  if (dy == 0 && dx == 0) return m;
  LabelMask out = LabelMask::filled(m.rows(), m.cols(), kBackground, m.resolution);
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) {
      const int sr = r - dy, sc = c - dx;
      if (sr >= 0 && sr < m.rows() && sc >= 0 && sc < m.cols()) out.labels(r, c) = m.labels(sr, sc);
    }
  return out;
}

Mat grid_column(const Grid<Real>& g) { return g.reshaped<Eigen::RowMajor>().matrix(); }

/// Softmax + bootstrapped loss for every sample group of `objects` logits.
/// Fills dlogits (already divided by the group count) and returns the mean loss.
double grouped_loss(const std::vector<Mat>& logits, const std::vector<HeadInput<Real>>& inputs,
                    const std::vector<const LabelMask*>& targets, int objects, double fraction,
                    std::vector<Mat>& dlogits) {
  const std::size_t groups = targets.size();
  dlogits.assign(logits.size(), Mat());
  double total = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    std::vector<Grid<Real>> lg;
    for (int o = 0; o < objects; ++o) {
      const std::size_t i = g * objects + o;
      lg.push_back(logits_to_grid<Real>(logits[i], inputs[i].rows, inputs[i].cols));
    }
    const LossResult<Real> lr = bootstrapped_ce_loss(softmax_objects(lg), *targets[g], fraction);
    total += lr.loss;
    for (int o = 0; o < objects; ++o) dlogits[g * objects + o] = grid_column(lr.grad_logits[o]) / Real(groups);
  }
  return total / static_cast<double>(groups);
}

void apply_step(HeadParams<Real>& params, const std::vector<HeadInput<Real>>& inputs, const Head::Cache& cache,
                const std::vector<Mat>& dlogits, double lr) {
  const HeadParams<Real> grads = Head::backward(params, inputs, cache, dlogits);
  sgd_step(params, grads, lr);
  Head::update_running_stats(params, cache, Real(0.1));
}

}  // namespace

TrainResult train_stage1(const HeadParams<Real>& init, const std::vector<EncodedVideo>& corpus,
                         const TrainConfig& cfg) {
  cfg.validate();
  TrainResult res{init, {}, {}};
  const std::vector<int> videos = eligible_videos(corpus, res.warnings);
  if (cfg.steps == 0) return res;
  detail::require(!videos.empty(), "train_stage1: no video with at least 3 frames");
  std::mt19937_64 rng(cfg.seed);

  for (int step = 0; step < cfg.steps; ++step) {
    const double fraction = cfg.schedule.fraction(step);
    std::vector<HeadInput<Real>> inputs;
    std::vector<const LabelMask*> targets;
    int objects = 0;
    for (int b = 0; b < cfg.batch; ++b) {
      const EncodedVideo& ev = corpus[videos[std::uniform_int_distribution<std::size_t>(0, videos.size() - 1)(rng)]];
      const int n = static_cast<int>(ev.embeddings.size());
      objects = ev.video->object_count;
      // Adjacent previous/current pair in a random direction, reference elsewhere.
      const int cur = std::uniform_int_distribution<int>(0, n - 1)(rng);
      int prev = cur + (std::uniform_int_distribution<int>(0, 1)(rng) ? 1 : -1);
      if (prev < 0 || prev >= n) prev = 2 * cur - prev;
      int ref = std::uniform_int_distribution<int>(0, n - 3)(rng);
      for (const int used : {std::min(cur, prev), std::max(cur, prev)})
        if (ref >= used) ++ref;

      // Reference evidence: the full ground-truth mask, or with probability
      // sparse_reference the scribbles a first round would draw on it.
      std::vector<BinaryGrid> evidence(objects);
      for (int o = 0; o < objects; ++o) evidence[o] = ev.stride_gt[ref].binary(static_cast<ObjectId>(o));
      if (std::uniform_real_distribution<double>(0, 1)(rng) < cfg.sparse_reference) {
        RobotConfig robot = cfg.robot;
        robot.seed = cfg.robot.seed + static_cast<std::uint64_t>(step) * cfg.batch + b;
        const Video& v = *ev.video;
        ScribbleSet s = initial_scribbles(v.gt[ref], ref, robot, objects);
        if (!s.strokes.empty()) {
          s = apply_rough_roi(s, v.frames.height(), v.frames.width(), cfg.roi_margin);
          const RasterizedScribbles raster = rasterize_scribbles(s, v.frames.height(), v.frames.width(), objects);
          for (int o = 0; o < objects; ++o)
            evidence[o] = scribble_channels(raster, static_cast<ObjectId>(o), ev.embeddings[ref].stride()).first;
        }
      }
      // Previous mask shifted by up to mask_jitter cells, as after imperfect propagation.
      const int dy = std::uniform_int_distribution<int>(-cfg.mask_jitter, cfg.mask_jitter)(rng);
      const int dx = std::uniform_int_distribution<int>(-cfg.mask_jitter, cfg.mask_jitter)(rng);
      const LabelMask prev_labels = shifted(ev.stride_gt[prev], dy, dx);

      const Embedding& ec = ev.embeddings[cur];
      for (int oi = 0; oi < objects; ++oi) {
        const auto o = static_cast<ObjectId>(oi);
        const PixelSet ref_px{ref, o, evidence[o], PixelOrigin::kScribble};
        const ScalarMap g = ref_px.empty() ? ScalarMap::Ones(ec.rows(), ec.cols())
                                           : global_map(ec, ev.embeddings[ref], ref_px);
        const BinaryGrid prev_mask = prev_labels.binary(o);
        const ScalarMap l = local_map(ec, ev.embeddings[prev], PixelSet{prev, o, prev_mask, PixelOrigin::kPredicted},
                                      cfg.match);
        inputs.push_back(propagation_input(ec, g, l, prev_mask));
      }
      targets.push_back(&ev.stride_gt[cur]);
    }
    // Batches mix videos, so they must share the object count.
    detail::require(inputs.size() == targets.size() * static_cast<std::size_t>(objects),
                    "train_stage1: videos in one corpus must share the object count");
    Head::Cache cache;
    const auto logits = Head::forward(res.params, inputs, HeadMode::kTrain, &cache);
    std::vector<Mat> dlogits;
    const double loss = grouped_loss(logits, inputs, targets, objects, fraction, dlogits);
    apply_step(res.params, inputs, cache, dlogits, cfg.lr);
    res.trace.push_back({step, loss, fraction});
  }
  return res;
}

namespace {

/// Full- and stride-resolution argmax of per-object stride logits.
std::pair<LabelMask, LabelMask> decide(const std::vector<Grid<Real>>& logits, int stride, int height, int width) {
  std::vector<Grid<Real>> up;
  for (const auto& l : logits) up.push_back(upsample_to(l, stride, height, width, UpsampleMode::kBilinear));
  return {LabelMask{argmax_objects(logits), Resolution::kEmbedding}, LabelMask{argmax_objects(up), Resolution::kFull}};
}

}  // namespace

TrainResult train_stage2(const HeadParams<Real>& init, const std::vector<EncodedVideo>& corpus,
                         const TrainConfig& cfg, const HeadParams<Real>* propagation) {
  cfg.validate();
  TrainResult res{init, {}, {}};
  const std::vector<int> videos = eligible_videos(corpus, res.warnings);
  if (cfg.steps == 0) return res;
  detail::require(!videos.empty(), "train_stage2: no video with at least 3 frames");
  std::mt19937_64 rng(cfg.seed);

  struct Circle {
    const EncodedVideo* ev = nullptr;
    int first = 0;  // frame annotated in round 1
    int frame = 0;  // frame annotated in the current round
    int round = 0;  // 0, 1, 2
    std::vector<BinaryGrid> evidence;  // round-1 scribble cells per object
    LabelMask prev_stride;
    LabelMask pred_full;
  };
  std::vector<Circle> circles(cfg.batch);

  // Round 2 of a circle moves to another frame whose previous-round mask is
  // what the propagation head makes of the round-1 scribbles.
  auto propagated = [&](Circle& c) {
    const EncodedVideo& ev = *c.ev;
    const Video& v = *ev.video;
    const int n = static_cast<int>(ev.embeddings.size());
    int b = std::uniform_int_distribution<int>(0, n - 2)(rng);
    if (b >= c.first) ++b;
    const int nb = b + (c.first > b ? 1 : -1);
    const int dy = std::uniform_int_distribution<int>(-cfg.mask_jitter, cfg.mask_jitter)(rng);
    const int dx = std::uniform_int_distribution<int>(-cfg.mask_jitter, cfg.mask_jitter)(rng);
    const LabelMask nb_labels = shifted(ev.stride_gt[nb], dy, dx);
    const Embedding& e = ev.embeddings[b];
    std::vector<Grid<Real>> logits;
    for (int oi = 0; oi < v.object_count; ++oi) {
      const auto o = static_cast<ObjectId>(oi);
      const PixelSet ref_px{c.first, o, c.evidence[o], PixelOrigin::kScribble};
      const ScalarMap g =
          ref_px.empty() ? ScalarMap::Ones(e.rows(), e.cols()) : global_map(e, ev.embeddings[c.first], ref_px);
      const BinaryGrid nb_mask = nb_labels.binary(o);
      const ScalarMap l =
          local_map(e, ev.embeddings[nb], PixelSet{nb, o, nb_mask, PixelOrigin::kPredicted}, cfg.match);
      logits.push_back(propagation_forward(*propagation, e, g, l, nb_mask));
    }
    c.frame = b;
    std::tie(c.prev_stride, c.pred_full) = decide(logits, e.stride(), v.frames.height(), v.frames.width());
  };

  for (int step = 0; step < cfg.steps; ++step) {
    const double fraction = cfg.schedule.fraction(step);
    std::vector<HeadInput<Real>> inputs;
    std::vector<const LabelMask*> targets;
    int objects = 0;
    for (int b = 0; b < cfg.batch; ++b) {
      Circle& c = circles[b];
      RobotConfig robot = cfg.robot;
      robot.seed = cfg.robot.seed + static_cast<std::uint64_t>(step) * cfg.batch + b;
      ScribbleSet scribbles;
      if (c.round == 0) {
        // New circle: a frame with at least one scribble-able object.
        for (int attempt = 0; attempt < 64 && scribbles.strokes.empty(); ++attempt) {
          c.ev = &corpus[videos[std::uniform_int_distribution<std::size_t>(0, videos.size() - 1)(rng)]];
          c.frame = std::uniform_int_distribution<int>(0, static_cast<int>(c.ev->embeddings.size()) - 1)(rng);
          scribbles = initial_scribbles(c.ev->video->gt[c.frame], c.frame, robot, c.ev->video->object_count);
        }
        c.first = c.frame;
        const Embedding& e = c.ev->embeddings[c.frame];
        c.prev_stride = LabelMask::filled(e.rows(), e.cols(), kBackground, Resolution::kEmbedding);
        if (!scribbles.strokes.empty())
          scribbles = apply_rough_roi(scribbles, c.ev->video->frames.height(), c.ev->video->frames.width(),
                                      cfg.roi_margin);
      } else {
        if (c.round == 1 && propagation) propagated(c);
        scribbles = synthesize_scribbles(c.pred_full, c.ev->video->gt[c.frame], c.frame, robot,
                                         c.ev->video->object_count);
      }
      const Video& v = *c.ev->video;
      objects = v.object_count;
      const Embedding& e = c.ev->embeddings[c.frame];
      const RasterizedScribbles raster = rasterize_scribbles(scribbles, v.frames.height(), v.frames.width(), objects);
      if (c.round == 0) c.evidence.assign(objects, BinaryGrid());
      for (int oi = 0; oi < objects; ++oi) {
        const auto o = static_cast<ObjectId>(oi);
        const auto [pos, neg] = scribble_channels(raster, o, e.stride());
        if (c.round == 0) c.evidence[o] = pos;
        inputs.push_back(interaction_input(e, pos, neg, c.prev_stride.binary(o)));
      }
      targets.push_back(&c.ev->stride_gt[c.frame]);
    }
    detail::require(inputs.size() == targets.size() * static_cast<std::size_t>(objects),
                    "train_stage2: videos in one corpus must share the object count");
    Head::Cache cache;
    const auto logits = Head::forward(res.params, inputs, HeadMode::kTrain, &cache);
    std::vector<Mat> dlogits;
    const double loss = grouped_loss(logits, inputs, targets, objects, fraction, dlogits);
    apply_step(res.params, inputs, cache, dlogits, cfg.lr);
    res.trace.push_back({step, loss, fraction});

    // Predictions of this round feed the next round of each circle.
    for (int b = 0; b < cfg.batch; ++b) {
      Circle& c = circles[b];
      const Video& v = *c.ev->video;
      std::vector<Grid<Real>> lg;
      for (int o = 0; o < objects; ++o) {
        const std::size_t i = static_cast<std::size_t>(b) * objects + o;
        lg.push_back(logits_to_grid<Real>(logits[i], inputs[i].rows, inputs[i].cols));
      }
      std::tie(c.prev_stride, c.pred_full) =
          decide(lg, c.ev->embeddings[c.frame].stride(), v.frames.height(), v.frames.width());
      c.round = (c.round + 1) % 3;
    }
  }
  return res;
}

}  // namespace ivos
