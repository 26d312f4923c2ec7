#include "ivos/session.hpp"

#include <cmath>
#include <fstream>

#include "ivos/image_io.hpp"
#include "ivos/scribble_json.hpp"

namespace ivos {

namespace fs = std::filesystem;
using nlohmann::json;

void SessionConfig::validate() const {
  match.validate();
  forgetting.validate();
  detail::require(stride >= 1, "SessionConfig: stride must be >= 1");
  detail::require(roi_margin >= 0 && std::isfinite(roi_margin), "SessionConfig: roi_margin must be >= 0");
  detail::require(!local_retain_rounds || *local_retain_rounds >= 1, "SessionConfig: retention must be >= 1");
}

json config_to_json(const SessionConfig& c) {
  json j{{"window", c.match.window},
         {"local_downsample", c.match.local_downsample},
         {"forgetting_rounds", c.forgetting.rounds},
         {"stride", c.stride},
         {"roi_margin", c.roi_margin},
         {"global_aggregation", c.global_aggregation},
         {"augmented_map", c.augmented_map},
         {"mode", c.mode == DecisionMode::kHeads ? "heads" : "harness"}};
  if (c.local_retain_rounds) j["local_retain_rounds"] = *c.local_retain_rounds;
  return j;
}

SessionConfig config_from_json(const json& j) {
  SessionConfig c;
  try {
    c.match.window = j.value("window", c.match.window);
    c.match.local_downsample = j.value("local_downsample", c.match.local_downsample);
    c.forgetting.rounds = j.value("forgetting_rounds", c.forgetting.rounds);
    c.stride = j.value("stride", c.stride);
    c.roi_margin = j.value("roi_margin", c.roi_margin);
    c.global_aggregation = j.value("global_aggregation", c.global_aggregation);
    c.augmented_map = j.value("augmented_map", c.augmented_map);
    const std::string mode = j.value("mode", std::string("harness"));
    if (mode != "heads" && mode != "harness") throw ValidationError("config: mode must be heads or harness");
    c.mode = mode == "heads" ? DecisionMode::kHeads : DecisionMode::kHarness;
    if (j.contains("local_retain_rounds")) c.local_retain_rounds = j["local_retain_rounds"].get<int>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  try {
    c.validate();
  } catch (const ContractViolation& e) {
    throw ValidationError(e.what());
  }
  return c;
}

ScribbleSet apply_rough_roi(const ScribbleSet& scribbles, int height, int width, double margin) {
  detail::require(margin >= 0, "apply_rough_roi: margin must be >= 0");
  int x0 = width, x1 = -1, y0 = height, y1 = -1;
  for (const auto& s : scribbles.strokes) {
    if (s.polarity != Polarity::kPositive || s.object == kBackground) continue;
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      for (const Point& p : line_points(s.points[i], s.points[std::min(i + 1, s.points.size() - 1)])) {
        x0 = std::min(x0, p.x - s.brush_radius);
        x1 = std::max(x1, p.x + s.brush_radius);
        y0 = std::min(y0, p.y - s.brush_radius);
        y1 = std::max(y1, p.y + s.brush_radius);
      }
    }
  }
  detail::require(x1 >= 0, "apply_rough_roi: no positive foreground strokes");
  const int pad_x = static_cast<int>(std::ceil(margin * (x1 - x0 + 1)));
  const int pad_y = static_cast<int>(std::ceil(margin * (y1 - y0 + 1)));
  x0 = std::max(0, x0 - pad_x);
  x1 = std::min(width - 1, x1 + pad_x);
  y0 = std::max(0, y0 - pad_y);
  y1 = std::min(height - 1, y1 + pad_y);

  ScribbleSet out = scribbles;
  auto segment = [&out](int y, int a, int b) {
    if (a > b) return;
    out.strokes.push_back({kBackground, Polarity::kPositive, {{a, y}, {b, y}}, 0});
  };
  for (int y = 0; y < height; ++y) {
    if (y < y0 || y > y1) {
      segment(y, 0, width - 1);
    } else {
      segment(y, 0, x0 - 1);
      segment(y, x1 + 1, width - 1);
    }
  }
  return out;
}

namespace {

/// Memory snapshots are stored as f32; rounding first makes them lossless.
ScalarMap to_float_precision(const ScalarMap& m) { return m.cast<float>().cast<Real>(); }

}  // namespace

Session::Session(FrameSequence frames, const EmbeddingProvider& provider, int object_count, SessionConfig cfg,
                 std::shared_ptr<const HeadPair> heads, const ProgressFn& encode_progress)
    : frames_(std::move(frames)), objects_(object_count), cfg_(cfg), heads_(std::move(heads)) {
  frames_.validate();
  cfg_.validate();
  detail::require(object_count >= 2 && object_count <= 255, "Session: object count must be in [2, 255]");
  if (cfg_.mode == DecisionMode::kHeads) {
    detail::require(heads_ != nullptr, "Session: heads mode needs head parameters");
    detail::require(heads_->interaction.input_channels == provider.dim() + 3 &&
                        heads_->propagation.input_channels == provider.dim() + 3,
                    "Session: head input channels do not match embedding dimension");
  }
  for (int t = 0; t < frames_.size(); ++t) {
    embeddings_.push_back(provider.encode(frames_.frames[t], t, cfg_.stride));
    ++encoder_invocations_;
    if (encode_progress) encode_progress(0, t, false);
  }
  const int rows = embeddings_.front().rows(), cols = embeddings_.front().cols();
  global_ = GlobalMapMemory(frames_.size(), objects_, rows, cols);
  local_ = LocalMapMemory(frames_.size(), objects_, cfg_.local_retain_rounds);
}

LabelMask Session::full_mask(const std::vector<Grid<Real>>& logits) const {
  std::vector<Grid<Real>> up;
  up.reserve(logits.size());
  for (const auto& l : logits) up.push_back(upsample_to(l, cfg_.stride, height(), width(), UpsampleMode::kBilinear));
  return {argmax_objects(up), Resolution::kFull};
}

Grid<Real> Session::propagation_logit(int t, ObjectId, const ScalarMap& global, const ScalarMap& local,
                                      const BinaryGrid& prev_mask) const {
  if (cfg_.mode == DecisionMode::kHarness) return -global.min(local);
  return propagation_forward(heads_->propagation, embeddings_[t], global, local, prev_mask);
}

LabelMask Session::run_interaction(const ScribbleSet& scribbles) {
  detail::require(!interaction_pending_, "run_interaction: previous round not propagated yet");
  const int n = frames_.size();
  if (scribbles.frame_index < 0 || scribbles.frame_index >= n)
    throw ValidationError("scribbles: frame " + std::to_string(scribbles.frame_index) + " out of range");
  validate_scribbles(scribbles, height(), width(), objects_);
  const int r = round_ + 1;
  const int th = scribbles.frame_index;
  const ScribbleSet effective = r == 1 ? apply_rough_roi(scribbles, height(), width(), cfg_.roi_margin) : scribbles;
  const RasterizedScribbles raster = rasterize_scribbles(effective, height(), width(), objects_);

  const Embedding& emb = embeddings_[th];
  const LabelMask prev = r == 1 ? LabelMask::filled(emb.rows(), emb.cols(), kBackground, Resolution::kEmbedding)
                                : results_.back().stride_masks[th];
  local_.begin_round(r, th);
  annotated_.push_back(th);
  round_ = r;

  const bool write_global = cfg_.global_aggregation || r == 1;
  evidence_.assign(objects_, PixelSet{});
  std::vector<Grid<Real>> logits(objects_);
  for (int oi = 0; oi < objects_; ++oi) {
    const auto o = static_cast<ObjectId>(oi);
    const auto [pos, neg] = scribble_channels(raster, o, cfg_.stride);
    evidence_[o] = PixelSet{th, o, pos, PixelOrigin::kScribble};
    if (cfg_.augmented_map && write_global && !evidence_[o].empty())
      global_.write(th, o, r, to_float_precision(augmented_map(emb, evidence_[o], cfg_.match)));
    if (cfg_.mode == DecisionMode::kHarness)
      logits[o] = -global_.read(th, o);
    else
      logits[o] = interaction_forward(heads_->interaction, emb, pos, neg, prev.binary(o));
  }

  pending_ = RoundResult{};
  pending_.round = r;
  pending_.annotated_frame = th;
  pending_.scribbles = effective;
  pending_.masks.assign(n, LabelMask{});
  pending_.stride_masks.assign(n, LabelMask{});
  pending_.provenance.assign(n, std::vector<int>(objects_, 0));
  pending_.stride_masks[th] = {argmax_objects(logits), Resolution::kEmbedding};
  pending_.masks[th] = full_mask(logits);
  interaction_pending_ = true;
  return pending_.masks[th];
}

RoundResult Session::propagate_round(const ProgressFn& progress) {
  detail::require(interaction_pending_, "propagate_round: run_interaction has not run for this round");
  const int n = frames_.size();
  const int r = round_;
  const int th = pending_.annotated_frame;
  const bool write_global = cfg_.global_aggregation || r == 1;
  if (progress) progress(r, th, false);

  auto process = [&](int t, int prev) {
    const LabelMask& prev_mask = pending_.stride_masks[prev];
    std::vector<Grid<Real>> logits(objects_);
    for (int oi = 0; oi < objects_; ++oi) {
      const auto o = static_cast<ObjectId>(oi);
      if (write_global && !evidence_[o].empty())
        global_.write(t, o, r, to_float_precision(global_map(embeddings_[t], embeddings_[th], evidence_[o])));
      const PixelSet source{prev, o, prev_mask.binary(o), PixelOrigin::kPredicted};
      const ScalarMap fresh = to_float_precision(local_map(embeddings_[t], embeddings_[prev], source, cfg_.match));
      local_.write(t, r, o, fresh);
      std::optional<LocalRead> served = local_.read(t, o, r, cfg_.forgetting);
      if (!served) served = LocalRead{fresh, r};
      pending_.provenance[t][o] = served->round;
      logits[o] = propagation_logit(t, o, global_.read(t, o), served->map, prev_mask.binary(o));
    }
    pending_.stride_masks[t] = {argmax_objects(logits), Resolution::kEmbedding};
    pending_.masks[t] = full_mask(logits);
    if (progress) progress(r, t, false);
  };

  for (int t = th + 1; t < n; ++t) process(t, t - 1);
  for (int t = th - 1; t >= 0; --t) process(t, t + 1);

  results_.push_back(pending_);
  interaction_pending_ = false;
  if (progress) progress(r, -1, true);
  return results_.back();
}

RoundResult Session::round(const ScribbleSet& scribbles, const ProgressFn& progress) {
  run_interaction(scribbles);
  return propagate_round(progress);
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

std::string round_dir(int r) { return "rounds/" + std::to_string(r); }

void write_json_file(const fs::path& p, const json& j) {
  const std::string s = j.dump(2);
  write_file(p, std::vector<std::uint8_t>(s.begin(), s.end()));
}

json read_json_file(const fs::path& p) {
  const auto bytes = read_file(p);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw FormatError("bad JSON in " + p.string() + ": " + e.what());
  }
}

}  // namespace

void Session::write_manifest(const fs::path& dir) const {
  json j{{"version", 1},
         {"frames", frames_.size()},
         {"height", height()},
         {"width", width()},
         {"objects", objects_},
         {"embedding_dim", embeddings_.front().dim()},
         {"config", config_to_json(cfg_)},
         {"annotated_history", annotated_},
         {"rounds_completed", static_cast<int>(results_.size())},
         {"encoder_invocations", encoder_invocations_}};
  // Write-then-rename so a crash never leaves a half-written manifest.
  const fs::path tmp = dir / "session.json.tmp";
  write_json_file(tmp, j);
  fs::rename(tmp, dir / "session.json");
}

void Session::save_initial(const fs::path& dir) const {
  for (int t = 0; t < frames_.size(); ++t) {
    write_png(dir / "frames" / frame_file_name(t), frames_.frames[t]);
    save_embeddings(dir / "embeddings" / frame_file_name(t, ".maef"), embeddings_[t]);
  }
  write_manifest(dir);
}

void Session::save_round(const fs::path& dir) const {
  detail::require(!results_.empty(), "save_round: no completed round");
  const RoundResult& res = results_.back();
  const fs::path rd = dir / round_dir(res.round);
  for (int t = 0; t < frames_.size(); ++t) {
    write_label_png(rd / "masks" / frame_file_name(t), res.masks[t]);
    write_label_png(rd / "stride_masks" / frame_file_name(t), res.stride_masks[t]);
  }
  const std::string scribbles = dump_scribbles(res.scribbles);
  write_file(rd / "scribbles.json", std::vector<std::uint8_t>(scribbles.begin(), scribbles.end()));
  write_json_file(rd / "provenance.json",
                  json{{"round", res.round}, {"annotated_frame", res.annotated_frame}, {"local_round", res.provenance}});
  global_.save(dir / "memory" / "global", cfg_.stride);
  local_.save(dir / "memory" / "local", cfg_.stride);
  write_manifest(dir);
}

std::unique_ptr<Session> Session::load(const fs::path& dir, std::shared_ptr<const HeadPair> heads) {
  const json m = read_json_file(dir / "session.json");
  std::unique_ptr<Session> s(new Session());
  try {
    s->objects_ = m.at("objects").get<int>();
    s->cfg_ = config_from_json(m.at("config"));
    s->annotated_ = m.at("annotated_history").get<std::vector<int>>();
    s->encoder_invocations_ = m.at("encoder_invocations").get<int>();
    const int n = m.at("frames").get<int>();
    const int completed = m.at("rounds_completed").get<int>();
    s->heads_ = std::move(heads);
    if (s->cfg_.mode == DecisionMode::kHeads && !s->heads_)
      throw FormatError("session uses heads mode but no head parameters were given");
    s->frames_ = load_frame_directory(dir / "frames");
    if (s->frames_.size() != n) throw FormatError("frame count does not match manifest");
    for (int t = 0; t < n; ++t) {
      s->embeddings_.push_back(load_embeddings(dir / "embeddings" / frame_file_name(t, ".maef")));
      s->embeddings_.back().set_frame_index(t);
    }
    // Annotated history may run one ahead of completed rounds after a crash
    // mid-round; only completed rounds are restored.
    if (completed > static_cast<int>(s->annotated_.size())) throw FormatError("round count exceeds history");
    s->annotated_.resize(completed);
    const int rows = s->embeddings_.front().rows(), cols = s->embeddings_.front().cols();
    if (completed == 0) {
      s->global_ = GlobalMapMemory(n, s->objects_, rows, cols);
      s->local_ = LocalMapMemory(n, s->objects_, s->cfg_.local_retain_rounds);
    } else {
      s->global_ = GlobalMapMemory::load(dir / "memory" / "global");
      s->local_ = LocalMapMemory::load(dir / "memory" / "local");
      if (s->local_.rounds() != completed) throw FormatError("local memory rounds do not match manifest");
    }
    for (int r = 1; r <= completed; ++r) {
      const fs::path rd = dir / round_dir(r);
      RoundResult res;
      res.round = r;
      const json prov = read_json_file(rd / "provenance.json");
      res.annotated_frame = prov.at("annotated_frame").get<int>();
      res.provenance = prov.at("local_round").get<std::vector<std::vector<int>>>();
      const auto text = read_file(rd / "scribbles.json");
      res.scribbles = parse_scribbles(std::string(text.begin(), text.end()));
      for (int t = 0; t < n; ++t) {
        res.masks.push_back(read_label_png(rd / "masks" / frame_file_name(t)));
        LabelMask sm = read_label_png(rd / "stride_masks" / frame_file_name(t));
        sm.resolution = Resolution::kEmbedding;
        res.stride_masks.push_back(std::move(sm));
      }
      s->results_.push_back(std::move(res));
    }
    s->round_ = completed;
  } catch (const json::exception& e) {
    throw FormatError("bad session manifest in " + dir.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw FormatError("bad session manifest in " + dir.string() + ": " + e.what());
  }
  return s;
}

SessionPipeline::SessionPipeline(const Video& video, const EmbeddingProvider& provider, SessionConfig cfg,
                                 std::shared_ptr<const HeadPair> heads)
    : session_(video.frames, provider, video.object_count, cfg, std::move(heads)) {}

std::vector<LabelMask> SessionPipeline::round(const ScribbleSet& scribbles) {
  return session_.round(scribbles).masks;
}

}  // namespace ivos
