#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "ivos/embedding.hpp"
#include "ivos/heads.hpp"
#include "ivos/matching.hpp"
#include "ivos/memory.hpp"
#include "ivos/raster.hpp"
#include "ivos/robot.hpp"

namespace ivos {

/// How per-object logits are produced.
///  kHeads: trained interaction and propagation heads.
///  kHarness: no learned weights; propagation logit = -min(global, local),
///            interaction logit = -(global memory at the annotated frame).
enum class DecisionMode { kHeads, kHarness };

struct SessionConfig {
  MatchConfig match;
  ForgettingConfig forgetting;
  int stride = 4;
  double roi_margin = 0.5;
  /// false: global maps are written in round 1 only and never aggregated
  /// afterwards (the "no global memory" ablation).
  bool global_aggregation = true;
  bool augmented_map = true;
  std::optional<int> local_retain_rounds;
  DecisionMode mode = DecisionMode::kHarness;

  void validate() const;
};

nlohmann::json config_to_json(const SessionConfig& c);
SessionConfig config_from_json(const nlohmann::json& j);

/// Parameters of both heads. Input channels must be embedding dim + 3.
struct HeadPair {
  HeadParams<Real> interaction;
  HeadParams<Real> propagation;
};

struct RoundResult {
  int round = 0;
  int annotated_frame = 0;
  ScribbleSet scribbles;                ///< effective scribbles, rough ROI included
  std::vector<LabelMask> masks;         ///< full resolution, one per frame
  std::vector<LabelMask> stride_masks;  ///< embedding resolution
  /// provenance[t][o]: local-memory round that served (t, o); 0 on the
  /// annotated frame, which keeps its interaction mask.
  std::vector<std::vector<int>> provenance;
};

/// (round, frame, done). One call per finished frame, then one with done.
using ProgressFn = std::function<void(int, int, bool)>;

/// Enlarged bounding box of all positive foreground strokes, padded by
/// ceil(margin * box width) horizontally and ceil(margin * box height)
/// vertically, clipped to the frame. Every cell outside it is added as a
/// background stroke (one radius-0 stroke per row segment).
ScribbleSet apply_rough_roi(const ScribbleSet& scribbles, int height, int width, double margin);

class Session {
 public:
  /// Encodes every frame once. heads may be null in harness mode.
  Session(FrameSequence frames, const EmbeddingProvider& provider, int object_count, SessionConfig cfg,
          std::shared_ptr<const HeadPair> heads = nullptr, const ProgressFn& encode_progress = {});

  /// Interaction branch for the next round. Returns the mask of the annotated
  /// frame at full resolution.
  LabelMask run_interaction(const ScribbleSet& scribbles);
  /// Propagation branch for the round begun by run_interaction.
  RoundResult propagate_round(const ProgressFn& progress = {});
  RoundResult round(const ScribbleSet& scribbles, const ProgressFn& progress = {});

  int current_round() const { return round_; }
  int frame_count() const { return frames_.size(); }
  int object_count() const { return objects_; }
  int height() const { return frames_.height(); }
  int width() const { return frames_.width(); }
  int encoder_invocations() const { return encoder_invocations_; }
  const std::vector<int>& annotated_history() const { return annotated_; }
  const SessionConfig& config() const { return cfg_; }
  const FrameSequence& frames() const { return frames_; }
  const std::vector<Embedding>& embeddings() const { return embeddings_; }
  const GlobalMapMemory& global_memory() const { return global_; }
  const LocalMapMemory& local_memory() const { return local_; }
  /// Completed rounds; results()[r - 1] is round r.
  const std::vector<RoundResult>& results() const { return results_; }

  /// Writes frames/, embeddings/ and session.json.
  void save_initial(const std::filesystem::path& dir) const;
  /// Writes rounds/<r>/, memory/ and session.json for the last completed round.
  void save_round(const std::filesystem::path& dir) const;
  /// Reloads a saved session without re-encoding.
  static std::unique_ptr<Session> load(const std::filesystem::path& dir, std::shared_ptr<const HeadPair> heads = nullptr);

 private:
  Session() = default;
  Grid<Real> propagation_logit(int t, ObjectId o, const ScalarMap& global, const ScalarMap& local,
                               const BinaryGrid& prev_mask) const;
  LabelMask full_mask(const std::vector<Grid<Real>>& logits) const;
  void write_manifest(const std::filesystem::path& dir) const;

  FrameSequence frames_;
  int objects_ = 0;
  SessionConfig cfg_;
  std::shared_ptr<const HeadPair> heads_;
  std::vector<Embedding> embeddings_;
  int encoder_invocations_ = 0;
  GlobalMapMemory global_;
  LocalMapMemory local_;
  std::vector<int> annotated_;
  int round_ = 0;
  bool interaction_pending_ = false;
  RoundResult pending_;
  std::vector<PixelSet> evidence_;  // per object, this round's positive scribble cells
  std::vector<RoundResult> results_;
};

/// Adapts a Session to the benchmark driver.
class SessionPipeline final : public InteractivePipeline {
 public:
  SessionPipeline(const Video& video, const EmbeddingProvider& provider, SessionConfig cfg,
                  std::shared_ptr<const HeadPair> heads);
  std::vector<LabelMask> round(const ScribbleSet& scribbles) override;
  const Session& session() const { return session_; }

 private:
  Session session_;
};

}  // namespace ivos
