#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include <nlohmann/json.hpp>

#include "ivos/session.hpp"
#include "ivos/synthetic.hpp"
#include "ivos/training.hpp"

namespace ivos {

/// Everything needed to rebuild a trained pipeline: embedding settings plus
/// both heads.
struct Model {
  FeatureEmbeddingConfig embedding;
  int stride = 4;
  std::shared_ptr<const HeadPair> heads;
};

/// Desk-scale defaults: 16-dim features at stride 2, two small heads.
struct ExperimentConfig {
  FeatureEmbeddingConfig embedding{16, 6.0, 0x5eed, 2.0, 0.5, 0.5, 1.0};
  int stride = 2;
  HeadConfig head{2, 32, 5, false};
  std::uint64_t init_seed = 11;
  TrainConfig stage1 = default_stage(1500, 1.0);
  TrainConfig stage2 = default_stage(300, 0.0);

  static TrainConfig default_stage(int steps, double sparse_reference) {
    TrainConfig t;
    t.steps = steps;
    t.lr = 0.05;
    t.schedule = {1.0, 0.15, steps};
    t.sparse_reference = sparse_reference;
    t.mask_jitter = 2;
    return t;
  }
};

/// Stage 1 trains the propagation head, stage 2 the interaction head.
Model train_model(const std::vector<Video>& videos, const ExperimentConfig& cfg, TrainResult* stage1 = nullptr,
                  TrainResult* stage2 = nullptr);

/// Writes model.json, interaction.mahc and propagation.mahc.
void save_model(const std::filesystem::path& dir, const Model& m);
Model load_model(const std::filesystem::path& dir);

/// Robot benchmark of a model (or of harness mode when model.heads is null).
std::vector<RoundRecord> benchmark_model(const std::vector<Video>& videos, const Model& model, SessionConfig session,
                                         int rounds, const RobotConfig& robot);

struct SweepPoint {
  int window = 0;
  std::vector<RoundRecord> records;
  double auc = 0;
  double j_final = 0;
};

/// Benchmarks the model once per local window size k.
std::vector<SweepPoint> window_sweep(const std::vector<Video>& videos, const Model& model, SessionConfig session,
                                     const std::vector<int>& windows, int rounds, const RobotConfig& robot);

}  // namespace ivos
