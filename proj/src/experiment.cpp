#include "ivos/experiment.hpp"

#include "ivos/image_io.hpp"

namespace ivos {

namespace fs = std::filesystem;
using nlohmann::json;

Model train_model(const std::vector<Video>& videos, const ExperimentConfig& cfg, TrainResult* stage1,
                  TrainResult* stage2) {
  const FeatureEmbeddingProvider provider(cfg.embedding);
  const auto encoded = encode_videos(videos, provider, cfg.stride);
  const int in_ch = cfg.embedding.dim + 3;
  TrainResult s1 = train_stage1(HeadParams<Real>::init(cfg.head, in_ch, cfg.init_seed), encoded, cfg.stage1);
  TrainResult s2 = train_stage2(HeadParams<Real>::init(cfg.head, in_ch, cfg.init_seed + 1), encoded, cfg.stage2, &s1.params);
  auto heads = std::make_shared<HeadPair>(HeadPair{s2.params, s1.params});
  if (stage1) *stage1 = std::move(s1);
  if (stage2) *stage2 = std::move(s2);
  return Model{cfg.embedding, cfg.stride, std::move(heads)};
}

void save_model(const fs::path& dir, const Model& m) {
  detail::require(m.heads != nullptr, "save_model: model has no heads");
  const json j{{"dim", m.embedding.dim},
               {"gain", m.embedding.gain},
               {"seed", m.embedding.seed},
               {"color_weight", m.embedding.color_weight},
               {"position_weight", m.embedding.position_weight},
               {"gradient_weight", m.embedding.gradient_weight},
               {"bias", m.embedding.bias},
               {"stride", m.stride}};
  const std::string text = j.dump(2);
  write_file(dir / "model.json", std::vector<std::uint8_t>(text.begin(), text.end()));
  save_checkpoint(dir / "interaction.mahc", m.heads->interaction);
  save_checkpoint(dir / "propagation.mahc", m.heads->propagation);
}

Model load_model(const fs::path& dir) {
  const auto bytes = read_file(dir / "model.json");
  Model m;
  try {
    const json j = json::parse(bytes.begin(), bytes.end());
    m.embedding.dim = j.at("dim").get<int>();
    m.embedding.gain = j.at("gain").get<double>();
    m.embedding.seed = j.at("seed").get<std::uint64_t>();
    m.embedding.color_weight = j.at("color_weight").get<double>();
    m.embedding.position_weight = j.at("position_weight").get<double>();
    m.embedding.gradient_weight = j.at("gradient_weight").get<double>();
    m.embedding.bias = j.at("bias").get<double>();
    m.stride = j.at("stride").get<int>();
  } catch (const json::exception& e) {
    throw FormatError("bad model.json in " + dir.string() + ": " + e.what());
  }
  m.heads = std::make_shared<HeadPair>(
      HeadPair{load_checkpoint(dir / "interaction.mahc"), load_checkpoint(dir / "propagation.mahc")});
  return m;
}

std::vector<RoundRecord> benchmark_model(const std::vector<Video>& videos, const Model& model, SessionConfig session,
                                         int rounds, const RobotConfig& robot) {
  const FeatureEmbeddingProvider provider(model.embedding);
  session.stride = model.stride;
  session.mode = model.heads ? DecisionMode::kHeads : DecisionMode::kHarness;
  const PipelineFactory factory = [&](const Video& v) -> std::unique_ptr<InteractivePipeline> {
    return std::make_unique<SessionPipeline>(v, provider, session, model.heads);
  };
  return run_benchmark(factory, videos, rounds, robot);
}

std::vector<SweepPoint> window_sweep(const std::vector<Video>& videos, const Model& model, SessionConfig session,
                                     const std::vector<int>& windows, int rounds, const RobotConfig& robot) {
  std::vector<SweepPoint> out;
  for (const int k : windows) {
    session.match.window = k;
    SweepPoint p{k, benchmark_model(videos, model, session, rounds, robot), 0, 0};
    const RoundCurve c = round_curve(p.records);
    p.auc = c.points.size() >= 2 ? auc(c) : c.points.front().j;
    p.j_final = c.points.back().j;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace ivos
