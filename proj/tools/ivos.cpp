// ivos: corpus generation, training, robot benchmarks, reports and the
// annotation service.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "ivos/experiment.hpp"
#include "ivos/service.hpp"

namespace fs = std::filesystem;
using namespace ivos;

namespace {

void parse_size(const std::string& s, int& h, int& w) {
  if (std::sscanf(s.c_str(), "%dx%d", &h, &w) != 2) throw ValidationError("size must look like HxW, got " + s);
}

void write_summary(const fs::path& path, const std::vector<RoundRecord>& records) {
  const RoundCurve c = round_curve(records);
  nlohmann::json j{{"rounds", c.points.size()}, {"j_final", c.points.empty() ? 0.0 : c.points.back().j}};
  if (c.points.size() >= 2) j["auc"] = auc(c);
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& p : c.points) curve.push_back({p.budget, p.j});
  j["curve"] = curve;
  std::ofstream(path) << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive video object segmentation with memory aggregation"};
  app.require_subcommand(1);

  // corpus
  auto* corpus = app.add_subcommand("corpus", "Write a synthetic corpus");
  SyntheticConfig sc;
  int videos = 8;
  std::string size = "64x64";
  fs::path corpus_out;
  corpus->add_option("--seed", sc.seed, "Base seed");
  corpus->add_option("--videos", videos, "Number of videos")->check(CLI::PositiveNumber);
  corpus->add_option("--frames", sc.frames, "Frames per video");
  corpus->add_option("--size", size, "Frame size HxW");
  corpus->add_option("--objects", sc.objects, "Foreground objects per video");
  corpus->add_option("--out", corpus_out, "Output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Train both heads on a corpus");
  ExperimentConfig ec;
  fs::path train_corpus, model_out;
  train->add_option("--corpus", train_corpus, "Corpus directory")->required();
  train->add_option("--out", model_out, "Model directory")->required();
  train->add_option("--stage1-steps", ec.stage1.steps, "Propagation head steps");
  train->add_option("--stage2-steps", ec.stage2.steps, "Interaction head steps");
  train->add_option("--lr", ec.stage1.lr, "Learning rate (both stages)");
  train->add_option("--seed", ec.init_seed, "Initialization seed");

  // bench
  auto* bench = app.add_subcommand("bench", "Run the robot benchmark");
  fs::path bench_corpus, bench_model, bench_out;
  int rounds = 8;
  bool no_global = false, no_augmented = false;
  int window = 12, forget = 2;
  RobotConfig robot;
  bench->add_option("--corpus", bench_corpus, "Corpus directory")->required();
  bench->add_option("--model", bench_model, "Model directory (harness mode when absent)");
  bench->add_option("--rounds", rounds, "Interaction rounds")->check(CLI::PositiveNumber);
  bench->add_option("--window", window, "Local window k")->check(CLI::PositiveNumber);
  bench->add_option("--forget", forget, "Local memory horizon R")->check(CLI::PositiveNumber);
  bench->add_flag("--no-global", no_global, "Write global maps in round 1 only");
  bench->add_flag("--no-augmented", no_augmented, "Skip the augmented map");
  bench->add_option("--robot-seed", robot.seed, "Robot seed");
  bench->add_option("--out", bench_out, "Records CSV")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Curves, AUC and plots from benchmark records");
  std::vector<fs::path> records;
  std::vector<std::string> labels;
  fs::path eval_out;
  eval->add_option("--records", records, "Records CSV (repeatable)")->required();
  eval->add_option("--label", labels, "Label per records file");
  eval->add_option("--out", eval_out, "Output directory")->required();

  // serve
  auto* serve = app.add_subcommand("serve", "Run the annotation service");
  fs::path root = "sessions", serve_model;
  std::string address = "127.0.0.1";
  unsigned short port = 8080;
  serve->add_option("--root", root, "Session storage root (IVOS_ROOT overrides)");
  serve->add_option("--port", port, "Port");
  serve->add_option("--address", address, "Bind address");
  serve->add_option("--model", serve_model, "Model directory (harness mode when absent)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (corpus->parsed()) {
      parse_size(size, sc.height, sc.width);
      for (const auto& v : generate_corpus(sc, videos)) write_video(corpus_out, v);
      std::cout << "wrote " << videos << " videos to " << corpus_out << '\n';
    } else if (train->parsed()) {
      ec.stage1.schedule.ramp_steps = ec.stage1.steps;
      ec.stage2.lr = ec.stage1.lr;
      ec.stage2.schedule.ramp_steps = ec.stage2.steps;
      const auto vids = read_corpus(train_corpus);
      TrainResult s1, s2;
      const Model m = train_model(vids, ec, &s1, &s2);
      fs::create_directories(model_out);
      save_model(model_out, m);
      write_loss_trace(model_out / "stage1_loss.csv", s1.trace);
      write_loss_trace(model_out / "stage2_loss.csv", s2.trace);
      for (const auto& w : s1.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << "saved model to " << model_out << '\n';
    } else if (bench->parsed()) {
      const auto vids = read_corpus(bench_corpus);
      const Model m = bench_model.empty() ? Model{ExperimentConfig{}.embedding, ExperimentConfig{}.stride, nullptr}
                                          : load_model(bench_model);
      SessionConfig cfg;
      cfg.global_aggregation = !no_global;
      cfg.augmented_map = !no_augmented;
      cfg.match.window = window;
      cfg.forgetting.rounds = forget;
      const auto rec = benchmark_model(vids, m, cfg, rounds, robot);
      write_records_csv(bench_out, rec);
      fs::path summary = bench_out;
      write_summary(summary.replace_extension(".json"), rec);
      const RoundCurve c = round_curve(rec);
      for (const auto& p : c.points) std::cout << "round " << p.budget << "  J " << p.j << '\n';
    } else if (eval->parsed()) {
      if (!labels.empty() && labels.size() != records.size())
        throw ValidationError("give one --label per --records file");
      std::vector<LabeledRun> runs;
      for (std::size_t i = 0; i < records.size(); ++i)
        runs.push_back({labels.empty() ? records[i].stem().string() : labels[i], read_records_csv(records[i])});
      for (const auto& s : report(runs, eval_out))
        std::cout << s.label << "  AUC " << s.auc << "  J(final) " << s.j_final << '\n';
    } else if (serve->parsed()) {
      if (const char* env = std::getenv("IVOS_ROOT"); env && *env) root = env;
      ServiceConfig cfg;
      cfg.root = root;
      if (!serve_model.empty()) {
        const Model m = load_model(serve_model);
        cfg.embedding = m.embedding;
        cfg.heads = m.heads;
        cfg.session.stride = m.stride;
        cfg.session.mode = DecisionMode::kHeads;
      } else {
        cfg.session.stride = ExperimentConfig{}.stride;
      }
      SessionManager manager(cfg);
      HttpServer server(manager, address, port);
      std::cout << "serving " << root << " on " << address << ':' << server.port() << std::endl;
      server.run();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
