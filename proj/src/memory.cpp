#include "ivos/memory.hpp"

#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ivos/embedding.hpp"
#include "ivos/image_io.hpp"

namespace ivos {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string padded(int v) {
  std::string s = std::to_string(v);
  return std::string(s.size() < 5 ? 5 - s.size() : 0, '0') + s;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw LoadError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("bad JSON in " + p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const json& j) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw LoadError("cannot write " + p.string());
  out << j.dump(2);
}

}  // namespace

GlobalMapMemory::GlobalMapMemory(int frames, int objects, int rows, int cols)
    : frames_(frames), objects_(objects), rows_(rows), cols_(cols) {
  detail::require(frames >= 0 && objects >= 1 && rows >= 1 && cols >= 1, "GlobalMapMemory: bad dimensions");
  store_.assign(static_cast<std::size_t>(frames) * objects, ScalarMap::Ones(rows, cols));
  round_written_.assign(store_.size(), 0);
}

std::size_t GlobalMapMemory::slot(int t, ObjectId o) const {
  detail::require(t >= 0 && t < frames_, "GlobalMapMemory: frame index out of range");
  detail::require(o < objects_, "GlobalMapMemory: object out of range");
  return static_cast<std::size_t>(t) * objects_ + o;
}

void GlobalMapMemory::write(int t, ObjectId o, int round, const ScalarMap& map) {
  const std::size_t s = slot(t, o);
  detail::require(round >= 1, "GlobalMapMemory::write: round must be >= 1");
  detail::require(map.rows() == rows_ && map.cols() == cols_, "GlobalMapMemory::write: map dimensions mismatch");
  store_[s] = store_[s].min(map);
  round_written_[s] = std::max(round_written_[s], round);
}

const ScalarMap& GlobalMapMemory::read(int t, ObjectId o) const { return store_[slot(t, o)]; }

int GlobalMapMemory::last_round(int t, ObjectId o) const { return round_written_[slot(t, o)]; }

void GlobalMapMemory::save(const fs::path& dir, int stride) const {
  fs::create_directories(dir);
  json manifest{{"frames", frames_}, {"objects", objects_}, {"rows", rows_}, {"cols", cols_}, {"stride", stride}};
  json rounds = json::array();
  for (int t = 0; t < frames_; ++t)
    for (int o = 0; o < objects_; ++o) {
      rounds.push_back(round_written_[slot(t, static_cast<ObjectId>(o))]);
      save_scalar_map(dir / ("t" + padded(t) + "_o" + std::to_string(o) + ".maef"),
                      store_[slot(t, static_cast<ObjectId>(o))], stride);
    }
  manifest["round_written"] = std::move(rounds);
  write_json(dir / "global.json", manifest);
}

GlobalMapMemory GlobalMapMemory::load(const fs::path& dir) {
  const json m = read_json(dir / "global.json");
  GlobalMapMemory mem(m.at("frames").get<int>(), m.at("objects").get<int>(), m.at("rows").get<int>(),
                      m.at("cols").get<int>());
  const auto& rounds = m.at("round_written");
  if (rounds.size() != mem.store_.size()) throw FormatError("global memory manifest: round table size mismatch");
  for (int t = 0; t < mem.frames_; ++t)
    for (int o = 0; o < mem.objects_; ++o) {
      const std::size_t s = mem.slot(t, static_cast<ObjectId>(o));
      ScalarMap map = load_scalar_map(dir / ("t" + padded(t) + "_o" + std::to_string(o) + ".maef"));
      if (map.rows() != mem.rows_ || map.cols() != mem.cols_) throw FormatError("global memory map size mismatch");
      mem.store_[s] = std::move(map);
      mem.round_written_[s] = rounds[s].get<int>();
    }
  return mem;
}

LocalMapMemory::LocalMapMemory(int frames, int objects, std::optional<int> retain_rounds)
    : frames_(frames), objects_(objects), retain_(retain_rounds) {
  detail::require(frames >= 0 && objects >= 1, "LocalMapMemory: bad dimensions");
  detail::require(!retain_ || *retain_ >= 1, "LocalMapMemory: retention must be >= 1");
}

void LocalMapMemory::begin_round(int round, int annotated_frame) {
  detail::require(round == rounds() + 1, "LocalMapMemory::begin_round: rounds must advance by one");
  detail::require(annotated_frame >= 0 && annotated_frame < frames_, "LocalMapMemory: annotated frame out of range");
  annotated_.push_back(annotated_frame);
  if (retain_) {
    for (auto it = store_.begin(); it != store_.end();) {
      if (round - std::get<1>(it->first) >= *retain_)
        it = store_.erase(it);
      else
        ++it;
    }
  }
}

void LocalMapMemory::write(int t, int round, ObjectId o, const ScalarMap& map) {
  detail::require(t >= 0 && t < frames_, "LocalMapMemory::write: frame out of range");
  detail::require(o < objects_, "LocalMapMemory::write: object out of range");
  detail::require(round >= 1 && round <= rounds(), "LocalMapMemory::write: round has not begun");
  const auto [it, inserted] = store_.try_emplace(Key{t, round, o}, map);
  if (!inserted) throw ContractViolation("LocalMapMemory::write: duplicate entry for (t, round, o)");
}

std::optional<LocalRead> LocalMapMemory::read(int t, ObjectId o, int current_round,
                                              const ForgettingConfig& cfg) const {
  cfg.validate();
  detail::require(t >= 0 && t < frames_, "LocalMapMemory::read: frame out of range");
  detail::require(current_round >= 1 && current_round <= rounds(), "LocalMapMemory::read: round out of range");
  int best_round = 0;
  int best_dist = 0;
  for (int r = current_round; r >= std::max(1, current_round - cfg.rounds + 1); --r) {
    if (!store_.contains(Key{t, r, o})) continue;
    const int d = std::abs(t - annotated_[r - 1]);
    // Iterating from the newest round, strict < keeps ties on the newer round.
    if (best_round == 0 || d < best_dist) {
      best_round = r;
      best_dist = d;
    }
  }
  if (best_round == 0) return std::nullopt;
  return LocalRead{store_.at(Key{t, best_round, o}), best_round};
}

bool LocalMapMemory::contains(int t, int round, ObjectId o) const { return store_.contains(Key{t, round, o}); }

std::vector<std::tuple<int, int, int>> LocalMapMemory::keys() const {
  std::vector<std::tuple<int, int, int>> k;
  for (const auto& [key, _] : store_) k.push_back(key);
  return k;
}

const ScalarMap& LocalMapMemory::entry(int t, int round, ObjectId o) const {
  const auto it = store_.find(Key{t, round, o});
  if (it == store_.end()) throw ContractViolation("LocalMapMemory::entry: no such entry");
  return it->second;
}

void LocalMapMemory::save(const fs::path& dir, int stride) const {
  fs::create_directories(dir);
  // Stale files from evicted entries are removed.
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".maef") fs::remove(e.path());
  json entries = json::array();
  for (const auto& [key, map] : store_) {
    const auto [t, r, o] = key;
    const std::string name = "t" + padded(t) + "_r" + std::to_string(r) + "_o" + std::to_string(o) + ".maef";
    save_scalar_map(dir / name, map, stride);
    entries.push_back({{"t", t}, {"round", r}, {"object", o}, {"file", name}});
  }
  json manifest{{"frames", frames_}, {"objects", objects_}, {"annotated_frames", annotated_}, {"entries", entries}};
  if (retain_) manifest["retain_rounds"] = *retain_;
  write_json(dir / "local.json", manifest);
}

LocalMapMemory LocalMapMemory::load(const fs::path& dir) {
  const json m = read_json(dir / "local.json");
  std::optional<int> retain;
  if (m.contains("retain_rounds")) retain = m["retain_rounds"].get<int>();
  LocalMapMemory mem(m.at("frames").get<int>(), m.at("objects").get<int>(), retain);
  mem.annotated_ = m.at("annotated_frames").get<std::vector<int>>();
  for (const auto& e : m.at("entries")) {
    const Key key{e.at("t").get<int>(), e.at("round").get<int>(), e.at("object").get<int>()};
    mem.store_.emplace(key, load_scalar_map(dir / e.at("file").get<std::string>()));
  }
  return mem;
}

}  // namespace ivos
