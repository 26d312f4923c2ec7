#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <tuple>
#include <vector>

#include "ivos/core.hpp"

namespace ivos {

/// Per-(frame, object) running cellwise minimum of matching maps across rounds.
/// Starts at all ones; values never increase.
class GlobalMapMemory {
 public:
  GlobalMapMemory() = default;
  GlobalMapMemory(int frames, int objects, int rows, int cols);

  /// Cellwise min with the stored map. `round` >= 1.
  void write(int t, ObjectId o, int round, const ScalarMap& map);
  const ScalarMap& read(int t, ObjectId o) const;
  /// Last round that wrote (t, o); 0 if never written.
  int last_round(int t, ObjectId o) const;

  int frames() const { return frames_; }
  int objects() const { return objects_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }

  void save(const std::filesystem::path& dir, int stride) const;
  static GlobalMapMemory load(const std::filesystem::path& dir);

 private:
  std::size_t slot(int t, ObjectId o) const;

  int frames_ = 0, objects_ = 0, rows_ = 0, cols_ = 0;
  std::vector<ScalarMap> store_;
  std::vector<int> round_written_;
};

struct ForgettingConfig {
  int rounds = 2;  ///< R: only the past R rounds (current included) are read

  void validate() const { detail::require(rounds >= 1, "ForgettingConfig: R must be >= 1"); }
};

struct LocalRead {
  ScalarMap map;
  int round = 0;
};

/// Per-(frame, round, object) archive of local maps plus the annotated frame
/// of every round.
class LocalMapMemory {
 public:
  LocalMapMemory() = default;
  /// With `retain_rounds`, entries older than that many rounds are evicted
  /// when a new round begins.
  LocalMapMemory(int frames, int objects, std::optional<int> retain_rounds = std::nullopt);

  /// Records the annotated frame of `round`, which must be the next round.
  void begin_round(int round, int annotated_frame);
  /// Stores verbatim. A second write to the same (t, round, o) is a contract violation.
  void write(int t, int round, ObjectId o, const ScalarMap& map);

  /// Among retained rounds r with current_round - R < r <= current_round that
  /// hold an entry for (t, o), returns the one whose annotated frame is
  /// nearest to t, ties to the more recent round. nullopt on a miss.
  std::optional<LocalRead> read(int t, ObjectId o, int current_round, const ForgettingConfig& cfg) const;

  bool contains(int t, int round, ObjectId o) const;
  const std::vector<int>& annotated_frames() const { return annotated_; }
  int rounds() const { return static_cast<int>(annotated_.size()); }
  std::size_t entry_count() const { return store_.size(); }
  std::vector<std::tuple<int, int, int>> keys() const;  // (t, round, o)
  const ScalarMap& entry(int t, int round, ObjectId o) const;

  void save(const std::filesystem::path& dir, int stride) const;
  static LocalMapMemory load(const std::filesystem::path& dir);

 private:
  using Key = std::tuple<int, int, int>;  // (t, round, o)

  int frames_ = 0, objects_ = 0;
  std::optional<int> retain_;
  std::vector<int> annotated_;
  std::map<Key, ScalarMap> store_;
};

}  // namespace ivos
