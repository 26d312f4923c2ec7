#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ivos/core.hpp"

namespace ivos {

/// |pred_o ∩ gt_o| / |pred_o ∪ gt_o|, 1 when both are empty.
double jaccard(const LabelMask& pred, const LabelMask& gt, ObjectId o);

/// Mean Jaccard over objects 1..object_count-1.
double mean_object_jaccard(const LabelMask& pred, const LabelMask& gt, int object_count);

struct CurvePoint {
  double budget = 0;
  double j = 0;
};

/// J versus interaction budget (rounds or seconds). Budgets strictly increase.
struct RoundCurve {
  std::vector<CurvePoint> points;
  void validate() const;
};

/// Trapezoidal area normalized by the budget span. Needs >= 2 points.
double auc(const RoundCurve& curve);

/// Linear interpolation at `budget`, clamped to the first/last point.
double j_at_budget(const RoundCurve& curve, double budget);

/// One row of benchmark output.
struct RoundRecord {
  std::string video;
  int round = 0;
  int frame = 0;
  int object = 0;
  double jaccard = 0;
  int annotated_frame = 0;
  double millis = 0;
  bool operator==(const RoundRecord&) const = default;
};

void write_records_csv(const std::filesystem::path& path, const std::vector<RoundRecord>& records);
std::vector<RoundRecord> read_records_csv(const std::filesystem::path& path);

/// Mean J per round (objects, then frames, then videos), budget axis = round.
RoundCurve round_curve(const std::vector<RoundRecord>& records);

/// Same averaging with cumulative seconds as the budget axis (mean over videos
/// of the elapsed time after each round).
RoundCurve time_curve(const std::vector<RoundRecord>& records);

/// A labeled benchmark run for reporting.
struct LabeledRun {
  std::string label;
  std::vector<RoundRecord> records;
};

struct ReportSummary {
  std::string label;
  RoundCurve curve;
  double auc = 0;
  double j_final = 0;
};

/// Writes curves/<label>.csv, summary.json and curves.svg under out_dir.
/// Throws ContractViolation on an empty run list, LoadError on I/O failure.
std::vector<ReportSummary> report(const std::vector<LabeledRun>& runs, const std::filesystem::path& out_dir);

/// True when some prefix of `values` never drops by more than `tol` from one
/// entry to the next and every later entry stays within `tol` of the last
/// prefix entry (rise, then plateau).
bool monotone_then_flat(const std::vector<double>& values, double tol);

/// Parses the data series back out of an SVG written by report():
/// label -> (budget, J) points.
std::map<std::string, std::vector<CurvePoint>> parse_svg_series(const std::filesystem::path& svg);

}  // namespace ivos
