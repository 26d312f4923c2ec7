#include "ivos/metrics.hpp"

#include <cmath>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <regex>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ivos {

namespace fs = std::filesystem;

double jaccard(const LabelMask& pred, const LabelMask& gt, ObjectId o) {
  detail::require(pred.rows() == gt.rows() && pred.cols() == gt.cols(), "jaccard: mask dimensions differ");
  const auto p = pred.labels == o;
  const auto g = gt.labels == o;
  const auto inter = (p && g).count();
  const auto uni = (p || g).count();
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double mean_object_jaccard(const LabelMask& pred, const LabelMask& gt, int object_count) {
  detail::require(object_count >= 2, "mean_object_jaccard: need at least one object");
  double s = 0;
  for (int o = 1; o < object_count; ++o) s += jaccard(pred, gt, static_cast<ObjectId>(o));
  return s / (object_count - 1);
}

void RoundCurve::validate() const {
  for (std::size_t i = 1; i < points.size(); ++i)
    detail::require(points[i].budget > points[i - 1].budget, "RoundCurve: budgets must strictly increase");
  for (const auto& p : points) detail::require(p.j >= 0.0 && p.j <= 1.0, "RoundCurve: J outside [0, 1]");
}

double auc(const RoundCurve& curve) {
  detail::require(curve.points.size() >= 2, "auc: need at least two points");
  curve.validate();
  double area = 0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    area += 0.5 * (a.j + b.j) * (b.budget - a.budget);
  }
  return area / (curve.points.back().budget - curve.points.front().budget);
}

double j_at_budget(const RoundCurve& curve, double budget) {
  detail::require(!curve.points.empty(), "j_at_budget: empty curve");
  curve.validate();
  const auto& pts = curve.points;
  if (budget <= pts.front().budget) return pts.front().j;
  if (budget >= pts.back().budget) return pts.back().j;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (budget <= pts[i].budget) {
      const double t = (budget - pts[i - 1].budget) / (pts[i].budget - pts[i - 1].budget);
      return pts[i - 1].j + t * (pts[i].j - pts[i - 1].j);
    }
  }
  return pts.back().j;
}

void write_records_csv(const fs::path& path, const std::vector<RoundRecord>& records) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw LoadError("cannot write " + path.string());
  out << "video,round,frame,object,jaccard,annotated_frame,millis\n";
  out << std::setprecision(17);
  for (const auto& r : records)
    out << r.video << ',' << r.round << ',' << r.frame << ',' << r.object << ',' << r.jaccard << ','
        << r.annotated_frame << ',' << r.millis << '\n';
}

std::vector<RoundRecord> read_records_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("video,round,frame,object,jaccard", 0) != 0) throw FormatError("records CSV: unexpected header");
  std::vector<RoundRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    // Numeric fields are split off the right so video names may hold commas.
    std::vector<std::string> f(7);
    std::string rest = line;
    bool ok = true;
    for (int i = 6; i >= 1 && ok; --i) {
      const auto comma = rest.rfind(',');
      ok = comma != std::string::npos;
      if (!ok) break;
      f[i] = rest.substr(comma + 1);
      rest.resize(comma);
    }
    f[0] = rest;
    if (!ok) throw FormatError("records CSV: line " + std::to_string(lineno) + " has wrong field count");
    try {
      out.push_back({f[0], std::stoi(f[1]), std::stoi(f[2]), std::stoi(f[3]), std::stod(f[4]), std::stoi(f[5]),
                     std::stod(f[6])});
    } catch (const std::exception&) {
      throw FormatError("records CSV: unparsable line " + std::to_string(lineno));
    }
  }
  return out;
}

namespace {

// video -> round -> frame -> (sum J, object count), plus per-round millis.
struct Aggregate {
  std::map<std::string, std::map<int, std::map<int, std::pair<double, int>>>> j;
  std::map<std::string, std::map<int, double>> millis;
};

Aggregate aggregate(const std::vector<RoundRecord>& records) {
  Aggregate a;
  for (const auto& r : records) {
    if (r.object == kBackground) continue;
    auto& cell = a.j[r.video][r.round][r.frame];
    cell.first += r.jaccard;
    cell.second += 1;
    a.millis[r.video][r.round] = r.millis;
  }
  return a;
}

double video_round_mean(const std::map<int, std::pair<double, int>>& frames) {
  double s = 0;
  for (const auto& [_, v] : frames) s += v.first / v.second;
  return s / static_cast<double>(frames.size());
}

}  // namespace

RoundCurve round_curve(const std::vector<RoundRecord>& records) {
  const Aggregate a = aggregate(records);
  std::set<int> rounds;
  for (const auto& [_, per_round] : a.j)
    for (const auto& [r, __] : per_round) rounds.insert(r);
  RoundCurve curve;
  for (int r : rounds) {
    double s = 0;
    int n = 0;
    for (const auto& [_, per_round] : a.j) {
      const auto it = per_round.find(r);
      if (it == per_round.end()) continue;
      s += video_round_mean(it->second);
      ++n;
    }
    curve.points.push_back({static_cast<double>(r), s / n});
  }
  return curve;
}

RoundCurve time_curve(const std::vector<RoundRecord>& records) {
  const Aggregate a = aggregate(records);
  std::set<int> rounds;
  for (const auto& [_, per_round] : a.j)
    for (const auto& [r, __] : per_round) rounds.insert(r);
  RoundCurve curve;
  for (int r : rounds) {
    double s = 0, t = 0;
    int n = 0;
    for (const auto& [video, per_round] : a.j) {
      const auto it = per_round.find(r);
      if (it == per_round.end()) continue;
      s += video_round_mean(it->second);
      double elapsed = 0;
      for (const auto& [rr, ms] : a.millis.at(video))
        if (rr <= r) elapsed += ms;
      t += elapsed / 1000.0;
      ++n;
    }
    curve.points.push_back({t / n, s / n});
  }
  return curve;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::vector<ReportSummary> report(const std::vector<LabeledRun>& runs, const fs::path& out_dir) {
  detail::require(!runs.empty(), "report: no runs to report");
  std::vector<ReportSummary> summaries;
  for (const auto& run : runs) {
    detail::require(!run.records.empty(), "report: run '" + run.label + "' has no records");
    ReportSummary s;
    s.label = run.label;
    s.curve = round_curve(run.records);
    s.auc = s.curve.points.size() >= 2 ? auc(s.curve) : s.curve.points.front().j;
    s.j_final = s.curve.points.back().j;
    summaries.push_back(std::move(s));
  }

  std::error_code ec;
  fs::create_directories(out_dir / "curves", ec);
  if (ec) throw LoadError("cannot create " + (out_dir / "curves").string() + ": " + ec.message());

  nlohmann::json summary = nlohmann::json::array();
  for (const auto& s : summaries) {
    const fs::path p = out_dir / "curves" / (s.label + ".csv");
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw LoadError("cannot write " + p.string());
    out << "round,mean_j\n";
    for (const auto& pt : s.curve.points) out << fmt(pt.budget) << ',' << fmt(pt.j) << '\n';
    nlohmann::json js{{"label", s.label}, {"auc", s.auc}, {"j_final", s.j_final}};
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& pt : s.curve.points) pts.push_back({pt.budget, pt.j});
    js["curve"] = pts;
    summary.push_back(js);
  }
  {
    std::ofstream out(out_dir / "summary.json", std::ios::trunc);
    if (!out) throw LoadError("cannot write summary.json in " + out_dir.string());
    out << summary.dump(2);
  }

  // J-vs-round plot.
  const double width = 640, height = 400, margin = 50;
  double bmin = summaries[0].curve.points.front().budget, bmax = bmin;
  for (const auto& s : summaries)
    for (const auto& pt : s.curve.points) {
      bmin = std::min(bmin, pt.budget);
      bmax = std::max(bmax, pt.budget);
    }
  if (bmax == bmin) bmax = bmin + 1;
  auto px = [&](double b) { return margin + (b - bmin) / (bmax - bmin) * (width - 2 * margin); };
  auto py = [&](double j) { return height - margin - j * (height - 2 * margin); };
  static const char* palette[] = {"#0072B2", "#D55E00", "#009E73", "#CC79A7", "#E69F00", "#56B4E9", "#F0E442"};

  std::ofstream svg(out_dir / "curves.svg", std::ios::trunc);
  if (!svg) throw LoadError("cannot write curves.svg in " + out_dir.string());
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << margin << "\" y1=\"" << py(0) << "\" x2=\"" << width - margin << "\" y2=\"" << py(0)
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << margin << "\" y1=\"" << py(0) << "\" x2=\"" << margin << "\" y2=\"" << py(1)
      << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">round</text>\n";
  svg << "<text x=\"15\" y=\"" << height / 2 << "\" transform=\"rotate(-90 15 " << height / 2
      << ")\" text-anchor=\"middle\">mean J</text>\n";
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    const auto& s = summaries[i];
    std::ostringstream data, pixels;
    for (std::size_t k = 0; k < s.curve.points.size(); ++k) {
      const auto& pt = s.curve.points[k];
      if (k) {
        data << ' ';
        pixels << ' ';
      }
      data << fmt(pt.budget) << ',' << fmt(pt.j);
      pixels << px(pt.budget) << ',' << py(pt.j);
    }
    const char* color = palette[i % std::size(palette)];
    svg << "<polyline class=\"series\" data-label=\"" << escape_xml(s.label) << "\" data-points=\"" << data.str()
        << "\" points=\"" << pixels.str() << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << width - margin - 120 << "\" y=\"" << margin + 18 * i << "\" fill=\"" << color << "\">"
        << escape_xml(s.label) << "</text>\n";
  }
  svg << "</svg>\n";
  return summaries;
}

std::map<std::string, std::vector<CurvePoint>> parse_svg_series(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), {});
  std::map<std::string, std::vector<CurvePoint>> out;
  const std::regex series(R"re(<polyline class="series" data-label="([^"]*)" data-points="([^"]*)")re");
  for (auto it = std::sregex_iterator(text.begin(), text.end(), series); it != std::sregex_iterator(); ++it) {
    std::vector<CurvePoint> pts;
    std::stringstream ss((*it)[2].str());
    std::string pair;
    while (ss >> pair) {
      const auto comma = pair.find(',');
      pts.push_back({std::stod(pair.substr(0, comma)), std::stod(pair.substr(comma + 1))});
    }
    out[(*it)[1].str()] = std::move(pts);
  }
  return out;
}

bool monotone_then_flat(const std::vector<double>& values, double tol) {
  const std::size_t n = values.size();
  for (std::size_t p = 0; p < n; ++p) {
    bool ok = true;
    for (std::size_t i = 1; i <= p && ok; ++i) ok = values[i] >= values[i - 1] - tol;
    for (std::size_t i = p + 1; i < n && ok; ++i) ok = std::abs(values[i] - values[p]) <= tol;
    if (ok) return true;
  }
  return n == 0;
}

}  // namespace ivos
