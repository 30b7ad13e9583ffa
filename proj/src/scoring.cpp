#include "oeasd/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "oeasd/error.hpp"

namespace oeasd {

double aggregate(std::span<const double> chunk_scores) {
  if (chunk_scores.empty()) fail(ErrorKind::validation, "cannot aggregate an empty score list");
  std::vector<double> sorted(chunk_scores.begin(), chunk_scores.end());
  for (double s : sorted) {
    if (!std::isfinite(s)) fail(ErrorKind::validation, "chunk score is not finite");
  }
  const std::size_t top = (sorted.size() + 1) / 2;
  std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(top), sorted.end(),
                    std::greater<>());
  std::sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(top), std::greater<>());
  double sum = 0.0;
  for (std::size_t i = 0; i < top; ++i) sum += sorted[i];
  return sum / static_cast<double>(top);
}

namespace {

struct Roc {
  // Cumulative (fp, tp) counts after each distinct threshold, descending.
  std::vector<std::pair<long, long>> points;
  long positives = 0;
  long negatives = 0;
};

Roc build_roc(std::span<const double> scores, const std::vector<bool>& anomalous) {
  if (scores.size() != anomalous.size()) fail(ErrorKind::shape, "scores and labels differ in length");
  Roc roc;
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) fail(ErrorKind::validation, "score is not finite");
    (anomalous[i] ? roc.positives : roc.negatives)++;
  }
  if (roc.positives == 0 || roc.negatives == 0) {
    fail(ErrorKind::validation, "AUC needs both normal and anomalous clips");
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  long fp = 0, tp = 0;
  roc.points.emplace_back(0, 0);
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) (anomalous[order[i]] ? tp : fp)++;
    roc.points.emplace_back(fp, tp);
  }
  return roc;
}

}  // namespace

double auc(std::span<const double> scores, const std::vector<bool>& anomalous) {
  return pauc(scores, anomalous, 1.0);
}

double pauc(std::span<const double> scores, const std::vector<bool>& anomalous, double p) {
  if (!(p > 0.0 && p <= 1.0)) fail(ErrorKind::validation, "pAUC limit must lie in (0, 1]");
  const Roc roc = build_roc(scores, anomalous);
  const double P = static_cast<double>(roc.positives);
  const double N = static_cast<double>(roc.negatives);
  // Whole trapezoids are summed exactly in units of 1/(2 P N). The partial
  // segment is added in units of 1/P so that full TPR up to the limit sums
  // to exactly p N.
  const double fp_limit = p * N;
  long long twice_area = 0;
  double partial = 0.0;
  bool has_partial = false;
  for (std::size_t k = 1; k < roc.points.size(); ++k) {
    const auto [fp0, tp0] = roc.points[k - 1];
    const auto [fp1, tp1] = roc.points[k];
    if (static_cast<double>(fp1) <= fp_limit) {
      twice_area += static_cast<long long>(fp1 - fp0) * (tp0 + tp1);
      continue;
    }
    if (static_cast<double>(fp0) < fp_limit) {
      const double w = fp_limit - static_cast<double>(fp0);
      const double tp_at = tp0 + (tp1 - tp0) * w / static_cast<double>(fp1 - fp0);
      partial = w * ((tp0 + tp_at) / (2.0 * P));
      has_partial = true;
    }
    break;
  }
  if (!has_partial) return static_cast<double>(twice_area) / (2.0 * P * fp_limit);
  return (static_cast<double>(twice_area) / (2.0 * P) + partial) / fp_limit;
}

MetricRow evaluate_id(const std::string& machine_type, int machine_id, std::span<const ClipScore> clips, double p) {
  std::vector<double> s;
  std::vector<bool> y;
  for (const ClipScore& c : clips) {
    s.push_back(c.score);
    y.push_back(c.truth == Condition::anomalous);
  }
  MetricRow row{machine_type, machine_id, 0.0, 0.0, 0.0};
  try {
    row.auc = auc(s, y);
    row.pauc = pauc(s, y, p);
  } catch (const Error& e) {
    fail(e.kind(), machine_type + " id " + std::to_string(machine_id) + ": " + e.what());
  }
  row.aauc = (row.auc + row.pauc) / 2.0;
  return row;
}

std::vector<TypeSummary> rollup(std::span<const MetricRow> rows) {
  std::vector<TypeSummary> out;
  std::vector<int> counts;
  for (const MetricRow& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const TypeSummary& t) { return t.machine_type == r.machine_type; });
    if (it == out.end()) {
      out.push_back({r.machine_type, 0.0, 0.0, 0.0, r.auc, r.pauc, r.aauc});
      counts.push_back(0);
      it = out.end() - 1;
    }
    auto& n = counts[static_cast<std::size_t>(it - out.begin())];
    ++n;
    it->mean_auc += r.auc;
    it->mean_pauc += r.pauc;
    it->mean_aauc += r.aauc;
    it->min_auc = std::min(it->min_auc, r.auc);
    it->min_pauc = std::min(it->min_pauc, r.pauc);
    it->min_aauc = std::min(it->min_aauc, r.aauc);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].mean_auc /= counts[i];
    out[i].mean_pauc /= counts[i];
    out[i].mean_aauc /= counts[i];
  }
  return out;
}

std::string format_metric(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10f", v);
  return buf;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) fail(ErrorKind::file, "cannot write " + path.string());
  return f;
}

}  // namespace

void write_scores_csv(const std::filesystem::path& path, std::span<const ClipScore> clips) {
  auto f = open_out(path);
  f << "clip_id,machine_type,machine_id,truth,score\n";
  for (const ClipScore& c : clips) {
    f << c.clip_id << ',' << c.machine_type << ',' << c.machine_id << ',' << to_string(c.truth) << ','
      << format_metric(c.score) << '\n';
  }
  if (!f) fail(ErrorKind::file, "write failed: " + path.string());
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricRow> rows) {
  auto f = open_out(path);
  f << "machine_type,machine_id,auc,pauc,aauc\n";
  for (const MetricRow& r : rows) {
    f << r.machine_type << ',' << r.machine_id << ',' << format_metric(r.auc) << ',' << format_metric(r.pauc)
      << ',' << format_metric(r.aauc) << '\n';
  }
  for (const TypeSummary& t : rollup(rows)) {
    f << t.machine_type << ",mean," << format_metric(t.mean_auc) << ',' << format_metric(t.mean_pauc) << ','
      << format_metric(t.mean_aauc) << '\n';
    f << t.machine_type << ",min," << format_metric(t.min_auc) << ',' << format_metric(t.min_pauc) << ','
      << format_metric(t.min_aauc) << '\n';
  }
  if (!f) fail(ErrorKind::file, "write failed: " + path.string());
}

std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::file, "cannot read " + path.string());
  std::string line;
  std::getline(f, line);
  if (line != "machine_type,machine_id,auc,pauc,aauc") fail(ErrorKind::parse, "unexpected metrics header in " + path.string());
  std::vector<MetricRow> rows;
  while (std::getline(f, line)) {
    std::stringstream ss(line);
    std::string type, id, a, pa, aa;
    if (!std::getline(ss, type, ',') || !std::getline(ss, id, ',') || !std::getline(ss, a, ',') ||
        !std::getline(ss, pa, ',') || !std::getline(ss, aa)) {
      fail(ErrorKind::parse, "malformed metrics row: " + line);
    }
    if (id == "mean" || id == "min") continue;
    try {
      rows.push_back({type, std::stoi(id), std::stod(a), std::stod(pa), std::stod(aa)});
    } catch (const std::exception&) {
      fail(ErrorKind::parse, "malformed metrics row: " + line);
    }
  }
  return rows;
}

}  // namespace oeasd
