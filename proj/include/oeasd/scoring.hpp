#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "oeasd/dataset.hpp"

namespace oeasd {

struct ClipScore {
  std::string clip_id;
  std::string machine_type;
  int machine_id = 0;
  Condition truth = Condition::normal;
  std::vector<double> chunk_scores;
  double score = 0.0;  // aggregate(chunk_scores)
};

/// Mean of the ceil(M/2) largest chunk scores.
double aggregate(std::span<const double> chunk_scores);

/// Mann-Whitney AUC, anomalous = positive class, ties counted one half.
/// Labels: true for anomalous.
double auc(std::span<const double> scores, const std::vector<bool>& anomalous);

/// Area under the empirical ROC over FPR in [0, p], divided by p.
double pauc(std::span<const double> scores, const std::vector<bool>& anomalous, double p = 0.1);

struct MetricRow {
  std::string machine_type;
  int machine_id = 0;
  double auc = 0.0;
  double pauc = 0.0;
  double aauc = 0.0;
};

MetricRow evaluate_id(const std::string& machine_type, int machine_id, std::span<const ClipScore> clips,
                      double p = 0.1);

struct TypeSummary {
  std::string machine_type;
  double mean_auc = 0.0;
  double mean_pauc = 0.0;
  double mean_aauc = 0.0;
  double min_auc = 0.0;  // mAUC
  double min_pauc = 0.0;
  double min_aauc = 0.0;
};

/// One summary per machine type, in order of first appearance.
std::vector<TypeSummary> rollup(std::span<const MetricRow> rows);

/// `clip_id,machine_type,machine_id,truth,score`
void write_scores_csv(const std::filesystem::path& path, std::span<const ClipScore> clips);
/// `machine_type,machine_id,auc,pauc,aauc`, then per type a `mean` row and a
/// `min` row (the min row's auc column is mAUC).
void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricRow> rows);
std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);

/// Fixed-precision formatting shared by every CSV writer.
std::string format_metric(double v);

}  // namespace oeasd
