#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oeasd/checkpoint.hpp"
#include "oeasd/config.hpp"
#include "oeasd/dataset.hpp"
#include "oeasd/gmm.hpp"
#include "oeasd/scoring.hpp"

namespace oeasd {

using Log = std::function<void(const std::string&)>;

Dataset load_dataset(const ExperimentConfig& config);

/// config.target_types when set (each must exist), else every type present.
std::vector<std::string> resolve_target_types(const ExperimentConfig& config, const Dataset& dataset);

struct TypeModel {
  ExtractorCheckpoint extractor;
  std::string extractor_hash;         // filled once the checkpoint is on disk
  std::vector<DetectorFile> detectors;  // sorted by machine id; a single id -1 without ids
  std::vector<EpochLoss> history;

  const GmmModel* detector_for(int machine_id) const;
};

/// Log-mel of every half-overlap chunk of a clip, one column per chunk.
Eigen::MatrixXd clip_inputs(const ExtractorCheckpoint& extractor, const LogMel& mel, const AudioClip& clip);

/// Embeddings of every half-overlap chunk: [M x D].
Eigen::MatrixXd embed_clip(const ExtractorCheckpoint& extractor, const LogMel& mel, const AudioClip& clip);

/// Trains the extractor on the roles, then fits one GMM per machine id on the
/// chunk embeddings of the normal pool.
TypeModel train_type(const Dataset& dataset, const RoleAssignment& roles, const ExperimentConfig& config,
                     std::uint64_t seed, const Log& log = {});

/// Scores every test clip of the target type except those consumed by the
/// role assignment. Clips come back in dataset order.
std::vector<ClipScore> score_type(const Dataset& dataset, const RoleAssignment& roles, const TypeModel& model,
                                  const ExperimentConfig& config);

/// One row per machine id present in the scores, sorted by (type, id).
std::vector<MetricRow> metrics_for(const std::vector<ClipScore>& scores, double p);

struct RunResult {
  std::map<std::string, RoleAssignment> roles;
  std::map<std::string, TypeModel> models;
  std::vector<ClipScore> scores;
  std::vector<MetricRow> metrics;
};

/// Role assignment, training and evaluation for every target type, in memory.
RunResult run_experiment(const Dataset& dataset, const ExperimentConfig& config, std::uint64_t seed,
                         int n_real_anomalous, int n_contaminated, const Log& log = {});

// Commands. Artifacts live under config.output.

/// manifest.jsonl, config.txt, <type>/extractor.ckpt, <type>/detector_id_NN.gmm
/// (detector_all.gmm without machine ids) and <type>/history.csv.
void cmd_train(const ExperimentConfig& config, std::uint64_t seed, const Log& log = {});
/// scores.csv and metrics.csv from the artifacts written by cmd_train.
void cmd_eval(const ExperimentConfig& config, const Log& log = {});

enum class SweepKind { anomalous, contamination };

struct SweepRow {
  int count = 0;
  std::uint64_t seed = 0;
  std::string machine_type;
  double aauc = 0.0;
  double mauc = 0.0;
};

/// Full train + eval for every grid count x seed; writes sweep_<kind>.csv.
std::vector<SweepRow> cmd_sweep(const ExperimentConfig& config, SweepKind kind, const Log& log = {});

/// Mean and standard error over seeds per count and type, plus a monotone
/// trend flag for the contamination sweep.
void print_sweep_summary(std::ostream& out, const std::vector<SweepRow>& rows, SweepKind kind);

/// <type>/embeddings.csv: clip_id,chunk_index,truth,machine_id,e_1..e_D
void cmd_export_embeddings(const ExperimentConfig& config, const Log& log = {});

/// Writes the configured synthetic dataset as a DCASE-style WAV tree.
void cmd_synth_data(const ExperimentConfig& config, const Log& log = {});

}  // namespace oeasd
