#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "oeasd/dataset.hpp"
#include "oeasd/dsp.hpp"
#include "oeasd/gmm.hpp"
#include "oeasd/losses.hpp"
#include "oeasd/mixup.hpp"
#include "oeasd/network.hpp"
#include "oeasd/training.hpp"

namespace oeasd {

enum class DatasetSource { synth, dcase };

struct AblationFlags {
  bool use_type_loss = true;
  bool use_mixup = true;
  bool use_machine_ids = true;
  IdLossKind id_loss_kind = IdLossKind::bce;
};

/// Every setting of an experiment. Defaults reproduce the reference
/// hyperparameters, so an empty config file is a complete config.
struct ExperimentConfig {
  DatasetSource source = DatasetSource::synth;
  std::filesystem::path dataset_path;
  std::vector<std::string> target_types;  // empty: every type in the dataset
  SynthSpec synth;

  DspConfig dsp;
  ExtractorConfig extractor;
  LossConfig loss;
  MixupConfig mixup;
  TrainConfig train;
  GmmFitConfig gmm;
  int gmm_components = 2;
  double pauc_p = 0.1;
  AblationFlags ablation;

  int n_real_anomalous = 0;
  int n_contaminated = 0;
  std::vector<int> anomalous_counts = {0, 1, 2, 4, 8, 16, 32};
  std::vector<int> contamination_counts = {0, 1, 2, 4, 8, 16, 32};

  std::vector<std::uint64_t> seeds = {0};
  std::filesystem::path output = "out";
  int jobs = 1;

  void validate() const;

  /// Configs of the training run with the ablation flags folded in: the type
  /// loss toggle, mixup toggle and id-loss kind, and alpha = 0 without ids.
  TrainSetup train_setup(std::uint64_t seed) const;
};

/// Parses `key = value` lines. Keys are dotted (`train.epochs`) or grouped
/// under `[train]` headers; `#` starts a comment. Unknown keys are rejected.
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical text form, accepted by parse_config.
std::string to_text(const ExperimentConfig& config);

}  // namespace oeasd
