#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "oeasd/dataset.hpp"
#include "oeasd/dsp.hpp"
#include "oeasd/losses.hpp"
#include "oeasd/mixup.hpp"
#include "oeasd/network.hpp"
#include "oeasd/sampler.hpp"

namespace oeasd {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 128;
  double peak_lr = 1e-3;
  double weight_decay = 0.01;
  double warmup_fraction = 0.3;
  double initial_lr_fraction = 1.0 / 25.0;  // start of warmup, relative to peak
  double final_lr_fraction = 0.01;          // end of decay, relative to peak

  void validate() const;
};

/// Cosine warmup from initial to peak over the first warmup_fraction of the
/// steps, then cosine decay to the final rate.
class OneCycleSchedule {
 public:
  OneCycleSchedule(const TrainConfig& config, long total_steps);
  double lr(long step) const;

 private:
  double peak_, initial_, final_;
  long total_, warmup_;
};

/// Adam with decoupled weight decay: p <- p - lr*wd*p - lr*m_hat/(sqrt(v_hat)+eps).
class AdamW {
 public:
  AdamW(std::size_t n, double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::span<double> params, std::span<const double> grad, double lr);
  long steps() const { return t_; }

 private:
  double weight_decay_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<double> m_, v_;
};

struct EpochLoss {
  int epoch = 0;
  double total = 0.0;
  double type = 0.0;
  double id = 0.0;
};

/// Everything needed to turn clip ids into network inputs for one machine type.
struct ChunkSource {
  const Dataset* dataset = nullptr;
  std::map<std::string, const AudioClip*> by_id;
  NormStats norm;
  const LogMel* mel = nullptr;

  ChunkSource(const Dataset& data, const NormStats& stats, const LogMel& logmel);
  const AudioClip& clip(const std::string& id) const;

  /// Normalizes the window and writes its log-mel into `column`.
  void fill(const AudioClip& clip, std::size_t offset, double* column) const;
};

struct TrainSetup {
  ExtractorConfig extractor;
  LossConfig loss;
  MixupConfig mixup;
  TrainConfig train;
  bool use_machine_ids = true;
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct TrainResult {
  Extractor model;
  std::vector<int> class_ids;  // machine id of each id-head class
  std::vector<EpochLoss> history;
};

/// Sorted machine ids of the normal pool; a single class 0 when ids are not used.
std::vector<int> id_classes(const ChunkSource& source, const RoleAssignment& roles, bool use_machine_ids);

/// Runs epochs x batches of sampling, cropping, mixup, forward, loss,
/// backward and AdamW updates. Deterministic given setup.seed.
TrainResult train_extractor(const ChunkSource& source, const RoleAssignment& roles,
                            const TrainSetup& setup,
                            const std::function<void(const EpochLoss&)>& on_epoch = {});

}  // namespace oeasd
