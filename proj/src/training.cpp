#include "oeasd/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "oeasd/error.hpp"
#include "oeasd/parallel.hpp"

namespace oeasd {

void TrainConfig::validate() const {
  if (epochs < 1) fail(ErrorKind::config, "epochs must be at least 1");
  if (batch_size < 2 || batch_size % 2 != 0) fail(ErrorKind::config, "batch size must be even and >= 2");
  // Zero is allowed so that a frozen run can be expressed.
  if (!(peak_lr >= 0.0)) fail(ErrorKind::config, "peak learning rate must be non-negative");
  if (!(weight_decay >= 0.0)) fail(ErrorKind::config, "weight decay must be non-negative");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    fail(ErrorKind::config, "warmup fraction must lie in [0, 1)");
  }
  if (!(initial_lr_fraction > 0.0) || !(final_lr_fraction > 0.0)) {
    fail(ErrorKind::config, "learning-rate fractions must be positive");
  }
}

OneCycleSchedule::OneCycleSchedule(const TrainConfig& config, long total_steps)
    : peak_(config.peak_lr),
      initial_(config.peak_lr * config.initial_lr_fraction),
      final_(config.peak_lr * config.final_lr_fraction),
      total_(std::max(1L, total_steps)),
      warmup_(static_cast<long>(std::floor(config.warmup_fraction * std::max(1L, total_steps)))) {}

double OneCycleSchedule::lr(long step) const {
  auto cosine = [](double from, double to, double frac) {
    return to + (from - to) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
  };
  if (step < warmup_) return cosine(initial_, peak_, static_cast<double>(step) / warmup_);
  const long span = std::max(1L, total_ - 1 - warmup_);
  const double frac = std::min(1.0, static_cast<double>(step - warmup_) / span);
  return cosine(peak_, final_, frac);
}

AdamW::AdamW(std::size_t n, double weight_decay, double beta1, double beta2, double eps)
    : weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void AdamW::step(std::span<double> params, std::span<const double> grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    fail(ErrorKind::shape, "optimizer state does not match the parameter count");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] *= 1.0 - lr * weight_decay_;
    params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

ChunkSource::ChunkSource(const Dataset& data, const NormStats& stats, const LogMel& logmel)
    : dataset(&data), norm(stats), mel(&logmel) {
  for (const AudioClip& c : data) by_id.emplace(c.clip_id, &c);
}

const AudioClip& ChunkSource::clip(const std::string& id) const {
  auto it = by_id.find(id);
  if (it == by_id.end()) fail(ErrorKind::validation, "unknown clip id: " + id);
  return *it->second;
}

void ChunkSource::fill(const AudioClip& c, std::size_t offset, double* column) const {
  const std::size_t len = mel->chunk_samples();
  if (offset + len > c.samples.size()) {
    fail(ErrorKind::validation, "chunk runs past the end of clip " + c.clip_id);
  }
  std::vector<float> window(len);
  normalize_into(std::span(c.samples).subspan(offset, len), norm, window);
  std::vector<float> values(static_cast<std::size_t>(mel->n_frames()) * mel->n_mels());
  mel->compute_into(window, values);
  std::copy(values.begin(), values.end(), column);
}

std::vector<int> id_classes(const ChunkSource& source, const RoleAssignment& roles, bool use_machine_ids) {
  if (!use_machine_ids) return {0};
  std::vector<int> ids;
  for (const std::string& id : roles.normal_pool()) ids.push_back(source.clip(id).key.machine_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.empty()) fail(ErrorKind::validation, "normal pool of " + roles.target_type + " is empty");
  return ids;
}

TrainResult train_extractor(const ChunkSource& source, const RoleAssignment& roles,
                            const TrainSetup& setup, const std::function<void(const EpochLoss&)>& on_epoch) {
  setup.train.validate();
  setup.loss.validate();
  if (setup.mixup.enabled) setup.mixup.validate();

  TrainResult result;
  result.class_ids = id_classes(source, roles, setup.use_machine_ids);
  std::map<int, int> class_of;
  for (std::size_t c = 0; c < result.class_ids.size(); ++c) class_of[result.class_ids[c]] = static_cast<int>(c);

  const InputShape shape{source.mel->n_frames(), source.mel->n_mels()};
  result.model = Extractor(setup.extractor, shape, static_cast<int>(result.class_ids.size()));
  const std::string& type = roles.target_type;
  Rng init_rng = Rng::stream(setup.seed, "init/" + type);
  result.model.initialize(init_rng);

  Rng sampler_rng = Rng::stream(setup.seed, "sampler/" + type);
  Rng crop_rng = Rng::stream(setup.seed, "crop/" + type);
  Rng mixup_rng = Rng::stream(setup.seed, "mixup/" + type);

  const int B = setup.train.batch_size;
  const int per_epoch = batches_per_epoch(roles.normal_pool().size(), B);
  const OneCycleSchedule schedule(setup.train, static_cast<long>(per_epoch) * setup.train.epochs);
  AdamW optimizer(result.model.params().size(), setup.train.weight_decay);

  const auto C = static_cast<Eigen::Index>(result.class_ids.size());
  const auto dim = static_cast<Eigen::Index>(result.model.input_dim());
  Eigen::MatrixXd X(dim, B);
  Eigen::VectorXd Y(B);
  Eigen::MatrixXd T(C, B);
  std::vector<double> grad;
  long step = 0;

  for (int epoch = 0; epoch < setup.train.epochs; ++epoch) {
    const std::vector<Batch> batches = make_epoch(roles, B, sampler_rng);
    EpochLoss acc;
    acc.epoch = epoch;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const Batch& batch = batches[bi];
      std::vector<const AudioClip*> clips(batch.size());
      std::vector<std::size_t> offsets(batch.size());
      T.setZero();
      for (std::size_t i = 0; i < batch.size(); ++i) {
        clips[i] = &source.clip(batch[i].clip_id);
        offsets[i] = random_crop(*clips[i], source.mel->config().chunk_seconds, crop_rng).offset;
        const bool normal = batch[i].role == SlotRole::normal;
        Y[static_cast<Eigen::Index>(i)] = normal ? 1.0 : 0.0;
        if (normal) {
          const int cls = setup.use_machine_ids ? class_of.at(clips[i]->key.machine_id) : 0;
          T(cls, static_cast<Eigen::Index>(i)) = 1.0;
        }
      }
      parallel_for(batch.size(), setup.jobs, [&](std::size_t i) {
        source.fill(*clips[i], offsets[i], X.col(static_cast<Eigen::Index>(i)).data());
      });

      const Eigen::MatrixXd Tp = mask_targets(Y, T);
      const MixupResult mixed = mixup_batch(X, Y, Tp, setup.mixup, mixup_rng);
      LossValue loss;
      try {
        loss = result.model.loss_and_gradient(mixed.X, mixed.Y, mixed.Tp, setup.loss, &grad);
      } catch (const Error& e) {
        fail(e.kind(), std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(bi) + ")");
      }
      if (!std::isfinite(loss.total)) {
        fail(ErrorKind::numeric, "loss diverged at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(bi));
      }
      optimizer.step(result.model.params(), grad, schedule.lr(step++));
      acc.total += loss.total;
      acc.type += loss.type;
      acc.id += loss.id;
    }
    const double n = static_cast<double>(batches.size());
    acc.total /= n;
    acc.type /= n;
    acc.id /= n;
    result.history.push_back(acc);
    if (on_epoch) on_epoch(acc);
  }
  return result;
}

}  // namespace oeasd
