#include "oeasd/sampler.hpp"

#include "oeasd/error.hpp"

namespace oeasd {

BatchLayout BatchLayout::make(int batch_size, bool have_anomalous) {
  if (batch_size < 2 || batch_size % 2 != 0) {
    fail(ErrorKind::config, "batch size must be a positive even number, got " + std::to_string(batch_size));
  }
  BatchLayout layout;
  layout.batch_size = batch_size;
  layout.normal_slots = batch_size / 2;
  layout.anomalous_slots = have_anomalous ? 1 : 0;
  layout.pseudo_slots = batch_size / 2 - layout.anomalous_slots;
  return layout;
}

int batches_per_epoch(std::size_t normal_pool_size, int batch_size) {
  const std::size_t half = static_cast<std::size_t>(batch_size / 2);
  return static_cast<int>((normal_pool_size + half - 1) / half);
}

std::vector<Batch> make_epoch(const RoleAssignment& roles, int batch_size, Rng& rng) {
  const BatchLayout layout = BatchLayout::make(batch_size, !roles.real_anomalous_ids.empty());
  std::vector<std::string> normal = roles.normal_pool();
  const auto half = static_cast<std::size_t>(layout.normal_slots);
  if (normal.size() < half) {
    fail(ErrorKind::config, "normal pool of " + roles.target_type + " has " +
                                std::to_string(normal.size()) + " clips, fewer than half a batch (" +
                                std::to_string(half) + ")");
  }
  if (roles.pseudo_anomalous_ids.empty()) {
    fail(ErrorKind::config, "no pseudo-anomalous clips available for " + roles.target_type);
  }

  rng.shuffle(normal);
  const int n_batches = batches_per_epoch(normal.size(), batch_size);
  std::vector<Batch> epoch(n_batches);
  for (int b = 0; b < n_batches; ++b) {
    Batch& batch = epoch[b];
    batch.reserve(layout.batch_size);
    const std::size_t begin = b * half;
    const std::size_t end = std::min(begin + half, normal.size());
    for (std::size_t i = begin; i < end; ++i) batch.push_back({normal[i], SlotRole::normal});
    if (end - begin < half) {
      // Top up from clips used earlier in this epoch, without repeats.
      std::vector<std::string> used(normal.begin(), normal.begin() + begin);
      rng.shuffle(used);
      for (std::size_t i = 0; i < half - (end - begin); ++i) batch.push_back({used[i], SlotRole::normal});
    }
    for (int i = 0; i < layout.pseudo_slots; ++i) {
      const auto& ids = roles.pseudo_anomalous_ids;
      batch.push_back({ids[rng.index(ids.size())], SlotRole::pseudo_anomalous});
    }
    for (int i = 0; i < layout.anomalous_slots; ++i) {
      const auto& ids = roles.real_anomalous_ids;
      batch.push_back({ids[rng.index(ids.size())], SlotRole::anomalous});
    }
  }
  return epoch;
}

}  // namespace oeasd
