#pragma once

#include <string>
#include <vector>

#include "oeasd/dataset.hpp"
#include "oeasd/rng.hpp"

namespace oeasd {

enum class SlotRole { normal, pseudo_anomalous, anomalous };

struct BatchEntry {
  std::string clip_id;
  SlotRole role = SlotRole::normal;
};

using Batch = std::vector<BatchEntry>;

/// Slot counts of one mini-batch: half normal, the rest pseudo-anomalous,
/// with one pseudo slot given to a real anomalous clip when any are available.
struct BatchLayout {
  int batch_size = 128;
  int normal_slots = 64;
  int pseudo_slots = 64;
  int anomalous_slots = 0;

  static BatchLayout make(int batch_size, bool have_anomalous);
};

/// One epoch: every clip of the normal pool (normal + contaminated) is used
/// exactly once, the final short batch being topped up with clips already
/// used earlier in the epoch. Pseudo-anomalous and anomalous slots are drawn
/// uniformly with replacement.
std::vector<Batch> make_epoch(const RoleAssignment& roles, int batch_size, Rng& rng);

/// ceil(|normal pool| / (batch_size / 2))
int batches_per_epoch(std::size_t normal_pool_size, int batch_size);

}  // namespace oeasd
