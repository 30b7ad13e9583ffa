#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace oeasd {

/// 64-bit FNV-1a; stable across platforms, used for stream names and file digests.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

/// Seeded random source with distribution algorithms pinned in this file.
///
/// std::mt19937_64 has a standardized output sequence, but the standard
/// distributions do not, so every variate here is derived from raw 64-bit
/// draws by a fixed algorithm. Results are therefore identical across
/// compilers and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream derived from a root seed and a name.
  /// Ablations that touch one stream (say "mixup") leave the others unchanged.
  static Rng stream(std::uint64_t root_seed, std::string_view name);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [0, n); n must be positive.
  std::size_t index(std::size_t n);

  /// Standard normal (Marsaglia polar method).
  double normal();

  /// Gamma(shape, 1) by Marsaglia-Tsang; shapes below 1 use the
  /// U^(1/a) boost. Returned in log space to avoid underflow for small shapes.
  double log_gamma_variate(double shape);

  /// Beta(a, b) as G_a / (G_a + G_b).
  double beta(double a, double b);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Uniformly random permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace oeasd
