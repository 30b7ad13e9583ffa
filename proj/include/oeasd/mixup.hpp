#pragma once

#include <vector>

#include <Eigen/Dense>

#include "oeasd/rng.hpp"

namespace oeasd {

struct MixupConfig {
  double beta = 0.2;
  bool enabled = true;

  void validate() const;
};

/// Samples are columns: X is [input_dim x B], Y has B entries, Tp is [C x B].
struct MixupResult {
  Eigen::MatrixXd X;
  Eigen::VectorXd Y;
  Eigen::MatrixXd Tp;
  Eigen::VectorXd lambda;               // per-sample coefficient
  std::vector<std::size_t> partner;     // j index mixed into sample i
};

/// Multi-label mixup: x' = l x_i + (1-l) x_j, and the same convex combination
/// for the type label y and the masked ID target t'. Partners come from one
/// shared random permutation of the batch; l ~ Beta(beta, beta) per sample.
/// A disabled config returns the inputs unchanged.
MixupResult mixup_batch(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                        const Eigen::MatrixXd& Tp, const MixupConfig& config, Rng& rng);

/// Applies a fixed pairing and coefficient vector.
MixupResult mix_with(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y, const Eigen::MatrixXd& Tp,
                     const std::vector<std::size_t>& partner, const Eigen::VectorXd& lambda);

}  // namespace oeasd
