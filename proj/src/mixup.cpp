#include "oeasd/mixup.hpp"

#include "oeasd/error.hpp"

namespace oeasd {

void MixupConfig::validate() const {
  if (!(beta > 0.0)) fail(ErrorKind::config, "mixup beta must be positive");
}

namespace {

void check_shapes(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y, const Eigen::MatrixXd& Tp) {
  if (X.cols() != Y.size() || Tp.cols() != Y.size()) {
    fail(ErrorKind::shape, "mixup inputs disagree on batch size: X " + std::to_string(X.cols()) +
                               ", Y " + std::to_string(Y.size()) + ", Tp " + std::to_string(Tp.cols()));
  }
}

}  // namespace

MixupResult mix_with(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y, const Eigen::MatrixXd& Tp,
                     const std::vector<std::size_t>& partner, const Eigen::VectorXd& lambda) {
  check_shapes(X, Y, Tp);
  const Eigen::Index B = Y.size();
  if (static_cast<Eigen::Index>(partner.size()) != B || lambda.size() != B) {
    fail(ErrorKind::shape, "mixup pairing does not match the batch size");
  }
  MixupResult r;
  r.X.resize(X.rows(), B);
  r.Y.resize(B);
  r.Tp.resize(Tp.rows(), B);
  r.lambda = lambda;
  r.partner = partner;
  for (Eigen::Index i = 0; i < B; ++i) {
    const auto j = static_cast<Eigen::Index>(partner[i]);
    const double l = lambda[i];
    if (l == 1.0) {
      r.X.col(i) = X.col(i);
      r.Y[i] = Y[i];
      r.Tp.col(i) = Tp.col(i);
      continue;
    }
    r.X.col(i) = l * X.col(i) + (1.0 - l) * X.col(j);
    r.Y[i] = l * Y[i] + (1.0 - l) * Y[j];
    r.Tp.col(i) = l * Tp.col(i) + (1.0 - l) * Tp.col(j);
  }
  return r;
}

MixupResult mixup_batch(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                        const Eigen::MatrixXd& Tp, const MixupConfig& config, Rng& rng) {
  check_shapes(X, Y, Tp);
  const auto B = static_cast<std::size_t>(Y.size());
  if (!config.enabled) {
    MixupResult r{X, Y, Tp, Eigen::VectorXd::Ones(Y.size()), {}};
    r.partner.resize(B);
    for (std::size_t i = 0; i < B; ++i) r.partner[i] = i;
    return r;
  }
  config.validate();
  std::vector<std::size_t> partner = rng.permutation(B);
  Eigen::VectorXd lambda(Y.size());
  for (std::size_t i = 0; i < B; ++i) lambda[static_cast<Eigen::Index>(i)] = rng.beta(config.beta, config.beta);
  return mix_with(X, Y, Tp, partner, lambda);
}

}  // namespace oeasd
