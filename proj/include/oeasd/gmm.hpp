#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace oeasd {

struct GmmFitConfig {
  int max_iters = 200;
  double rel_tol = 1e-6;     // on the mean log-likelihood
  double reg_scale = 1e-6;   // covariance ridge, relative to the mean data variance
  int n_init = 3;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Full-covariance Gaussian mixture with cached Cholesky factors.
class GmmModel {
 public:
  GmmModel() = default;
  /// Factorizes every covariance; throws ErrorKind::numeric when one is not
  /// positive definite.
  GmmModel(Eigen::VectorXd weights, std::vector<Eigen::VectorXd> means,
           std::vector<Eigen::MatrixXd> covariances);

  int components() const { return static_cast<int>(weights_.size()); }
  int dim() const { return means_.empty() ? 0 : static_cast<int>(means_.front().size()); }
  const Eigen::VectorXd& weights() const { return weights_; }
  const std::vector<Eigen::VectorXd>& means() const { return means_; }
  const std::vector<Eigen::MatrixXd>& covariances() const { return covariances_; }
  double log_det(int k) const { return log_dets_[k]; }

  /// log w_k + log N(x; mu_k, Sigma_k) for every sample (rows of X): [N x K].
  Eigen::MatrixXd component_log_densities(const Eigen::MatrixXd& X) const;
  /// Per-sample log-likelihood.
  Eigen::VectorXd log_likelihood(const Eigen::MatrixXd& X) const;

  /// -log sum_k w_k N(x; mu_k, Sigma_k).
  double nll(const Eigen::VectorXd& x) const;

 private:
  Eigen::VectorXd weights_;
  std::vector<Eigen::VectorXd> means_;
  std::vector<Eigen::MatrixXd> covariances_;
  std::vector<Eigen::MatrixXd> chol_;  // lower factors
  std::vector<double> log_dets_;
};

struct GmmFitReport {
  std::vector<double> mean_log_likelihood;  // per iteration of the selected restart
  std::vector<std::vector<double>> restarts;
  int iterations = 0;
  bool converged = false;
};

/// EM from k-means initialization, best of n_init restarts by final mean
/// log-likelihood. Rows of `features` are samples; requires rows > cols.
GmmModel fit_gmm(const Eigen::MatrixXd& features, int components, const GmmFitConfig& config,
                 GmmFitReport* report = nullptr);

/// Detector file: magic "OEASDGMM", u32 version, u64 metadata length, JSON
/// metadata, then u32 K, u32 D, weights[K], means[K][D], covariances[K][D][D]
/// as little-endian float64 (row-major).
struct DetectorFile {
  std::string machine_type;
  int machine_id = -1;  // -1: one detector for the whole machine type
  std::string extractor_hash;
  GmmModel model;
};

void write_detector(const std::filesystem::path& path, const DetectorFile& detector);
DetectorFile read_detector(const std::filesystem::path& path);

}  // namespace oeasd
