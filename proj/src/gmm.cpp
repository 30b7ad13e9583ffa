#include "oeasd/gmm.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>

#include <json.hpp>

#include "oeasd/binio.hpp"
#include "oeasd/error.hpp"
#include "oeasd/rng.hpp"

namespace oeasd {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void GmmFitConfig::validate() const {
  if (max_iters < 1) fail(ErrorKind::config, "gmm max_iters must be positive");
  if (!(rel_tol >= 0.0)) fail(ErrorKind::config, "gmm rel_tol must be non-negative");
  if (!(reg_scale > 0.0)) fail(ErrorKind::config, "gmm covariance regularization must be positive");
  if (n_init < 1) fail(ErrorKind::config, "gmm n_init must be positive");
}

GmmModel::GmmModel(VectorXd weights, std::vector<VectorXd> means, std::vector<MatrixXd> covariances)
    : weights_(std::move(weights)), means_(std::move(means)), covariances_(std::move(covariances)) {
  const auto K = static_cast<std::size_t>(weights_.size());
  if (K == 0 || means_.size() != K || covariances_.size() != K) {
    fail(ErrorKind::shape, "gmm parameter lists disagree on the component count");
  }
  const Index D = means_.front().size();
  for (std::size_t k = 0; k < K; ++k) {
    if (means_[k].size() != D || covariances_[k].rows() != D || covariances_[k].cols() != D) {
      fail(ErrorKind::shape, "gmm component " + std::to_string(k) + " has the wrong dimension");
    }
    Eigen::LLT<MatrixXd> llt(covariances_[k]);
    if (llt.info() != Eigen::Success) {
      fail(ErrorKind::numeric, "covariance of component " + std::to_string(k) + " is not positive definite");
    }
    chol_.push_back(llt.matrixL());
    log_dets_.push_back(2.0 * chol_.back().diagonal().array().log().sum());
  }
}

MatrixXd GmmModel::component_log_densities(const MatrixXd& X) const {
  const Index N = X.rows();
  const Index D = dim();
  if (X.cols() != D) fail(ErrorKind::shape, "feature dimension does not match the gmm");
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  MatrixXd out(N, components());
  for (int k = 0; k < components(); ++k) {
    // Solve L z = (x - mu) for all samples at once.
    MatrixXd centered = (X.rowwise() - means_[k].transpose()).transpose();
    chol_[k].triangularView<Eigen::Lower>().solveInPlace(centered);
    const VectorXd maha = centered.colwise().squaredNorm().transpose();
    out.col(k) = (-0.5 * (static_cast<double>(D) * log_2pi + log_dets_[k] + maha.array())).matrix();
    out.col(k).array() += std::log(weights_[k]);
  }
  return out;
}

namespace {

VectorXd row_logsumexp(const MatrixXd& m) {
  VectorXd out(m.rows());
  for (Index i = 0; i < m.rows(); ++i) {
    const double top = m.row(i).maxCoeff();
    out[i] = std::isinf(top) ? top : top + std::log((m.row(i).array() - top).exp().sum());
  }
  return out;
}

}  // namespace

VectorXd GmmModel::log_likelihood(const MatrixXd& X) const {
  return row_logsumexp(component_log_densities(X));
}

double GmmModel::nll(const VectorXd& x) const {
  return -log_likelihood(x.transpose())[0];
}

// ---------------------------------------------------------------------------
// Fitting

namespace {

struct EmState {
  VectorXd weights;
  std::vector<VectorXd> means;
  std::vector<MatrixXd> covs;
};

// Weighted M-step; resp is [N x K].
EmState m_step(const MatrixXd& X, const MatrixXd& resp, double ridge) {
  const Index N = X.rows(), K = resp.cols();
  EmState s;
  s.weights.resize(K);
  for (Index k = 0; k < K; ++k) {
    const double nk = resp.col(k).sum();
    if (!(nk > 1e-10 * static_cast<double>(N))) {
      fail(ErrorKind::numeric, "gmm component " + std::to_string(k) + " collapsed");
    }
    s.weights[k] = nk / static_cast<double>(N);
    VectorXd mu = (X.transpose() * resp.col(k)) / nk;
    const MatrixXd centered = X.rowwise() - mu.transpose();
    MatrixXd cov = (centered.transpose() * resp.col(k).asDiagonal() * centered) / nk;
    cov = 0.5 * (cov + cov.transpose());
    cov.diagonal().array() += ridge;
    s.means.push_back(std::move(mu));
    s.covs.push_back(std::move(cov));
  }
  return s;
}

// k-means++ seeding followed by Lloyd iterations; returns hard assignments.
std::vector<int> kmeans(const MatrixXd& X, int K, Rng& rng) {
  const Index N = X.rows();
  MatrixXd centers(K, X.cols());
  centers.row(0) = X.row(static_cast<Index>(rng.index(static_cast<std::size_t>(N))));
  VectorXd d2 = (X.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int k = 1; k < K; ++k) {
    const double total = d2.sum();
    Index pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (pick = 0; pick < N - 1; ++pick) {
        u -= d2[pick];
        if (u < 0.0) break;
      }
    } else {
      pick = static_cast<Index>(rng.index(static_cast<std::size_t>(N)));
    }
    centers.row(k) = X.row(pick);
    d2 = d2.cwiseMin((X.rowwise() - centers.row(k)).rowwise().squaredNorm());
  }

  std::vector<int> label(N, -1);
  for (int iter = 0; iter < 50; ++iter) {
    bool changed = false;
    for (Index i = 0; i < N; ++i) {
      Index best;
      (centers.rowwise() - X.row(i)).rowwise().squaredNorm().minCoeff(&best);
      if (label[i] != static_cast<int>(best)) {
        label[i] = static_cast<int>(best);
        changed = true;
      }
    }
    if (!changed) break;
    MatrixXd sums = MatrixXd::Zero(K, X.cols());
    std::vector<int> counts(K, 0);
    for (Index i = 0; i < N; ++i) {
      sums.row(label[i]) += X.row(i);
      ++counts[label[i]];
    }
    for (int k = 0; k < K; ++k) {
      if (counts[k] > 0) {
        centers.row(k) = sums.row(k) / counts[k];
      } else {
        // Re-seed an empty cluster at the point farthest from its center.
        Index far;
        VectorXd dist(N);
        for (Index i = 0; i < N; ++i) dist[i] = (X.row(i) - centers.row(label[i])).squaredNorm();
        dist.maxCoeff(&far);
        centers.row(k) = X.row(far);
      }
    }
  }
  return label;
}

struct FitRun {
  EmState state;
  std::vector<double> history;
  bool converged = false;
};

FitRun run_em(const MatrixXd& X, int K, const GmmFitConfig& config, double ridge, Rng& rng) {
  const Index N = X.rows();
  const std::vector<int> labels = kmeans(X, K, rng);
  MatrixXd resp = MatrixXd::Zero(N, K);
  for (Index i = 0; i < N; ++i) resp(i, labels[i]) = 1.0;

  FitRun run;
  run.state = m_step(X, resp, ridge);
  EmState previous;
  for (int iter = 0; iter < config.max_iters; ++iter) {
    const GmmModel model(run.state.weights, run.state.means, run.state.covs);
    const MatrixXd logp = model.component_log_densities(X);
    const VectorXd ll = row_logsumexp(logp);
    const double mean_ll = ll.mean();
    if (!std::isfinite(mean_ll)) fail(ErrorKind::numeric, "gmm log-likelihood is not finite");
    if (!run.history.empty()) {
      const double prev = run.history.back();
      // The ridge makes the M-step inexact; once a step loses likelihood
      // keep the previous parameters.
      if (mean_ll < prev) {
        run.state = std::move(previous);
        run.converged = true;
        break;
      }
      if (mean_ll - prev <= config.rel_tol * std::abs(prev)) {
        run.history.push_back(mean_ll);
        run.converged = true;
        break;
      }
    }
    run.history.push_back(mean_ll);
    if (iter + 1 == config.max_iters) break;
    resp = (logp.colwise() - ll).array().exp().matrix();
    previous = std::move(run.state);
    run.state = m_step(X, resp, ridge);
  }
  return run;
}

}  // namespace

GmmModel fit_gmm(const MatrixXd& features, int components, const GmmFitConfig& config,
                 GmmFitReport* report) {
  config.validate();
  if (components < 1) fail(ErrorKind::config, "gmm needs at least one component");
  if (features.rows() <= features.cols()) {
    fail(ErrorKind::validation, "gmm fit is ill-conditioned: " + std::to_string(features.rows()) +
                                    " samples for dimension " + std::to_string(features.cols()));
  }
  if (features.rows() < components) fail(ErrorKind::validation, "fewer samples than components");
  if (!features.allFinite()) fail(ErrorKind::data, "gmm features contain non-finite values");

  const VectorXd mean = features.colwise().mean().transpose();
  const double mean_var =
      (features.rowwise() - mean.transpose()).array().square().colwise().sum().sum() /
      (static_cast<double>(features.rows()) * static_cast<double>(features.cols()));
  const double ridge = config.reg_scale * (mean_var > 0.0 ? mean_var : 1.0);

  Rng rng = Rng::stream(config.seed, "gmm");
  FitRun best;
  double best_ll = -std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> histories;
  std::string last_error;
  for (int r = 0; r < config.n_init; ++r) {
    try {
      FitRun run = run_em(features, components, config, ridge, rng);
      histories.push_back(run.history);
      if (run.history.back() > best_ll) {
        best_ll = run.history.back();
        best = std::move(run);
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::numeric) throw;
      last_error = e.what();
      histories.emplace_back();
    }
  }
  if (best.history.empty()) fail(ErrorKind::numeric, "every gmm restart failed: " + last_error);
  if (report != nullptr) {
    report->mean_log_likelihood = best.history;
    report->restarts = std::move(histories);
    report->iterations = static_cast<int>(best.history.size());
    report->converged = best.converged;
  }
  return GmmModel(best.state.weights, best.state.means, best.state.covs);
}

// ---------------------------------------------------------------------------
// Detector files

namespace {
constexpr char kDetectorMagic[] = "OEASDGMM";
constexpr std::uint32_t kDetectorVersion = 1;
}  // namespace

void write_detector(const std::filesystem::path& path, const DetectorFile& d) {
  const nlohmann::json meta = {{"machine_type", d.machine_type},
                               {"machine_id", d.machine_id},
                               {"extractor_hash", d.extractor_hash}};
  const std::string meta_text = meta.dump();
  std::string out(kDetectorMagic, 8);
  binio::put_uint<std::uint32_t>(out, kDetectorVersion);
  binio::put_uint<std::uint64_t>(out, meta_text.size());
  out += meta_text;
  const int K = d.model.components(), D = d.model.dim();
  binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(K));
  binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(D));
  for (int k = 0; k < K; ++k) binio::put_f64(out, d.model.weights()[k]);
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < D; ++i) binio::put_f64(out, d.model.means()[k][i]);
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < D; ++i)
      for (int j = 0; j < D; ++j) binio::put_f64(out, d.model.covariances()[k](i, j));
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::file, "cannot write detector: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) fail(ErrorKind::file, "write failed: " + path.string());
}

DetectorFile read_detector(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::file, "cannot read detector: " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  binio::Reader r(bytes, path.string());
  if (r.take(8) != std::string_view(kDetectorMagic, 8)) {
    fail(ErrorKind::artifact, "not a detector file: " + path.string());
  }
  const auto version = r.uint<std::uint32_t>();
  if (version != kDetectorVersion) {
    fail(ErrorKind::artifact, "unsupported detector version " + std::to_string(version));
  }
  const auto meta_len = r.uint<std::uint64_t>();
  DetectorFile d;
  try {
    const auto meta = nlohmann::json::parse(r.take(meta_len));
    d.machine_type = meta.at("machine_type");
    d.machine_id = meta.at("machine_id");
    d.extractor_hash = meta.at("extractor_hash");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::artifact, "bad detector metadata in " + path.string() + ": " + e.what());
  }
  const auto K = static_cast<int>(r.uint<std::uint32_t>());
  const auto D = static_cast<int>(r.uint<std::uint32_t>());
  VectorXd w(K);
  for (int k = 0; k < K; ++k) w[k] = r.f64();
  std::vector<VectorXd> means(K, VectorXd(D));
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < D; ++i) means[k][i] = r.f64();
  std::vector<MatrixXd> covs(K, MatrixXd(D, D));
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < D; ++i)
      for (int j = 0; j < D; ++j) covs[k](i, j) = r.f64();
  if (!r.done()) fail(ErrorKind::artifact, "trailing bytes in detector file " + path.string());
  d.model = GmmModel(std::move(w), std::move(means), std::move(covs));
  return d;
}

}  // namespace oeasd
