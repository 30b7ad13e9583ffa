#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oeasd/error.hpp"
#include "oeasd/gmm.hpp"
#include "tmpdir.hpp"

using namespace oeasd;

namespace {

Eigen::MatrixXd gaussian_rows(int n, int d, std::uint64_t seed, double shift = 0.0) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> z;
  Eigen::MatrixXd X(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) X(i, j) = z(g) + shift;
  return X;
}

GmmModel standard_normal_1d() {
  return GmmModel(Eigen::VectorXd::Ones(1), {Eigen::VectorXd::Zero(1)}, {Eigen::MatrixXd::Identity(1, 1)});
}

}  // namespace

TEST_CASE("standard normal negative log-likelihood") {
  const GmmModel m = standard_normal_1d();
  // 0.5 * ln(2 pi)
  CHECK(std::abs(m.nll(Eigen::VectorXd::Zero(1)) - 0.918939) <= 1e-6);
  for (double x : {-3.0, -0.5, 1.0, 2.5}) {
    Eigen::VectorXd v(1);
    v << x;
    CHECK(m.nll(v) - m.nll(Eigen::VectorXd::Zero(1)) == doctest::Approx(x * x / 2).epsilon(1e-12));
  }
}

TEST_CASE("density integrates to one") {
  Eigen::VectorXd w(2);
  w << 0.3, 0.7;
  Eigen::VectorXd m0(1), m1(1);
  m0 << -1.0;
  m1 << 2.0;
  Eigen::MatrixXd c0(1, 1), c1(1, 1);
  c0 << 0.25;
  c1 << 1.0;
  const GmmModel m(w, {m0, m1}, {c0, c1});
  const int n = 20000;
  const double lo = -1.0 - 8 * 0.5, hi = 2.0 + 8.0, h = (hi - lo) / n;
  double sum = 0.0;
  for (int i = 0; i <= n; ++i) {
    Eigen::VectorXd x(1);
    x << lo + i * h;
    sum += ((i == 0 || i == n) ? 0.5 : 1.0) * std::exp(-m.nll(x));
  }
  CHECK(sum * h == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("single component fit equals the regularized closed form") {
  const Eigen::MatrixXd X = gaussian_rows(400, 3, 1);
  const GmmFitConfig cfg;
  const GmmModel m = fit_gmm(X, 1, cfg);
  const Eigen::VectorXd mu = X.colwise().mean();
  const Eigen::MatrixXd C = X.rowwise() - mu.transpose();
  Eigen::MatrixXd S = C.transpose() * C / X.rows();
  S.diagonal().array() += 1e-6 * S.trace() / 3;
  CHECK(m.weights()(0) == doctest::Approx(1.0));
  CHECK((m.means()[0] - mu).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK((m.covariances()[0] - S).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("two separated clusters are recovered") {
  Eigen::MatrixXd X(600, 2);
  X << gaussian_rows(300, 2, 2, -5.0), gaussian_rows(300, 2, 3, 5.0);
  GmmFitConfig cfg;
  cfg.seed = 7;
  const GmmModel m = fit_gmm(X, 2, cfg);
  CHECK(m.weights().sum() == doctest::Approx(1.0).epsilon(1e-12));
  std::vector<double> firsts = {m.means()[0](0), m.means()[1](0)};
  std::sort(firsts.begin(), firsts.end());
  CHECK(std::abs(firsts[0] + 5.0) < 0.15);
  CHECK(std::abs(firsts[1] - 5.0) < 0.15);
  for (const auto& c : m.covariances()) {
    CHECK((c - c.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(c.llt().info() == Eigen::Success);
  }
}

TEST_CASE("EM log-likelihood is monotone") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Eigen::MatrixXd X(200, 3);
    X << gaussian_rows(120, 3, 100 + s, -1.0), gaussian_rows(80, 3, 200 + s, 1.5);
    GmmFitConfig cfg;
    cfg.seed = s;
    GmmFitReport rep;
    fit_gmm(X, 2, cfg, &rep);
    REQUIRE(rep.restarts.size() == 3);
    for (const auto& trace : rep.restarts)
      for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] >= trace[i - 1] - 1e-8);
  }
}

TEST_CASE("component order does not change the score") {
  Eigen::VectorXd w(2), w2(2);
  w << 0.4, 0.6;
  w2 << 0.6, 0.4;
  const Eigen::VectorXd a = Eigen::VectorXd::Constant(2, -1.0), b = Eigen::VectorXd::Constant(2, 2.0);
  Eigen::MatrixXd ca(2, 2), cb(2, 2);
  ca << 1.0, 0.3, 0.3, 2.0;
  cb << 0.5, -0.1, -0.1, 0.7;
  const GmmModel m1(w, {a, b}, {ca, cb});
  const GmmModel m2(w2, {b, a}, {cb, ca});
  const Eigen::MatrixXd X = gaussian_rows(50, 2, 9);
  CHECK((m1.log_likelihood(X) - m2.log_likelihood(X)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("far points do not underflow") {
  const GmmModel m = standard_normal_1d();
  Eigen::VectorXd x(1);
  x << 100.0;
  CHECK(std::isfinite(m.nll(x)));
  CHECK(m.nll(x) == doctest::Approx(5000.0 + 0.918938533));
}

TEST_CASE("fit input checks") {
  GmmFitConfig cfg;
  CHECK_THROWS_AS(fit_gmm(gaussian_rows(4, 4, 1), 2, cfg), Error);
  try {
    fit_gmm(gaussian_rows(4, 4, 1), 2, cfg);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::validation);
  }
  Eigen::MatrixXd X = gaussian_rows(50, 2, 1);
  X(3, 1) = NAN;
  CHECK_THROWS_AS(fit_gmm(X, 2, cfg), Error);
  Eigen::MatrixXd bad(1, 1);
  bad << -1.0;
  CHECK_THROWS_AS(GmmModel(Eigen::VectorXd::Ones(1), {Eigen::VectorXd::Zero(1)}, {bad}), Error);
}

TEST_CASE("detector file round trip") {
  oeasd::testing::TempDir dir("gmm");
  Eigen::MatrixXd X(300, 3);
  X << gaussian_rows(150, 3, 4, -2.0), gaussian_rows(150, 3, 5, 2.0);
  DetectorFile d{"fan", 2, "0123456789abcdef", fit_gmm(X, 2, GmmFitConfig{})};
  write_detector(dir.path() / "d.gmm", d);
  const DetectorFile r = read_detector(dir.path() / "d.gmm");
  CHECK(r.machine_type == "fan");
  CHECK(r.machine_id == 2);
  CHECK(r.extractor_hash == d.extractor_hash);
  CHECK((r.model.log_likelihood(X).array() == d.model.log_likelihood(X).array()).all());
  CHECK_THROWS_AS(read_detector(dir.path() / "missing.gmm"), Error);
}
