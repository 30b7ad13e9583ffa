#include <doctest.h>

#include <cmath>

#include "oeasd/error.hpp"
#include "oeasd/mixup.hpp"

using namespace oeasd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("two normal clips of different ids mix into [l, 1-l, 0, ...]") {
  MatrixXd X = MatrixXd::Random(6, 2);
  VectorXd Y(2);
  Y << 1.0, 1.0;
  MatrixXd Tp = MatrixXd::Zero(4, 2);
  Tp(0, 0) = 1.0;
  Tp(1, 1) = 1.0;
  VectorXd lam(2);
  lam << 0.3, 0.8;
  const MixupResult r = mix_with(X, Y, Tp, {1, 0}, lam);
  CHECK(r.Tp(0, 0) == doctest::Approx(0.3));
  CHECK(r.Tp(1, 0) == doctest::Approx(0.7));
  CHECK(r.Tp(2, 0) == 0.0);
  CHECK(r.Tp(3, 0) == 0.0);
  CHECK(r.Y[0] == doctest::Approx(1.0));
  CHECK(r.X.col(0).isApprox(0.3 * X.col(0) + 0.7 * X.col(1)));
}

TEST_CASE("normal x pseudo-anomalous gives [l, 0, ...] and y = l") {
  MatrixXd X = MatrixXd::Random(3, 2);
  VectorXd Y(2);
  Y << 1.0, 0.0;
  MatrixXd Tp = MatrixXd::Zero(3, 2);
  Tp(0, 0) = 1.0;
  VectorXd lam(2);
  lam << 0.4, 0.4;
  const MixupResult r = mix_with(X, Y, Tp, {1, 0}, lam);
  CHECK(r.Tp(0, 0) == doctest::Approx(0.4));
  CHECK(r.Tp(1, 0) == 0.0);
  CHECK(r.Y[0] == doctest::Approx(0.4));
  // Sample 1 mixes 0.4 of the pseudo clip with 0.6 of the normal one.
  CHECK(r.Y[1] == doctest::Approx(0.6));
  CHECK(r.Tp(0, 1) == doctest::Approx(0.6));
}

TEST_CASE("lambda = 1 leaves a sample bit-identical") {
  MatrixXd X = MatrixXd::Random(5, 3);
  VectorXd Y(3);
  Y << 1.0, 0.0, 1.0;
  MatrixXd Tp = MatrixXd::Zero(2, 3);
  Tp(0, 0) = 1.0;
  Tp(1, 2) = 1.0;
  VectorXd lam(3);
  lam << 1.0, 0.5, 1.0;
  const MixupResult r = mix_with(X, Y, Tp, {2, 0, 1}, lam);
  for (int i : {0, 2}) {
    CHECK((r.X.col(i).array() == X.col(i).array()).all());
    CHECK(r.Y[i] == Y[i]);
    CHECK((r.Tp.col(i).array() == Tp.col(i).array()).all());
  }
}

TEST_CASE("random batches keep sum_c Tp' = Y' and zero pseudo x pseudo rows") {
  Rng rng(1);
  const MixupConfig cfg;
  for (int trial = 0; trial < 200; ++trial) {
    const int B = 16, C = 4;
    MatrixXd X = MatrixXd::Random(8, B);
    VectorXd Y(B);
    MatrixXd Tp = MatrixXd::Zero(C, B);
    for (int b = 0; b < B; ++b) {
      Y[b] = rng.uniform() < 0.5 ? 1.0 : 0.0;
      if (Y[b] > 0) Tp(static_cast<Eigen::Index>(rng.index(C)), b) = 1.0;
    }
    const MixupResult r = mixup_batch(X, Y, Tp, cfg, rng);
    for (int b = 0; b < B; ++b) {
      CHECK(std::abs(r.Tp.col(b).sum() - r.Y[b]) <= 1e-12);
      CHECK(r.lambda[b] >= 0.0);
      CHECK(r.lambda[b] <= 1.0);
      if (Y[b] == 0.0 && Y[static_cast<Eigen::Index>(r.partner[b])] == 0.0) {
        CHECK(r.Y[b] == 0.0);
        CHECK(r.Tp.col(b).isZero(0.0));
      }
    }
  }
}

TEST_CASE("partners form a permutation") {
  Rng rng(2);
  const MixupResult r = mixup_batch(MatrixXd::Zero(2, 10), VectorXd::Zero(10), MatrixXd::Zero(1, 10), {}, rng);
  std::vector<int> hits(10, 0);
  for (auto j : r.partner) hits[j]++;
  for (int h : hits) CHECK(h == 1);
}

TEST_CASE("disabled mixup is the identity") {
  Rng rng(3);
  MatrixXd X = MatrixXd::Random(4, 5);
  VectorXd Y = VectorXd::Random(5);
  MatrixXd Tp = MatrixXd::Random(2, 5);
  MixupConfig cfg;
  cfg.enabled = false;
  const MixupResult r = mixup_batch(X, Y, Tp, cfg, rng);
  CHECK((r.X.array() == X.array()).all());
  CHECK((r.Y.array() == Y.array()).all());
  CHECK((r.Tp.array() == Tp.array()).all());
}

TEST_CASE("shape mismatches and bad beta are rejected") {
  Rng rng(4);
  try {
    mixup_batch(MatrixXd::Zero(2, 3), VectorXd::Zero(4), MatrixXd::Zero(1, 3), {}, rng);
    FAIL("expected a shape error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::shape);
  }
  MixupConfig bad;
  bad.beta = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("beta 0.2 concentrates lambda near 0 and 1") {
  Rng rng(5);
  const MixupResult r = mixup_batch(MatrixXd::Zero(1, 4000), VectorXd::Zero(4000), MatrixXd::Zero(1, 4000), {}, rng);
  int extreme = 0;
  for (Eigen::Index i = 0; i < r.lambda.size(); ++i) extreme += r.lambda[i] < 0.1 || r.lambda[i] > 0.9;
  // P(l < 0.1 or l > 0.9) = 2 I_0.1(0.2, 0.2) = 0.6734; 4000 draws, sd ~ 30.
  CHECK(extreme > 2693 - 150);
  CHECK(extreme < 2693 + 150);
}
