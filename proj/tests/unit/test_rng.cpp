#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "oeasd/rng.hpp"

using namespace oeasd;

TEST_CASE("fnv1a64 matches published test vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("same seed gives the same sequence") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("mt19937_64 engine follows the standard sequence") {
  // The C++ standard pins the 10000th output of a default-seeded mt19937_64.
  Rng r(5489u);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = r.next_u64();
  CHECK(v == 9981545732273789042ULL);
}

TEST_CASE("named streams are distinct and reproducible") {
  Rng a = Rng::stream(7, "mixup/fan");
  Rng b = Rng::stream(7, "mixup/fan");
  Rng c = Rng::stream(7, "sampler/fan");
  Rng d = Rng::stream(8, "mixup/fan");
  const auto va = a.next_u64();
  CHECK(va == b.next_u64());
  CHECK(va != c.next_u64());
  CHECK(va != d.next_u64());
}

TEST_CASE("uniform stays in [0, 1) with the right mean") {
  Rng r(1);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("index covers its range uniformly") {
  Rng r(2);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) counts[r.index(7)]++;
  // Each cell expects 10000 with sd ~ 93; allow 5 sd.
  for (int c : counts) CHECK(std::abs(c - 10000) < 470);
}

TEST_CASE("normal has zero mean and unit variance") {
  Rng r(3);
  const int n = 200000;
  double s = 0.0, ss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    ss += x * x;
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(ss / n == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("beta draws match the Beta(a, b) mean and variance") {
  for (auto [a, b] : {std::pair{0.2, 0.2}, std::pair{2.0, 5.0}, std::pair{0.5, 3.0}}) {
    Rng r(4);
    const int n = 100000;
    double s = 0.0, ss = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = r.beta(a, b);
      REQUIRE(x >= 0.0);
      REQUIRE(x <= 1.0);
      s += x;
      ss += x * x;
    }
    const double mean = a / (a + b);
    const double var = a * b / ((a + b) * (a + b) * (a + b + 1.0));
    CHECK(s / n == doctest::Approx(mean).epsilon(0.02));
    CHECK(ss / n - (s / n) * (s / n) == doctest::Approx(var).epsilon(0.03));
  }
}

TEST_CASE("gamma log-variates have the Gamma(k) mean for small and large shapes") {
  for (double k : {0.2, 1.0, 3.5}) {
    Rng r(5);
    const int n = 100000;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::exp(r.log_gamma_variate(k));
    CHECK(s / n == doctest::Approx(k).epsilon(0.03));
  }
}

TEST_CASE("permutation and shuffle produce permutations") {
  Rng r(6);
  auto p = r.permutation(50);
  std::vector<std::size_t> sorted = p;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> iota(50);
  std::iota(iota.begin(), iota.end(), 0);
  CHECK(sorted == iota);

  std::vector<int> v{1, 2, 3, 4, 5, 6};
  r.shuffle(v);
  CHECK(std::multiset<int>(v.begin(), v.end()) == std::multiset<int>{1, 2, 3, 4, 5, 6});
}
