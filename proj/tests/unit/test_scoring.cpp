#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "oeasd/error.hpp"
#include "oeasd/scoring.hpp"
#include "tmpdir.hpp"

using namespace oeasd;

namespace {

double brute_auc(const std::vector<double>& s, const std::vector<bool>& a) {
  double num = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!a[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (a[j]) continue;
      ++pairs;
      num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return num / pairs;
}

}  // namespace

TEST_CASE("aggregation examples") {
  CHECK(aggregate(std::vector<double>{1, 2, 3, 4}) == 3.5);
  CHECK(aggregate(std::vector<double>{7}) == 7.0);
  CHECK(aggregate(std::vector<double>{5, 1, 3}) == 4.0);
  CHECK_THROWS_AS(aggregate(std::vector<double>{}), Error);
  CHECK_THROWS_AS(aggregate(std::vector<double>{1.0, NAN}), Error);
}

TEST_CASE("aggregation is permutation invariant and bounded") {
  std::mt19937_64 g(1);
  std::normal_distribution<double> z;
  for (int t = 0; t < 200; ++t) {
    std::vector<double> v(1 + t % 17);
    for (auto& x : v) x = z(g);
    const double a = aggregate(v);
    std::vector<double> w = v;
    std::shuffle(w.begin(), w.end(), g);
    CHECK(aggregate(w) == doctest::Approx(a).epsilon(1e-15));
    CHECK(a <= *std::max_element(v.begin(), v.end()));
    CHECK(a >= std::accumulate(v.begin(), v.end(), 0.0) / v.size() - 1e-12);
  }
}

TEST_CASE("auc examples") {
  CHECK(auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, {false, false, true, true}) == 0.75);
  CHECK(auc(std::vector<double>{1, 1, 1, 1}, {false, true, false, true}) == 0.5);
  CHECK(auc(std::vector<double>{0, 1, 2, 3}, {false, false, true, true}) == 1.0);
  CHECK(auc(std::vector<double>{3, 2, 1, 0}, {false, false, true, true}) == 0.0);
  CHECK_THROWS_AS(auc(std::vector<double>{1, 2}, {true, true}), Error);
  CHECK_THROWS_AS(auc(std::vector<double>{1, 2}, {true}), Error);
}

TEST_CASE("auc agrees with pair counting and is rank invariant") {
  std::mt19937_64 g(2);
  std::uniform_int_distribution<int> level(0, 9);
  for (int t = 0; t < 300; ++t) {
    const int n = 2 + t % 40;
    std::vector<double> s(n);
    std::vector<bool> a(n);
    for (int i = 0; i < n; ++i) {
      s[i] = level(g);
      a[i] = i % 2 == 0;
    }
    CHECK(auc(s, a) == brute_auc(s, a));
    std::vector<double> e(n);
    for (int i = 0; i < n; ++i) e[i] = std::exp(s[i]) * 3.0 - 1.0;
    CHECK(auc(e, a) == auc(s, a));
  }
}

TEST_CASE("pauc against a hand-built ROC") {
  // Negatives 0.1 0.2 0.3 0.4 0.5; positives 0.45 0.35 0.9.
  // Thresholds descending: 0.9 (tp 1), 0.5 (fp 1), 0.45 (tp 2), 0.4 (fp 2), 0.35 (tp 3) ...
  // ROC points (fpr, tpr): (0,0) (0,1/3) (0.2,1/3) (0.2,2/3) (0.4,2/3) (0.4,1) ...
  const std::vector<double> s = {0.1, 0.2, 0.3, 0.4, 0.5, 0.45, 0.35, 0.9};
  const std::vector<bool> a = {false, false, false, false, false, true, true, true};
  // Area up to fpr 0.1 is 0.1 * 1/3; divided by 0.1.
  CHECK(pauc(s, a, 0.1) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  // Up to 0.3: 0.2 * 1/3 + 0.1 * 2/3 = 2/15; divided by 0.3.
  CHECK(pauc(s, a, 0.3) == doctest::Approx((2.0 / 15.0) / 0.3).epsilon(1e-14));
  CHECK(pauc(s, a, 1.0) == auc(s, a));
}

TEST_CASE("pauc limits") {
  const std::vector<double> ties = {1, 1, 1, 1};
  const std::vector<bool> lab = {false, true, false, true};
  // All ties give the diagonal ROC: area p^2 / 2 over [0, p], divided by p.
  CHECK(pauc(ties, lab, 0.1) == doctest::Approx(0.05).epsilon(1e-14));
  CHECK(pauc(std::vector<double>{0, 1, 2, 3}, {false, false, true, true}, 0.1) == 1.0);
  std::mt19937_64 g(3);
  std::normal_distribution<double> z;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> s(30);
    std::vector<bool> a(30);
    for (int i = 0; i < 30; ++i) {
      s[i] = z(g);
      a[i] = i < 12;
    }
    const double p = pauc(s, a, 0.1);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    CHECK(pauc(s, a, 1.0) == auc(s, a));
  }
}

TEST_CASE("per-id metrics, rollup and csv") {
  std::vector<ClipScore> clips;
  const double sc[] = {0.1, 0.2, 0.9, 0.8};
  for (int i = 0; i < 4; ++i) {
    ClipScore c;
    c.clip_id = "c" + std::to_string(i);
    c.machine_type = "fan";
    c.machine_id = 0;
    c.truth = i >= 2 ? Condition::anomalous : Condition::normal;
    c.score = sc[i];
    clips.push_back(c);
  }
  const MetricRow r0 = evaluate_id("fan", 0, clips, 0.1);
  CHECK(r0.auc == 1.0);
  CHECK(r0.aauc == doctest::Approx((r0.auc + r0.pauc) / 2));
  MetricRow r1{"fan", 1, 0.6, 0.2, 0.4};
  const std::vector<MetricRow> rows = {r0, r1};
  const auto sum = rollup(rows);
  REQUIRE(sum.size() == 1);
  CHECK(sum[0].mean_auc == doctest::Approx(0.8));
  CHECK(sum[0].min_auc == 0.6);

  oeasd::testing::TempDir dir("scoring");
  write_metrics_csv(dir.path() / "m.csv", rows);
  std::ifstream in(dir.path() / "m.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "machine_type,machine_id,auc,pauc,aauc");
  const auto back = read_metrics_csv(dir.path() / "m.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].auc == 0.6);
  write_scores_csv(dir.path() / "s.csv", clips);
  std::ifstream sin(dir.path() / "s.csv");
  std::getline(sin, header);
  CHECK(header == "clip_id,machine_type,machine_id,truth,score");
  CHECK(format_metric(0.5) == "0.5000000000");
}

TEST_CASE("perfect separation gives exactly one for any limit") {
  std::mt19937_64 g(4);
  std::normal_distribution<double> z;
  for (int n = 2; n < 120; ++n) {
    std::vector<double> s(n);
    std::vector<bool> a(n);
    for (int i = 0; i < n; ++i) {
      a[i] = i % 3 == 0;
      s[i] = (a[i] ? 20.0 : 0.0) + z(g);
    }
    for (double p : {0.05, 0.1, 0.15, 0.3, 1.0}) CHECK(pauc(s, a, p) == 1.0);
  }
}
