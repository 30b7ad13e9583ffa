#include <doctest.h>

#include <map>
#include <set>

#include "oeasd/error.hpp"
#include "oeasd/sampler.hpp"

using namespace oeasd;

namespace {

RoleAssignment roles_with(int normal, int pseudo, int anomalous, int contaminated = 0) {
  RoleAssignment r;
  r.target_type = "fan";
  for (int i = 0; i < normal; ++i) r.normal_ids.push_back("fan/train/n" + std::to_string(i));
  for (int i = 0; i < pseudo; ++i) r.pseudo_anomalous_ids.push_back("pump/train/n" + std::to_string(i));
  for (int i = 0; i < anomalous; ++i) r.real_anomalous_ids.push_back("fan/train/a" + std::to_string(i));
  for (int i = 0; i < contaminated; ++i) r.contaminated_ids.push_back("fan/train/c" + std::to_string(i));
  return r;
}

std::map<SlotRole, int> counts(const Batch& b) {
  std::map<SlotRole, int> c;
  for (const auto& e : b) c[e.role]++;
  return c;
}

}  // namespace

TEST_CASE("layout slot counts") {
  const BatchLayout plain = BatchLayout::make(128, false);
  CHECK(plain.normal_slots == 64);
  CHECK(plain.pseudo_slots == 64);
  CHECK(plain.anomalous_slots == 0);
  const BatchLayout with = BatchLayout::make(128, true);
  CHECK(with.normal_slots == 64);
  CHECK(with.pseudo_slots == 63);
  CHECK(with.anomalous_slots == 1);
  CHECK_THROWS_AS(BatchLayout::make(127, false), Error);
}

TEST_CASE("1000 normal clips with B = 128 give 16 batches") {
  CHECK(batches_per_epoch(1000, 128) == 16);
  Rng rng(1);
  const auto epoch = make_epoch(roles_with(1000, 500, 0), 128, rng);
  CHECK(epoch.size() == 16);
}

TEST_CASE("no anomalies: 64 normal + 64 pseudo per batch") {
  Rng rng(2);
  for (const Batch& b : make_epoch(roles_with(300, 200, 0), 128, rng)) {
    CHECK(b.size() == 128);
    auto c = counts(b);
    CHECK(c[SlotRole::normal] == 64);
    CHECK(c[SlotRole::pseudo_anomalous] == 64);
    CHECK(c[SlotRole::anomalous] == 0);
  }
}

TEST_CASE("one anomalous clip replaces one pseudo slot") {
  Rng rng(3);
  for (const Batch& b : make_epoch(roles_with(300, 200, 1), 128, rng)) {
    auto c = counts(b);
    CHECK(c[SlotRole::normal] == 64);
    CHECK(c[SlotRole::pseudo_anomalous] == 63);
    CHECK(c[SlotRole::anomalous] == 1);
  }
}

TEST_CASE("each epoch covers the normal pool with excess below B/2") {
  for (int n : {64, 100, 300, 1000}) {
    Rng rng(static_cast<std::uint64_t>(n));
    const RoleAssignment r = roles_with(n, 50, 3, 5);
    const auto epoch = make_epoch(r, 128, rng);
    std::map<std::string, int> seen;
    int total = 0;
    for (const Batch& b : epoch) {
      for (const auto& e : b) {
        if (e.role == SlotRole::normal) {
          seen[e.clip_id]++;
          ++total;
        }
      }
    }
    const auto pool = r.normal_pool();
    for (const auto& id : pool) CHECK(seen[id] >= 1);
    CHECK(seen.size() == pool.size());
    CHECK(total - static_cast<int>(pool.size()) < 64);
  }
}

TEST_CASE("role tags come from the right pools") {
  Rng rng(4);
  const RoleAssignment r = roles_with(200, 40, 2);
  const std::set<std::string> pseudo(r.pseudo_anomalous_ids.begin(), r.pseudo_anomalous_ids.end());
  const std::set<std::string> anom(r.real_anomalous_ids.begin(), r.real_anomalous_ids.end());
  for (const Batch& b : make_epoch(r, 64, rng)) {
    for (const auto& e : b) {
      if (e.role == SlotRole::pseudo_anomalous) CHECK(pseudo.contains(e.clip_id));
      if (e.role == SlotRole::anomalous) CHECK(anom.contains(e.clip_id));
    }
  }
}

TEST_CASE("epochs are deterministic given the seed") {
  const RoleAssignment r = roles_with(150, 40, 2);
  Rng a(5), b(5);
  const auto ea = make_epoch(r, 32, a), eb = make_epoch(r, 32, b);
  REQUIRE(ea.size() == eb.size());
  for (std::size_t i = 0; i < ea.size(); ++i) {
    for (std::size_t j = 0; j < ea[i].size(); ++j) CHECK(ea[i][j].clip_id == eb[i][j].clip_id);
  }
}

TEST_CASE("configuration errors") {
  Rng rng(6);
  try {
    make_epoch(roles_with(10, 40, 0), 128, rng);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
  }
  CHECK_THROWS_AS(make_epoch(roles_with(100, 0, 0), 32, rng), Error);
}
