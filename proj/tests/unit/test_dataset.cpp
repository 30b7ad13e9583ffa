#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "oeasd/dataset.hpp"
#include "oeasd/error.hpp"
#include "oeasd/wav.hpp"
#include "tmpdir.hpp"

using namespace oeasd;
using oeasd::testing::TempDir;

namespace {

SynthSpec small_spec() {
  SynthSpec s;
  s.machine_types = 2;
  s.ids_per_type = 2;
  s.clips_per_id = 3;
  s.test_clips_per_id = 2;
  s.train_anomalous_per_id = 2;
  s.clip_seconds = 1.0;
  s.seed = 7;
  return s;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::config;
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Minimal RIFF writer for format-rejection tests.
std::string riff(std::uint16_t format, std::uint16_t channels, std::uint32_t rate, std::uint16_t bits) {
  auto u16 = [](std::string& s, std::uint16_t v) { s.push_back(char(v & 0xff)); s.push_back(char(v >> 8)); };
  auto u32 = [&](std::string& s, std::uint32_t v) { u16(s, v & 0xffff); u16(s, v >> 16); };
  std::string fmt = "fmt ";
  u32(fmt, 16);
  u16(fmt, format);
  u16(fmt, channels);
  u32(fmt, rate);
  u32(fmt, rate * channels * bits / 8);
  u16(fmt, static_cast<std::uint16_t>(channels * bits / 8));
  u16(fmt, bits);
  std::string data = "data";
  u32(data, 4 * channels * bits / 8);
  data.append(4 * channels * bits / 8, '\0');
  std::string out = "RIFF";
  u32(out, static_cast<std::uint32_t>(4 + fmt.size() + data.size()));
  out += "WAVE" + fmt + data;
  return out;
}

}  // namespace

TEST_CASE("DCASE file names decode") {
  const ClipName n = parse_clip_name("normal_id_00_00000005.wav");
  CHECK(n.condition == Condition::normal);
  CHECK(n.machine_id == 0);
  CHECK(n.index == 5);
  const ClipName a = parse_clip_name("anomaly_id_06_00000123.wav");
  CHECK(a.condition == Condition::anomalous);
  CHECK(a.machine_id == 6);
  CHECK(format_clip_name(Condition::anomalous, 6, 123) == "anomaly_id_06_00000123.wav");
}

TEST_CASE("malformed file names are parse errors") {
  for (const char* bad : {"normal_id_0_00000005.wav", "normal_00_00000005.wav", "abnormal_id_00_00000005.wav",
                          "normal_id_00_0000005.wav", "normal_id_00_00000005.flac"}) {
    CHECK(kind_of([&] { parse_clip_name(bad); }) == ErrorKind::parse);
  }
}

TEST_CASE("WAV round trip keeps 16-bit samples") {
  TempDir dir("wav");
  std::vector<float> x = {0.0f, 0.5f, -0.5f, 0.25f, -1.0f};
  write_wav(dir.path() / "a.wav", x, 16000);
  const WavData w = read_wav(dir.path() / "a.wav", 16000);
  CHECK(w.sample_rate == 16000);
  REQUIRE(w.samples.size() == x.size());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(w.samples[i] == doctest::Approx(x[i]).epsilon(1e-4));
}

TEST_CASE("WAV reader rejects unsupported content") {
  TempDir dir("wavbad");
  write_bytes(dir.path() / "stereo.wav", riff(1, 2, 16000, 16));
  write_bytes(dir.path() / "float.wav", riff(3, 1, 16000, 32));
  write_bytes(dir.path() / "rate.wav", riff(1, 1, 44100, 16));
  write_bytes(dir.path() / "junk.wav", "not a wav file at all");
  CHECK(kind_of([&] { read_wav(dir.path() / "stereo.wav"); }) == ErrorKind::format);
  CHECK(kind_of([&] { read_wav(dir.path() / "float.wav"); }) == ErrorKind::format);
  CHECK(kind_of([&] { read_wav(dir.path() / "rate.wav", 16000); }) == ErrorKind::format);
  CHECK(kind_of([&] { read_wav(dir.path() / "junk.wav"); }) == ErrorKind::file);
  CHECK(kind_of([&] { read_wav(dir.path() / "missing.wav"); }) == ErrorKind::file);
}

TEST_CASE("synthetic generation is deterministic and sized") {
  const SynthSpec spec = small_spec();
  const Dataset a = synth_generate(spec);
  const Dataset b = synth_generate(spec, 3);
  REQUIRE(a.size() == b.size());
  // 2 types x 2 ids x (3 train + 2 train-anomalous + 2 + 2 test)
  CHECK(a.size() == 2 * 2 * 9);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].clip_id == b[i].clip_id);
    CHECK(a[i].samples == b[i].samples);
    CHECK(a[i].samples.size() == 16000);
  }
  CHECK(std::is_sorted(a.begin(), a.end(), [](auto& x, auto& y) { return x.clip_id < y.clip_id; }));
}

TEST_CASE("ten-second clips at 16 kHz hold 160000 samples") {
  SynthSpec spec = small_spec();
  spec.machine_types = 1;
  spec.ids_per_type = 1;
  spec.clips_per_id = 1;
  spec.test_clips_per_id = 0;
  spec.train_anomalous_per_id = 0;
  spec.clip_seconds = 10.0;
  const Dataset d = synth_generate(spec);
  REQUIRE(d.size() == 1);
  CHECK(d[0].samples.size() == 160000);
  CHECK(d[0].duration() == doctest::Approx(10.0));
}

TEST_CASE("anomalies are tagged and pitch shifts move the fundamental") {
  SynthSpec spec = small_spec();
  spec.anomaly_kinds = {AnomalyKind::pitch_shift};
  const Dataset d = synth_generate(spec);
  int shifted = 0;
  for (const AudioClip& c : d) {
    const SynthClipInfo info = synth_clip_info(spec, c.clip_id);
    const int t = c.key.machine_type.back() - '0';
    const double base = spec.fundamental(t, c.key.machine_id);
    if (c.condition == Condition::normal) {
      CHECK_FALSE(info.anomaly.has_value());
      CHECK(std::abs(info.fundamental / base - 1.0) < 0.03);
    } else {
      REQUIRE(info.anomaly.has_value());
      CHECK(*info.anomaly == AnomalyKind::pitch_shift);
      CHECK(std::abs(info.fundamental / base - 1.0) > 0.1);
      // A shifted clip must not pass for a normal clip of a sibling ID.
      for (int other = 0; other < spec.ids_per_type; ++other) {
        if (other != c.key.machine_id)
          CHECK(std::abs(info.fundamental / spec.fundamental(t, other) - 1.0) > 0.05);
      }
      ++shifted;
    }
  }
  CHECK(shifted > 0);
}

TEST_CASE("test split holds both conditions; train normal clips per id") {
  const Dataset d = synth_generate(small_spec());
  int test_normal = 0, test_anom = 0, train_normal = 0;
  for (const AudioClip& c : d) {
    if (c.split == Split::test) (c.condition == Condition::normal ? test_normal : test_anom)++;
    if (c.split == Split::train && c.condition == Condition::normal) ++train_normal;
  }
  CHECK(test_normal == 8);
  CHECK(test_anom == 8);
  CHECK(train_normal == 12);
}

TEST_CASE("invalid synthetic specs are rejected") {
  SynthSpec s = small_spec();
  s.clips_per_id = 0;
  CHECK(kind_of([&] { synth_generate(s); }) == ErrorKind::validation);
  s = small_spec();
  s.base_frequencies = {100.0, 100.0};
  CHECK(kind_of([&] { synth_generate(s); }) == ErrorKind::validation);
}

TEST_CASE("assign_roles builds disjoint pools with the requested draws") {
  const Dataset d = synth_generate(small_spec());
  const RoleAssignment r = assign_roles(d, "type0", 2, 1, 11);
  CHECK(r.normal_ids.size() == 6);
  CHECK(r.pseudo_anomalous_ids.size() == 6);
  CHECK(r.real_anomalous_ids.size() == 2);
  CHECK(r.contaminated_ids.size() == 1);
  CHECK_NOTHROW(r.check(d));
  CHECK(r.normal_pool().size() == 7);
  CHECK(r.consumed_anomalous().size() == 3);
  // Draws come from the dedicated train pool.
  for (const auto& id : r.consumed_anomalous()) CHECK(id.find("/train/anomaly_") != std::string::npos);

  const RoleAssignment again = assign_roles(d, "type0", 2, 1, 11);
  CHECK(again.real_anomalous_ids == r.real_anomalous_ids);
  CHECK(again.contaminated_ids == r.contaminated_ids);

  const RoleAssignment plain = assign_roles(d, "type0", 0, 0, 11);
  CHECK(plain.real_anomalous_ids.empty());
  CHECK(plain.contaminated_ids.empty());
}

TEST_CASE("assign_roles reports quota shortfalls with the available count") {
  const Dataset d = synth_generate(small_spec());
  try {
    assign_roles(d, "type1", 4, 1, 0);
    FAIL("expected a quota error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::quota);
    CHECK(std::string(e.what()).find("only 4") != std::string::npos);
  }
  CHECK(kind_of([&] { assign_roles(d, "nope", 0, 0, 0); }) == ErrorKind::validation);
}

TEST_CASE("without a train anomalous pool, draws come from the test split") {
  SynthSpec spec = small_spec();
  spec.train_anomalous_per_id = 0;
  const Dataset d = synth_generate(spec);
  const RoleAssignment r = assign_roles(d, "type0", 3, 0, 1);
  for (const auto& id : r.real_anomalous_ids) CHECK(id.find("/test/anomaly_") != std::string::npos);
}

TEST_CASE("check rejects overlapping or mistyped pools") {
  const Dataset d = synth_generate(small_spec());
  RoleAssignment r = assign_roles(d, "type0", 1, 0, 0);
  r.pseudo_anomalous_ids.push_back(r.normal_ids.front());
  CHECK(kind_of([&] { r.check(d); }) == ErrorKind::validation);
  r = assign_roles(d, "type0", 0, 0, 0);
  r.normal_ids.push_back(r.pseudo_anomalous_ids.front());
  CHECK(kind_of([&] { r.check(d); }) == ErrorKind::validation);
}

TEST_CASE("DCASE layout round trip through WAV files") {
  TempDir dir("layout");
  const Dataset d = synth_generate(small_spec());
  write_dcase_layout(dir.path(), d);
  CHECK(std::filesystem::exists(dir.path() / "type0" / "train" / "normal_id_00_00000000.wav"));
  const Dataset loaded = load_dcase_layout(dir.path(), {}, 2);
  REQUIRE(loaded.size() == d.size());
  std::set<std::string> ids_a, ids_b;
  for (const auto& c : d) ids_a.insert(c.clip_id);
  for (const auto& c : loaded) ids_b.insert(c.clip_id);
  CHECK(ids_a == ids_b);
  CHECK(std::is_sorted(loaded.begin(), loaded.end(), [](auto& x, auto& y) { return x.path < y.path; }));

  const Dataset only = load_dcase_layout(dir.path(), {"type1"});
  CHECK(only.size() == d.size() / 2);
  for (const auto& c : only) CHECK(c.key.machine_type == "type1");
}

TEST_CASE("loader rejects bad names and missing roots") {
  TempDir dir("layoutbad");
  std::filesystem::create_directories(dir.path() / "fan" / "train");
  write_wav(dir.path() / "fan" / "train" / "clip.wav", std::vector<float>(10, 0.0f), 16000);
  CHECK(kind_of([&] { load_dcase_layout(dir.path()); }) == ErrorKind::parse);
  CHECK(kind_of([&] { load_dcase_layout(dir.path() / "missing"); }) == ErrorKind::file);
}

TEST_CASE("manifest records every clip with its role") {
  TempDir dir("manifest");
  const Dataset d = synth_generate(small_spec());
  std::map<std::string, RoleAssignment> roles;
  roles.emplace("type0", assign_roles(d, "type0", 1, 1, 3));
  write_manifest(dir.path() / "m.jsonl", d, roles);
  const auto recs = read_manifest(dir.path() / "m.jsonl");
  REQUIRE(recs.size() == d.size());
  std::map<std::string, int> counts;
  for (const auto& r : recs) {
    if (r.machine_type == "type0") counts[r.role]++;
  }
  CHECK(counts["normal"] == 6);
  CHECK(counts["real_anomalous"] == 1);
  CHECK(counts["contaminated"] == 1);
  CHECK(counts["eval"] == 8);
  CHECK(counts["unused"] == 2);
}
