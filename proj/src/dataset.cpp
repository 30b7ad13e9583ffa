#include "oeasd/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <regex>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "oeasd/error.hpp"
#include "oeasd/parallel.hpp"
#include "oeasd/rng.hpp"
#include "oeasd/wav.hpp"

namespace oeasd {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(Condition c) noexcept {
  return c == Condition::normal ? "normal" : "anomalous";
}

const char* to_string(Split s) noexcept { return s == Split::train ? "train" : "test"; }

const char* to_string(AnomalyKind k) noexcept {
  switch (k) {
    case AnomalyKind::pitch_shift: return "pitch_shift";
    case AnomalyKind::transient_bursts: return "transient_bursts";
    case AnomalyKind::harmonic_drop: return "harmonic_drop";
  }
  return "unknown";
}

AnomalyKind parse_anomaly_kind(std::string_view name) {
  if (name == "pitch_shift") return AnomalyKind::pitch_shift;
  if (name == "transient_bursts") return AnomalyKind::transient_bursts;
  if (name == "harmonic_drop") return AnomalyKind::harmonic_drop;
  fail(ErrorKind::parse, "unknown anomaly kind: " + std::string(name));
}

ClipName parse_clip_name(std::string_view filename) {
  static const std::regex pattern(R"(^(normal|anomaly)_id_(\d{2})_(\d{8})\.wav$)");
  std::cmatch m;
  if (!std::regex_match(filename.begin(), filename.end(), m, pattern)) {
    fail(ErrorKind::parse, "file name does not follow <normal|anomaly>_id_NN_NNNNNNNN.wav: " +
                               std::string(filename));
  }
  ClipName out;
  out.condition = m[1] == "normal" ? Condition::normal : Condition::anomalous;
  out.machine_id = std::stoi(m[2]);
  out.index = std::stoi(m[3]);
  return out;
}

std::string format_clip_name(Condition condition, int machine_id, int index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_id_%02d_%08d.wav",
                condition == Condition::normal ? "normal" : "anomaly", machine_id, index);
  return buf;
}

// ---------------------------------------------------------------------------
// DCASE layout

Dataset load_dcase_layout(const fs::path& root, const std::vector<std::string>& types, int jobs) {
  if (!fs::is_directory(root)) fail(ErrorKind::file, "dataset root is not a directory: " + root.string());

  struct Pending {
    fs::path path;
    std::string machine_type;
    Split split;
    ClipName name;
  };
  std::vector<Pending> pending;
  for (const auto& type_entry : fs::directory_iterator(root)) {
    if (!type_entry.is_directory()) continue;
    const std::string type = type_entry.path().filename().string();
    if (!types.empty() && std::find(types.begin(), types.end(), type) == types.end()) continue;
    for (Split split : {Split::train, Split::test}) {
      const fs::path dir = type_entry.path() / to_string(split);
      if (!fs::is_directory(dir)) continue;
      for (const auto& file : fs::directory_iterator(dir)) {
        if (!file.is_regular_file() || file.path().extension() != ".wav") continue;
        pending.push_back({file.path(), type, split, parse_clip_name(file.path().filename().string())});
      }
    }
  }
  std::sort(pending.begin(), pending.end(),
            [](const Pending& a, const Pending& b) { return a.path < b.path; });

  Dataset out(pending.size());
  parallel_for(pending.size(), jobs, [&](std::size_t i) {
    const Pending& p = pending[i];
    WavData wav = read_wav(p.path, 16000);
    AudioClip& clip = out[i];
    clip.key = {p.machine_type, p.name.machine_id};
    clip.condition = p.name.condition;
    clip.split = p.split;
    clip.samples = std::move(wav.samples);
    clip.sample_rate = wav.sample_rate;
    clip.clip_id = p.machine_type + "/" + to_string(p.split) + "/" + p.path.stem().string();
    clip.path = p.path.string();
  });
  return out;
}

void write_dcase_layout(const fs::path& root, const Dataset& dataset) {
  for (const AudioClip& clip : dataset) {
    const fs::path dir = root / clip.key.machine_type / to_string(clip.split);
    fs::create_directories(dir);
    const std::string stem = clip.clip_id.substr(clip.clip_id.rfind('/') + 1);
    write_wav(dir / (stem + ".wav"), clip.samples, clip.sample_rate);
  }
}

// ---------------------------------------------------------------------------
// Synthetic generator

namespace {

constexpr int kHarmonics = 8;
constexpr double kMachineRms = 0.1;
constexpr double kPitchShift = 0.15;
constexpr int kBursts = 3;
constexpr double kBurstSeconds = 0.05;
constexpr double kBurstRmsRatio = 4.0;
constexpr double kBrownPole = 0.98;

struct ClipPlan {
  double fundamental = 0.0;
  std::array<double, kHarmonics> amplitude{};
  std::array<double, kHarmonics> phase{};
  double gain = 1.0;
  double am_rate = 0.0;
  double am_depth = 0.0;
  double am_phase = 0.0;
  double noise_gain = 1.0;
  double reference_power = 0.0;
  std::optional<AnomalyKind> anomaly;
};

struct ParsedSynthId {
  int type_index;
  Split split;
  ClipName name;
};

double type_scale(int t) { return 1.0 + 0.29 * t; }
double type_tilt(int t) { return 0.6 + 0.5 * t; }
double type_am_rate(int t) { return 4.0 + 3.0 * t; }

// All random parameters of a clip are drawn here, before any rendering draws,
// so synth_clip_info can replay them cheaply.
ClipPlan plan_clip(const SynthSpec& spec, int t, int id, Condition condition, int index, Rng& rng) {
  ClipPlan plan;
  plan.fundamental = spec.fundamental(t, id) * (1.0 + 0.004 * rng.normal());
  const double tilt = type_tilt(t);
  for (int h = 0; h < kHarmonics; ++h) {
    plan.amplitude[h] = std::pow(h + 1.0, -tilt) * std::max(0.2, 1.0 + 0.15 * rng.normal());
    plan.phase[h] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  plan.gain = rng.uniform(0.7, 1.3);
  plan.am_rate = type_am_rate(t) * (1.0 + 0.02 * rng.normal());
  plan.am_depth = 0.25;
  plan.am_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  plan.noise_gain = rng.uniform(0.5, 1.5);
  for (int h = 0; h < kHarmonics; ++h) {
    if (plan.fundamental * (h + 1) < 0.45 * spec.sample_rate) {
      plan.reference_power += 0.5 * plan.amplitude[h] * plan.amplitude[h];
    }
  }
  if (condition == Condition::anomalous) {
    const auto& kinds = spec.anomaly_kinds;
    plan.anomaly = kinds[static_cast<std::size_t>(index) % kinds.size()];
    if (*plan.anomaly == AnomalyKind::pitch_shift) {
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      plan.fundamental *= 1.0 + sign * kPitchShift;
    } else if (*plan.anomaly == AnomalyKind::harmonic_drop) {
      for (int h = 2; h < kHarmonics; ++h) plan.amplitude[h] = 0.0;
    }
  }
  return plan;
}

std::vector<float> render_clip(const SynthSpec& spec, const ClipPlan& plan, Rng& rng) {
  const auto n = static_cast<std::size_t>(std::llround(spec.clip_seconds * spec.sample_rate));
  const double sr = spec.sample_rate;
  std::vector<double> x(n, 0.0);

  // Harmonic stack via phasor recursion; harmonics at or above 0.45*sr are
  // skipped. The level is set from the unmodified partials, so a harmonic
  // drop lowers loudness as well as changing timbre.
  const double norm =
      plan.reference_power > 0.0 ? plan.gain * kMachineRms / std::sqrt(plan.reference_power) : 0.0;
  for (int h = 0; h < kHarmonics; ++h) {
    const double f = plan.fundamental * (h + 1);
    if (plan.amplitude[h] == 0.0 || f >= 0.45 * sr) continue;
    const double w = 2.0 * std::numbers::pi * f / sr;
    const std::complex<double> step(std::cos(w), std::sin(w));
    std::complex<double> z(std::cos(plan.phase[h]), std::sin(plan.phase[h]));
    const double a = plan.amplitude[h] * norm;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += a * z.imag();
      z *= step;
      if ((i & 1023) == 1023) z /= std::abs(z);
    }
  }
  {
    const double w = 2.0 * std::numbers::pi * plan.am_rate / sr;
    const std::complex<double> step(std::cos(w), std::sin(w));
    std::complex<double> z(std::cos(plan.am_phase), std::sin(plan.am_phase));
    for (std::size_t i = 0; i < n; ++i) {
      x[i] *= 1.0 + plan.am_depth * z.imag();
      z *= step;
      if ((i & 1023) == 1023) z /= std::abs(z);
    }
  }

  // Shared background: white plus a leaky-integrated (brown-ish) component.
  const double brown_std = 1.0 / std::sqrt(1.0 - kBrownPole * kBrownPole);
  const double mix_rms = std::sqrt(0.6 * 0.6 + 0.4 * 0.4);
  const double noise_scale = kMachineRms * spec.noise_level * plan.noise_gain / mix_rms;
  double brown = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double white = rng.normal();
    brown = kBrownPole * brown + rng.normal();
    x[i] += noise_scale * (0.6 * white + 0.4 * brown / brown_std);
  }

  if (plan.anomaly == AnomalyKind::transient_bursts) {
    double energy = 0.0;
    for (double v : x) energy += v * v;
    const double rms = std::sqrt(energy / static_cast<double>(n));
    const auto len = std::min<std::size_t>(n, static_cast<std::size_t>(kBurstSeconds * sr));
    for (int b = 0; b < kBursts; ++b) {
      const std::size_t start = rng.index(n - len + 1);
      for (std::size_t i = 0; i < len; ++i) x[start + i] += kBurstRmsRatio * rms * rng.normal();
    }
  }

  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(x[i]);
  return out;
}

std::string synth_clip_id(const SynthSpec& spec, int t, Split split, Condition c, int id, int index) {
  std::string name = format_clip_name(c, id, index);
  name.resize(name.size() - 4);  // drop ".wav"
  return spec.type_name(t) + "/" + to_string(split) + "/" + name;
}

ParsedSynthId parse_synth_id(const SynthSpec& spec, const std::string& clip_id) {
  const auto a = clip_id.find('/');
  const auto b = clip_id.find('/', a + 1);
  if (a == std::string::npos || b == std::string::npos) fail(ErrorKind::parse, "bad clip id: " + clip_id);
  const std::string type = clip_id.substr(0, a);
  const std::string split = clip_id.substr(a + 1, b - a - 1);
  ParsedSynthId out{};
  out.type_index = -1;
  for (int t = 0; t < spec.machine_types; ++t) {
    if (spec.type_name(t) == type) out.type_index = t;
  }
  if (out.type_index < 0) fail(ErrorKind::parse, "clip id names an unknown type: " + clip_id);
  if (split != "train" && split != "test") fail(ErrorKind::parse, "bad split in clip id: " + clip_id);
  out.split = split == "train" ? Split::train : Split::test;
  out.name = parse_clip_name(clip_id.substr(b + 1) + ".wav");
  return out;
}

}  // namespace

void SynthSpec::validate() const {
  if (machine_types < 1 || ids_per_type < 1 || clips_per_id < 1 || test_clips_per_id < 0 ||
      train_anomalous_per_id < 0) {
    fail(ErrorKind::validation, "synthetic spec counts must be >= 1");
  }
  if (!(clip_seconds > 0.0) || sample_rate <= 0) {
    fail(ErrorKind::validation, "synthetic clip length and sample rate must be positive");
  }
  if (!(noise_level >= 0.0)) fail(ErrorKind::validation, "noise level must be non-negative");
  if (anomaly_kinds.empty()) fail(ErrorKind::validation, "at least one anomaly kind is required");
  if (ids_per_type > 100) fail(ErrorKind::validation, "machine ids are limited to two digits");
  if (!base_frequencies.empty()) {
    if (static_cast<int>(base_frequencies.size()) != ids_per_type) {
      fail(ErrorKind::validation, "base_frequencies needs one entry per machine id");
    }
    std::vector<double> sorted = base_frequencies;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      fail(ErrorKind::validation, "base frequencies must be distinct per id");
    }
    for (double f : sorted) {
      if (!(f > 0.0)) fail(ErrorKind::validation, "base frequencies must be positive");
    }
  }
}

std::string SynthSpec::type_name(int t) const { return "type" + std::to_string(t); }

double SynthSpec::fundamental(int type_index, int machine_id) const {
  // Rungs 25% apart, so a pitch-shifted anomaly never lands on a sibling ID.
  const double base = base_frequencies.empty()
                          ? 160.0 * std::pow(1.25, machine_id)
                          : base_frequencies.at(static_cast<std::size_t>(machine_id));
  return base * type_scale(type_index);
}

Dataset synth_generate(const SynthSpec& spec, int jobs) {
  spec.validate();
  struct Job {
    int t, id, index;
    Split split;
    Condition condition;
  };
  std::vector<Job> plan;
  for (int t = 0; t < spec.machine_types; ++t) {
    for (int id = 0; id < spec.ids_per_type; ++id) {
      for (int i = 0; i < spec.clips_per_id; ++i) plan.push_back({t, id, i, Split::train, Condition::normal});
      for (int i = 0; i < spec.train_anomalous_per_id; ++i)
        plan.push_back({t, id, i, Split::train, Condition::anomalous});
      for (int i = 0; i < spec.test_clips_per_id; ++i) {
        plan.push_back({t, id, i, Split::test, Condition::normal});
        plan.push_back({t, id, i, Split::test, Condition::anomalous});
      }
    }
  }

  Dataset out(plan.size());
  parallel_for(plan.size(), jobs, [&](std::size_t j) {
    const Job& job = plan[j];
    AudioClip& clip = out[j];
    clip.key = {spec.type_name(job.t), job.id};
    clip.condition = job.condition;
    clip.split = job.split;
    clip.sample_rate = spec.sample_rate;
    clip.clip_id = synth_clip_id(spec, job.t, job.split, job.condition, job.id, job.index);
    Rng rng = Rng::stream(spec.seed, clip.clip_id);
    const ClipPlan p = plan_clip(spec, job.t, job.id, job.condition, job.index, rng);
    clip.samples = render_clip(spec, p, rng);
  });
  std::sort(out.begin(), out.end(),
            [](const AudioClip& a, const AudioClip& b) { return a.clip_id < b.clip_id; });
  return out;
}

SynthClipInfo synth_clip_info(const SynthSpec& spec, const std::string& clip_id) {
  const ParsedSynthId parsed = parse_synth_id(spec, clip_id);
  Rng rng = Rng::stream(spec.seed, clip_id);
  const ClipPlan p = plan_clip(spec, parsed.type_index, parsed.name.machine_id,
                               parsed.name.condition, parsed.name.index, rng);
  return {p.fundamental, p.anomaly};
}

// ---------------------------------------------------------------------------
// Roles

std::vector<std::string> RoleAssignment::normal_pool() const {
  std::vector<std::string> pool = normal_ids;
  pool.insert(pool.end(), contaminated_ids.begin(), contaminated_ids.end());
  return pool;
}

std::set<std::string> RoleAssignment::consumed_anomalous() const {
  std::set<std::string> out(real_anomalous_ids.begin(), real_anomalous_ids.end());
  out.insert(contaminated_ids.begin(), contaminated_ids.end());
  return out;
}

void RoleAssignment::check(const Dataset& dataset) const {
  std::unordered_map<std::string, const AudioClip*> by_id;
  for (const AudioClip& c : dataset) by_id.emplace(c.clip_id, &c);
  std::set<std::string> seen;
  auto visit = [&](const std::vector<std::string>& ids, const char* pool, auto&& predicate) {
    for (const std::string& id : ids) {
      if (!seen.insert(id).second) {
        fail(ErrorKind::validation, std::string("clip appears in more than one role pool: ") + id);
      }
      auto it = by_id.find(id);
      if (it == by_id.end()) fail(ErrorKind::validation, std::string(pool) + " clip not in dataset: " + id);
      if (!predicate(*it->second)) {
        fail(ErrorKind::validation, std::string("clip violates the ") + pool + " pool contract: " + id);
      }
    }
  };
  visit(normal_ids, "normal", [&](const AudioClip& c) {
    return c.condition == Condition::normal && c.key.machine_type == target_type;
  });
  visit(pseudo_anomalous_ids, "pseudo-anomalous",
        [&](const AudioClip& c) { return c.key.machine_type != target_type; });
  visit(real_anomalous_ids, "real-anomalous", [&](const AudioClip& c) {
    return c.condition == Condition::anomalous && c.key.machine_type == target_type;
  });
  visit(contaminated_ids, "contaminated", [&](const AudioClip& c) {
    return c.condition == Condition::anomalous && c.key.machine_type == target_type;
  });
}

std::vector<const AudioClip*> train_usable_anomalous(const Dataset& dataset,
                                                     const std::string& target_type) {
  std::vector<const AudioClip*> train_pool, test_pool;
  for (const AudioClip& c : dataset) {
    if (c.key.machine_type != target_type || c.condition != Condition::anomalous) continue;
    (c.split == Split::train ? train_pool : test_pool).push_back(&c);
  }
  auto& pool = train_pool.empty() ? test_pool : train_pool;
  std::sort(pool.begin(), pool.end(),
            [](const AudioClip* a, const AudioClip* b) { return a->clip_id < b->clip_id; });
  return pool;
}

RoleAssignment assign_roles(const Dataset& dataset, const std::string& target_type,
                            int n_real_anomalous, int n_contaminated, std::uint64_t seed) {
  if (n_real_anomalous < 0 || n_contaminated < 0) {
    fail(ErrorKind::validation, "anomalous draw counts must be non-negative");
  }
  RoleAssignment roles;
  roles.target_type = target_type;
  bool present = false;
  for (const AudioClip& c : dataset) {
    if (c.key.machine_type == target_type) present = true;
    if (c.split != Split::train || c.condition != Condition::normal) continue;
    if (c.key.machine_type == target_type) {
      roles.normal_ids.push_back(c.clip_id);
    } else {
      roles.pseudo_anomalous_ids.push_back(c.clip_id);
    }
  }
  if (!present) fail(ErrorKind::validation, "target machine type not in dataset: " + target_type);
  std::sort(roles.normal_ids.begin(), roles.normal_ids.end());
  std::sort(roles.pseudo_anomalous_ids.begin(), roles.pseudo_anomalous_ids.end());

  const std::size_t wanted = static_cast<std::size_t>(n_real_anomalous) + n_contaminated;
  if (wanted > 0) {
    std::vector<const AudioClip*> pool = train_usable_anomalous(dataset, target_type);
    if (wanted > pool.size()) {
      fail(ErrorKind::quota, "requested " + std::to_string(wanted) + " anomalous clips of " +
                                 target_type + " but only " + std::to_string(pool.size()) +
                                 " are available");
    }
    Rng rng = Rng::stream(seed, "roles/" + target_type);
    rng.shuffle(pool);
    for (std::size_t i = 0; i < wanted; ++i) {
      auto& dst = i < static_cast<std::size_t>(n_real_anomalous) ? roles.real_anomalous_ids
                                                                   : roles.contaminated_ids;
      dst.push_back(pool[i]->clip_id);
    }
  }
  return roles;
}

std::vector<std::string> machine_types(const Dataset& dataset) {
  std::set<std::string> types;
  for (const AudioClip& c : dataset) types.insert(c.key.machine_type);
  return {types.begin(), types.end()};
}

// ---------------------------------------------------------------------------
// Manifest

void write_manifest(const fs::path& path, const Dataset& dataset,
                    const std::map<std::string, RoleAssignment>& roles_by_type) {
  std::map<std::string, std::map<std::string, std::string>> role_of;
  for (const auto& [type, roles] : roles_by_type) {
    auto& m = role_of[type];
    for (const auto& id : roles.normal_ids) m[id] = "normal";
    for (const auto& id : roles.contaminated_ids) m[id] = "contaminated";
    for (const auto& id : roles.real_anomalous_ids) m[id] = "real_anomalous";
  }
  std::ofstream out(path);
  if (!out) fail(ErrorKind::file, "cannot write manifest: " + path.string());
  for (const AudioClip& c : dataset) {
    std::string role = c.split == Split::test ? "eval" : "unused";
    if (c.split == Split::train && c.condition == Condition::normal) role = "normal";
    if (auto t = role_of.find(c.key.machine_type); t != role_of.end()) {
      if (auto r = t->second.find(c.clip_id); r != t->second.end()) role = r->second;
    }
    json rec = {{"clip_id", c.clip_id},
                {"machine_type", c.key.machine_type},
                {"machine_id", c.key.machine_id},
                {"condition", to_string(c.condition)},
                {"split", to_string(c.split)},
                {"role", role},
                {"path", c.path}};
    out << rec.dump() << '\n';
  }
  if (!out) fail(ErrorKind::file, "write failed: " + path.string());
}

std::vector<ManifestRecord> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::file, "cannot read manifest: " + path.string());
  std::vector<ManifestRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      out.push_back({j.at("clip_id"), j.at("machine_type"), j.at("machine_id"), j.at("condition"),
                     j.at("split"), j.at("role"), j.at("path")});
    } catch (const json::exception& e) {
      fail(ErrorKind::parse, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace oeasd
