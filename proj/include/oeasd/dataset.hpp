#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace oeasd {

enum class Condition { normal, anomalous };
enum class Split { train, test };

const char* to_string(Condition c) noexcept;
const char* to_string(Split s) noexcept;

struct MachineKey {
  std::string machine_type;
  int machine_id = 0;

  auto operator<=>(const MachineKey&) const = default;
};

struct AudioClip {
  MachineKey key;
  Condition condition = Condition::normal;
  Split split = Split::train;
  std::vector<float> samples;
  int sample_rate = 16000;
  std::string clip_id;  // "<type>/<split>/<file stem>"
  std::string path;     // source file, empty for generated clips

  double duration() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
};

using Dataset = std::vector<AudioClip>;

/// Parsed form of a DCASE2020 file name such as `normal_id_00_00000005.wav`.
struct ClipName {
  Condition condition;
  int machine_id;
  int index;
};

/// Throws ErrorKind::parse for names outside the DCASE2020 convention.
ClipName parse_clip_name(std::string_view filename);
std::string format_clip_name(Condition condition, int machine_id, int index);

/// Loads `<root>/<machine_type>/{train,test}/*.wav`. Clips come back sorted by
/// path. `types`, when non-empty, restricts loading to those machine types.
Dataset load_dcase_layout(const std::filesystem::path& root,
                          const std::vector<std::string>& types = {}, int jobs = 1);

enum class AnomalyKind { pitch_shift, transient_bursts, harmonic_drop };

const char* to_string(AnomalyKind k) noexcept;
AnomalyKind parse_anomaly_kind(std::string_view name);

/// Parameters of the synthetic machine-sound generator.
///
/// Each machine type has its own register and harmonic tilt; each ID has its
/// own fundamental. All clips share the same broadband background recipe, so
/// telling types apart requires looking past the noise floor.
struct SynthSpec {
  int machine_types = 3;
  int ids_per_type = 3;
  int clips_per_id = 100;           // train normal clips per ID
  int test_clips_per_id = 40;       // test normal clips per ID, and as many anomalous
  int train_anomalous_per_id = 12;  // dedicated pool usable for training draws
  double clip_seconds = 10.0;
  int sample_rate = 16000;
  std::vector<double> base_frequencies;  // per ID; empty selects the default ladder
  double noise_level = 1.5;              // background RMS relative to machine RMS
  std::vector<AnomalyKind> anomaly_kinds = {
      AnomalyKind::pitch_shift, AnomalyKind::transient_bursts, AnomalyKind::harmonic_drop};
  std::uint64_t seed = 0;

  void validate() const;
  std::string type_name(int t) const;
  /// Fundamental of (type, id) before per-clip jitter.
  double fundamental(int type_index, int machine_id) const;
};

/// Deterministic given spec.seed. Clips are sorted by clip_id.
Dataset synth_generate(const SynthSpec& spec, int jobs = 1);

/// The anomaly applied to a generated anomalous clip, recoverable for tests.
struct SynthClipInfo {
  double fundamental = 0.0;
  std::optional<AnomalyKind> anomaly;
};
SynthClipInfo synth_clip_info(const SynthSpec& spec, const std::string& clip_id);

struct RoleAssignment {
  std::string target_type;
  std::vector<std::string> normal_ids;            // y = 1
  std::vector<std::string> pseudo_anomalous_ids;  // y = 0, other machine types
  std::vector<std::string> real_anomalous_ids;    // y = 0, anomalous clips of target type
  std::vector<std::string> contaminated_ids;      // anomalous clips placed in the normal pool

  /// normal_ids followed by contaminated_ids: everything trained as y = 1.
  std::vector<std::string> normal_pool() const;
  /// Clips drawn from the anomalous pool; these never appear in evaluation.
  std::set<std::string> consumed_anomalous() const;
  /// Throws ErrorKind::validation when the invariants do not hold.
  void check(const Dataset& dataset) const;
};

/// Anomalous clips of `target_type` eligible for training draws: the train
/// split's anomalous clips when there are any, else the test split's.
std::vector<const AudioClip*> train_usable_anomalous(const Dataset& dataset,
                                                     const std::string& target_type);

RoleAssignment assign_roles(const Dataset& dataset, const std::string& target_type,
                            int n_real_anomalous, int n_contaminated, std::uint64_t seed);

std::vector<std::string> machine_types(const Dataset& dataset);

/// Writes one JSON record per clip:
/// {clip_id, machine_type, machine_id, condition, split, role, path}.
/// Roles are relative to the clip's own machine type.
void write_manifest(const std::filesystem::path& path, const Dataset& dataset,
                    const std::map<std::string, RoleAssignment>& roles_by_type);

struct ManifestRecord {
  std::string clip_id;
  std::string machine_type;
  int machine_id = 0;
  std::string condition;
  std::string split;
  std::string role;
  std::string path;
};
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);

/// Writes the dataset as a DCASE2020-style directory tree of 16-bit WAVs.
void write_dcase_layout(const std::filesystem::path& root, const Dataset& dataset);

}  // namespace oeasd
