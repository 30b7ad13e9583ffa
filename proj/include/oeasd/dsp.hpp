#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "oeasd/dataset.hpp"
#include "oeasd/rng.hpp"

namespace oeasd {

struct DspConfig {
  double chunk_seconds = 2.0;
  int n_mels = 224;
  double window_ms = 128.0;
  double hop_ms = 16.0;
  double fmin = 50.0;
  double fmax = 7800.0;
  double log_floor = 1e-10;  // added to mel power before the log

  int window_samples(int sample_rate) const;
  int hop_samples(int sample_rate) const;
  std::size_t chunk_samples(int sample_rate) const;
  /// floor((chunk - window) / hop) + 1
  int n_frames(int sample_rate) const;
  void validate(int sample_rate) const;
};

struct NormStats {
  double mean = 0.0;
  double std = 1.0;
  bool constant_signal = false;  // std fell below 1e-12 and was replaced by 1
};

/// Mean and population standard deviation over every sample of every clip.
NormStats fit_norm_stats(std::span<const AudioClip* const> clips);
NormStats fit_norm_stats(const std::vector<AudioClip>& clips);

AudioClip apply_norm(const AudioClip& clip, const NormStats& stats);
void normalize_into(std::span<const float> in, const NormStats& stats, std::span<float> out);

struct CropWindow {
  std::size_t offset = 0;  // samples
  std::size_t length = 0;
};

/// Uniform start offset in [0, len - chunk]. Clips shorter than the chunk are
/// rejected rather than padded.
CropWindow random_crop(const AudioClip& clip, double chunk_seconds, Rng& rng);

/// Half-overlapping chunk layout for GMM training and inference.
/// count = ceil(2 * len / chunk); offsets step by chunk/2 and any offset past
/// len - chunk is clamped there, so the last offsets may repeat.
struct ChunkPlan {
  std::size_t count = 0;
  std::size_t length = 0;
  std::vector<std::size_t> offsets;
};

ChunkPlan overlap_chunks(std::size_t clip_samples, std::size_t chunk_samples);
ChunkPlan overlap_chunks(const AudioClip& clip, double chunk_seconds);

/// Row-major [n_frames x n_mels] log-mel energies.
struct MelChunk {
  std::vector<float> values;
  int n_frames = 0;
  int n_mels = 0;
  std::string clip_id;
  int chunk_index = 0;
  double chunk_offset_seconds = 0.0;

  float at(int frame, int mel) const {
    return values[static_cast<std::size_t>(frame) * n_mels + mel];
  }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Hann-windowed magnitude-squared STFT, triangular HTK mel filterbank spanning
/// [fmin, fmax], natural log of (energy + log_floor). No centering or padding:
/// frames start at multiples of the hop inside the window.
///
/// Thread-safe once constructed.
class LogMel {
 public:
  LogMel(const DspConfig& config, int sample_rate);
  ~LogMel();
  LogMel(const LogMel&) = delete;
  LogMel& operator=(const LogMel&) = delete;

  int n_frames() const { return n_frames_; }
  int n_mels() const { return config_.n_mels; }
  int fft_size() const { return window_; }
  const DspConfig& config() const { return config_; }
  std::size_t chunk_samples() const { return chunk_; }

  /// `samples` must hold exactly chunk_samples() values.
  void compute_into(std::span<const float> samples, std::span<float> out) const;
  MelChunk compute(std::span<const float> samples) const;

  /// Sparse triangular weights of band m: first FFT bin and consecutive weights.
  struct Band {
    int first_bin = 0;
    std::vector<float> weights;
  };
  const std::vector<Band>& bands() const { return bands_; }

 private:
  DspConfig config_;
  int sample_rate_;
  int window_;
  int hop_;
  int n_frames_;
  std::size_t chunk_;
  std::vector<float> hann_;
  std::vector<Band> bands_;
  void* plan_ = nullptr;  // fftwf_plan
};

/// Free-function form of LogMel::compute for one-off use.
MelChunk logmel(std::span<const float> samples, const DspConfig& config, int sample_rate);

/// Mel cache: `<base>.bin` holds the chunks' values back to back as
/// little-endian float32; `<base>.json` lists {clip_id, chunk_index, n_frames,
/// n_mels} in the same order.
void write_mel_cache(const std::filesystem::path& base, std::span<const MelChunk> chunks);
std::vector<MelChunk> read_mel_cache(const std::filesystem::path& base);

}  // namespace oeasd
