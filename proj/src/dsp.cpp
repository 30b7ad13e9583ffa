#include "oeasd/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <mutex>
#include <numbers>

#include <json.hpp>

#include "oeasd/binio.hpp"
#include "oeasd/error.hpp"

namespace oeasd {

namespace {

// The FFTW planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftwf_free(p); }
};

}  // namespace

int DspConfig::window_samples(int sample_rate) const {
  return static_cast<int>(std::lround(window_ms * sample_rate / 1000.0));
}

int DspConfig::hop_samples(int sample_rate) const {
  return static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0));
}

std::size_t DspConfig::chunk_samples(int sample_rate) const {
  return static_cast<std::size_t>(std::llround(chunk_seconds * sample_rate));
}

int DspConfig::n_frames(int sample_rate) const {
  const auto chunk = static_cast<long long>(chunk_samples(sample_rate));
  const int window = window_samples(sample_rate);
  if (chunk < window) return 0;
  return static_cast<int>((chunk - window) / hop_samples(sample_rate)) + 1;
}

void DspConfig::validate(int sample_rate) const {
  if (sample_rate <= 0) fail(ErrorKind::config, "sample rate must be positive");
  if (!(fmin > 0.0 && fmin < fmax && fmax <= sample_rate / 2.0)) {
    fail(ErrorKind::config, "need 0 < fmin < fmax <= sample_rate / 2");
  }
  if (n_mels < 1) fail(ErrorKind::config, "n_mels must be positive");
  if (!(hop_ms > 0.0 && hop_ms <= window_ms)) fail(ErrorKind::config, "need 0 < hop_ms <= window_ms");
  if (window_samples(sample_rate) < 2 || hop_samples(sample_rate) < 1) {
    fail(ErrorKind::config, "window and hop must cover at least one sample");
  }
  if (!(log_floor > 0.0)) fail(ErrorKind::config, "log_floor must be positive");
  if (n_frames(sample_rate) < 1) fail(ErrorKind::config, "chunk is shorter than one analysis window");
}

// ---------------------------------------------------------------------------
// Normalization

NormStats fit_norm_stats(std::span<const AudioClip* const> clips) {
  if (clips.empty()) fail(ErrorKind::validation, "normalization needs at least one clip");
  long double sum = 0.0L;
  std::size_t count = 0;
  for (const AudioClip* c : clips) {
    for (float v : c->samples) sum += v;
    count += c->samples.size();
  }
  if (count == 0) fail(ErrorKind::validation, "normalization clips hold no samples");
  const double mean = static_cast<double>(sum / count);
  long double ss = 0.0L;
  for (const AudioClip* c : clips) {
    for (float v : c->samples) {
      const double d = v - mean;
      ss += d * d;
    }
  }
  NormStats out;
  out.mean = mean;
  out.std = std::sqrt(static_cast<double>(ss / count));
  if (out.std < 1e-12) {
    out.std = 1.0;
    out.constant_signal = true;
  }
  return out;
}

NormStats fit_norm_stats(const std::vector<AudioClip>& clips) {
  std::vector<const AudioClip*> ptrs;
  ptrs.reserve(clips.size());
  for (const AudioClip& c : clips) ptrs.push_back(&c);
  return fit_norm_stats(ptrs);
}

void normalize_into(std::span<const float> in, const NormStats& stats, std::span<float> out) {
  if (in.size() != out.size()) fail(ErrorKind::shape, "normalize_into: size mismatch");
  const double inv = 1.0 / stats.std;
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = static_cast<float>((in[i] - stats.mean) * inv);
  }
}

AudioClip apply_norm(const AudioClip& clip, const NormStats& stats) {
  AudioClip out = clip;
  normalize_into(clip.samples, stats, out.samples);
  return out;
}

// ---------------------------------------------------------------------------
// Chunking

CropWindow random_crop(const AudioClip& clip, double chunk_seconds, Rng& rng) {
  const auto chunk = static_cast<std::size_t>(std::llround(chunk_seconds * clip.sample_rate));
  if (chunk == 0) fail(ErrorKind::validation, "chunk length must be positive");
  if (clip.samples.size() < chunk) {
    fail(ErrorKind::validation, "clip " + clip.clip_id + " is shorter than the " +
                                    std::to_string(chunk_seconds) + " s chunk");
  }
  return {rng.index(clip.samples.size() - chunk + 1), chunk};
}

ChunkPlan overlap_chunks(std::size_t clip_samples, std::size_t chunk_samples) {
  if (chunk_samples == 0 || clip_samples < chunk_samples) {
    fail(ErrorKind::validation, "overlap_chunks needs 0 < chunk <= clip length");
  }
  ChunkPlan plan;
  plan.length = chunk_samples;
  plan.count = (2 * clip_samples + chunk_samples - 1) / chunk_samples;
  const std::size_t stride = std::max<std::size_t>(1, chunk_samples / 2);
  const std::size_t last = clip_samples - chunk_samples;
  plan.offsets.reserve(plan.count);
  for (std::size_t m = 0; m < plan.count; ++m) plan.offsets.push_back(std::min(m * stride, last));
  return plan;
}

ChunkPlan overlap_chunks(const AudioClip& clip, double chunk_seconds) {
  return overlap_chunks(clip.samples.size(),
                        static_cast<std::size_t>(std::llround(chunk_seconds * clip.sample_rate)));
}

// ---------------------------------------------------------------------------
// Log-mel

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

LogMel::LogMel(const DspConfig& config, int sample_rate)
    : config_(config), sample_rate_(sample_rate) {
  config_.validate(sample_rate);
  window_ = config_.window_samples(sample_rate);
  hop_ = config_.hop_samples(sample_rate);
  n_frames_ = config_.n_frames(sample_rate);
  chunk_ = config_.chunk_samples(sample_rate);

  hann_.resize(window_);
  for (int n = 0; n < window_; ++n) {
    hann_[n] = static_cast<float>(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / window_));
  }

  const int n_bins = window_ / 2 + 1;
  const double lo = hz_to_mel(config_.fmin);
  const double hi = hz_to_mel(config_.fmax);
  std::vector<double> edges(config_.n_mels + 2);
  for (int i = 0; i < config_.n_mels + 2; ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * i / (config_.n_mels + 1));
  }
  bands_.resize(config_.n_mels);
  for (int m = 0; m < config_.n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    Band& band = bands_[m];
    band.first_bin = -1;
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / window_;
      double w = 0.0;
      if (f > left && f <= center) {
        w = (f - left) / (center - left);
      } else if (f > center && f < right) {
        w = (right - f) / (right - center);
      }
      if (w > 0.0) {
        if (band.first_bin < 0) band.first_bin = k;
        // Bins inside the support are contiguous; fill any gap defensively.
        band.weights.resize(k - band.first_bin + 1, 0.0f);
        band.weights.back() = static_cast<float>(w);
      }
    }
    if (band.first_bin < 0) band.first_bin = 0;
  }

  std::unique_ptr<float, FftwFree> in(static_cast<float*>(fftwf_malloc(sizeof(float) * window_)));
  std::unique_ptr<fftwf_complex, FftwFree> out(
      static_cast<fftwf_complex*>(fftwf_malloc(sizeof(fftwf_complex) * n_bins)));
  std::lock_guard lock(planner_mutex());
  // FFTW_ESTIMATE keeps the algorithm choice, and so the rounding, identical
  // from run to run.
  plan_ = fftwf_plan_dft_r2c_1d(window_, in.get(), out.get(), FFTW_ESTIMATE);
  if (plan_ == nullptr) fail(ErrorKind::numeric, "FFTW planning failed");
}

LogMel::~LogMel() {
  if (plan_ != nullptr) {
    std::lock_guard lock(planner_mutex());
    fftwf_destroy_plan(static_cast<fftwf_plan>(plan_));
  }
}

void LogMel::compute_into(std::span<const float> samples, std::span<float> out) const {
  if (samples.size() != chunk_) {
    fail(ErrorKind::shape, "log-mel input has " + std::to_string(samples.size()) +
                               " samples, expected " + std::to_string(chunk_));
  }
  if (out.size() != static_cast<std::size_t>(n_frames_) * config_.n_mels) {
    fail(ErrorKind::shape, "log-mel output buffer has the wrong size");
  }
  for (float v : samples) {
    if (!std::isfinite(v)) fail(ErrorKind::data, "non-finite sample in log-mel input");
  }
  const int n_bins = window_ / 2 + 1;
  std::unique_ptr<float, FftwFree> frame(static_cast<float*>(fftwf_malloc(sizeof(float) * window_)));
  std::unique_ptr<fftwf_complex, FftwFree> spec(
      static_cast<fftwf_complex*>(fftwf_malloc(sizeof(fftwf_complex) * n_bins)));
  std::vector<float> power(n_bins);
  const auto plan = static_cast<fftwf_plan>(plan_);

  for (int t = 0; t < n_frames_; ++t) {
    const float* src = samples.data() + static_cast<std::size_t>(t) * hop_;
    for (int n = 0; n < window_; ++n) frame.get()[n] = src[n] * hann_[n];
    fftwf_execute_dft_r2c(plan, frame.get(), spec.get());
    for (int k = 0; k < n_bins; ++k) {
      const float re = spec.get()[k][0], im = spec.get()[k][1];
      power[k] = re * re + im * im;
    }
    float* row = out.data() + static_cast<std::size_t>(t) * config_.n_mels;
    for (int m = 0; m < config_.n_mels; ++m) {
      const Band& band = bands_[m];
      double e = 0.0;
      for (std::size_t j = 0; j < band.weights.size(); ++j) {
        e += static_cast<double>(band.weights[j]) * power[band.first_bin + j];
      }
      row[m] = static_cast<float>(std::log(e + config_.log_floor));
    }
  }
}

MelChunk LogMel::compute(std::span<const float> samples) const {
  MelChunk chunk;
  chunk.n_frames = n_frames_;
  chunk.n_mels = config_.n_mels;
  chunk.values.resize(static_cast<std::size_t>(n_frames_) * config_.n_mels);
  compute_into(samples, chunk.values);
  return chunk;
}

MelChunk logmel(std::span<const float> samples, const DspConfig& config, int sample_rate) {
  return LogMel(config, sample_rate).compute(samples);
}

// ---------------------------------------------------------------------------
// Mel cache

void write_mel_cache(const std::filesystem::path& base, std::span<const MelChunk> chunks) {
  std::string bin;
  nlohmann::json entries = nlohmann::json::array();
  for (const MelChunk& c : chunks) {
    if (c.values.size() != static_cast<std::size_t>(c.n_frames) * c.n_mels) {
      fail(ErrorKind::shape, "mel chunk " + c.clip_id + " has inconsistent dimensions");
    }
    for (float v : c.values) binio::put_f32(bin, v);
    entries.push_back({{"clip_id", c.clip_id},
                       {"chunk_index", c.chunk_index},
                       {"n_frames", c.n_frames},
                       {"n_mels", c.n_mels}});
  }
  const nlohmann::json sidecar = {{"version", 1}, {"dtype", "float32le"}, {"chunks", entries}};
  auto bin_path = base;
  bin_path += ".bin";
  auto json_path = base;
  json_path += ".json";
  std::ofstream b(bin_path, std::ios::binary);
  std::ofstream j(json_path);
  if (!b || !j) fail(ErrorKind::file, "cannot write mel cache at " + base.string());
  b.write(bin.data(), static_cast<std::streamsize>(bin.size()));
  j << sidecar.dump(1) << '\n';
}

std::vector<MelChunk> read_mel_cache(const std::filesystem::path& base) {
  auto bin_path = base;
  bin_path += ".bin";
  auto json_path = base;
  json_path += ".json";
  std::ifstream b(bin_path, std::ios::binary);
  std::ifstream j(json_path);
  if (!b || !j) fail(ErrorKind::file, "cannot read mel cache at " + base.string());
  const std::string bytes((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  nlohmann::json sidecar;
  try {
    sidecar = nlohmann::json::parse(j);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, json_path.string() + ": " + e.what());
  }
  binio::Reader reader(bytes, bin_path.string());
  std::vector<MelChunk> out;
  for (const auto& e : sidecar.at("chunks")) {
    MelChunk c;
    c.clip_id = e.at("clip_id");
    c.chunk_index = e.at("chunk_index");
    c.n_frames = e.at("n_frames");
    c.n_mels = e.at("n_mels");
    c.values.resize(static_cast<std::size_t>(c.n_frames) * c.n_mels);
    for (float& v : c.values) v = reader.f32();
    out.push_back(std::move(c));
  }
  if (!reader.done()) fail(ErrorKind::artifact, "mel cache has trailing bytes: " + bin_path.string());
  return out;
}

}  // namespace oeasd
