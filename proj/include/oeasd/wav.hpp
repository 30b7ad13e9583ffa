#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace oeasd {

struct WavData {
  std::vector<float> samples;  // scaled to [-1, 1)
  int sample_rate = 0;
};

/// Reads a RIFF/WAVE file holding 16-bit signed PCM, mono.
/// Anything else (other bit depths, stereo, float, extensible formats with a
/// non-PCM subtype) is rejected with ErrorKind::format. When
/// `expected_rate` is non-zero a different rate is also a format error.
WavData read_wav(const std::filesystem::path& path, int expected_rate = 0);

/// Writes 16-bit PCM mono. Samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, std::span<const float> samples,
               int sample_rate);

}  // namespace oeasd
