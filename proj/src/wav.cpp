#include "oeasd/wav.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "oeasd/error.hpp"

namespace oeasd {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace

WavData read_wav(const std::filesystem::path& path, int expected_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::file, "cannot open WAV file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::string where = " (" + path.string() + ")";
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    fail(ErrorKind::file, "not a RIFF/WAVE file" + where);
  }

  bool have_fmt = false;
  std::uint16_t format_tag = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    const std::uint32_t size = read_u32(hdr + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) {
      // Truncated final chunk: accept a short data chunk, reject anything else.
      if (std::memcmp(hdr, "data", 4) != 0) fail(ErrorKind::file, "truncated chunk" + where);
    }
    const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (avail < 16) fail(ErrorKind::file, "short fmt chunk" + where);
      format_tag = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      if (format_tag == 0xFFFE && avail >= 26) {
        format_tag = read_u16(bytes.data() + body + 24);  // sub-format GUID head
      }
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = avail;
    }
    pos = body + size + (size & 1);
  }

  if (!have_fmt || data == nullptr) fail(ErrorKind::file, "missing fmt or data chunk" + where);
  if (format_tag != 1 || bits != 16) {
    fail(ErrorKind::format, "expected 16-bit PCM, got format " + std::to_string(format_tag) +
                                " with " + std::to_string(bits) + " bits" + where);
  }
  if (channels != 1) {
    fail(ErrorKind::format, "expected mono, got " + std::to_string(channels) + " channels" + where);
  }
  if (expected_rate != 0 && static_cast<int>(rate) != expected_rate) {
    fail(ErrorKind::format, "expected " + std::to_string(expected_rate) + " Hz, got " +
                                std::to_string(rate) + " Hz" + where);
  }

  WavData out;
  out.sample_rate = static_cast<int>(rate);
  const std::size_t n = data_size / 2;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = static_cast<std::int16_t>(read_u16(data + 2 * i));
    out.samples[i] = static_cast<float>(v) / 32768.0f;
  }
  if (out.samples.empty()) fail(ErrorKind::format, "WAV has no samples" + where);
  return out;
}

void write_wav(const std::filesystem::path& path, std::span<const float> samples,
               int sample_rate) {
  std::string out;
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(sample_rate));
  put_u32(out, static_cast<std::uint32_t>(sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_bytes);
  for (float s : samples) {
    const float c = std::clamp(s, -1.0f, 1.0f);
    const long q = std::lround(static_cast<double>(c) * 32767.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::file, "cannot write WAV file: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) fail(ErrorKind::file, "write failed: " + path.string());
}

}  // namespace oeasd
