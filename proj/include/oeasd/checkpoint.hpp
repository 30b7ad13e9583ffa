#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "oeasd/dsp.hpp"
#include "oeasd/network.hpp"

namespace oeasd {

/// Extractor checkpoint: magic "OEASDEXT", u32 version, u64 JSON length, JSON
/// header (machine type, class ids, normalization, DSP and network configs,
/// input shape, parameter block layout), u64 parameter count, then the flat
/// parameter vector as little-endian float64 in layout order.
struct ExtractorCheckpoint {
  std::string machine_type;
  std::vector<int> class_ids;
  NormStats norm;
  DspConfig dsp;
  Extractor model;
};

void write_checkpoint(const std::filesystem::path& path, const ExtractorCheckpoint& ckpt);
ExtractorCheckpoint read_checkpoint(const std::filesystem::path& path);

/// Hex FNV-1a digest of a file's bytes.
std::string file_hash(const std::filesystem::path& path);

}  // namespace oeasd
