#include "oeasd/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "oeasd/binio.hpp"
#include "oeasd/error.hpp"
#include "oeasd/rng.hpp"

namespace oeasd {

namespace {

constexpr char kMagic[] = "OEASDEXT";
constexpr std::uint32_t kVersion = 1;

std::string slurp(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::file, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const ExtractorCheckpoint& c) {
  using nlohmann::json;
  const ExtractorConfig& ec = c.model.config();
  json stages = json::array();
  for (const ConvStage& s : ec.conv_stack) stages.push_back({s.channels, s.kernel, s.stride});
  json blocks = json::array();
  for (const auto& b : c.model.layout()) blocks.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
  const json header = {
      {"machine_type", c.machine_type},
      {"class_ids", c.class_ids},
      {"norm", {{"mean", c.norm.mean}, {"std", c.norm.std}, {"constant_signal", c.norm.constant_signal}}},
      {"dsp",
       {{"chunk_seconds", c.dsp.chunk_seconds},
        {"n_mels", c.dsp.n_mels},
        {"window_ms", c.dsp.window_ms},
        {"hop_ms", c.dsp.hop_ms},
        {"fmin", c.dsp.fmin},
        {"fmax", c.dsp.fmax},
        {"log_floor", c.dsp.log_floor}}},
      {"extractor",
       {{"embedding_dim", ec.embedding_dim},
        {"conv_stack", stages},
        {"hidden_dim", ec.hidden_dim},
        {"output_init_gain", ec.output_init_gain},
        {"std_pooling", ec.std_pooling}}},
      {"input", {{"frames", c.model.input_shape().frames}, {"mels", c.model.input_shape().mels}}},
      {"n_classes", c.model.n_classes()},
      {"blocks", blocks},
  };
  const std::string text = header.dump();
  std::string out(kMagic, 8);
  binio::put_uint<std::uint32_t>(out, kVersion);
  binio::put_uint<std::uint64_t>(out, text.size());
  out += text;
  binio::put_uint<std::uint64_t>(out, c.model.params().size());
  for (double p : c.model.params()) binio::put_f64(out, p);

  // Write to a sibling then rename so a crashed run never leaves half a file.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) fail(ErrorKind::file, "cannot write " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) fail(ErrorKind::file, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ExtractorCheckpoint read_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = slurp(path);
  binio::Reader r(bytes, path.string());
  if (r.take(8) != std::string_view(kMagic, 8)) fail(ErrorKind::artifact, "not an extractor checkpoint: " + path.string());
  const auto version = r.uint<std::uint32_t>();
  if (version != kVersion) fail(ErrorKind::artifact, "unsupported checkpoint version " + std::to_string(version));
  const auto len = r.uint<std::uint64_t>();
  ExtractorCheckpoint c;
  try {
    const auto h = nlohmann::json::parse(r.take(len));
    c.machine_type = h.at("machine_type");
    c.class_ids = h.at("class_ids").get<std::vector<int>>();
    c.norm.mean = h.at("norm").at("mean");
    c.norm.std = h.at("norm").at("std");
    c.norm.constant_signal = h.at("norm").at("constant_signal");
    const auto& d = h.at("dsp");
    c.dsp.chunk_seconds = d.at("chunk_seconds");
    c.dsp.n_mels = d.at("n_mels");
    c.dsp.window_ms = d.at("window_ms");
    c.dsp.hop_ms = d.at("hop_ms");
    c.dsp.fmin = d.at("fmin");
    c.dsp.fmax = d.at("fmax");
    c.dsp.log_floor = d.at("log_floor");
    const auto& e = h.at("extractor");
    ExtractorConfig ec;
    ec.embedding_dim = e.at("embedding_dim");
    ec.hidden_dim = e.at("hidden_dim");
    ec.output_init_gain = e.at("output_init_gain");
    ec.std_pooling = e.at("std_pooling");
    ec.conv_stack.clear();
    for (const auto& s : e.at("conv_stack")) ec.conv_stack.push_back({s.at(0), s.at(1), s.at(2)});
    const InputShape shape{h.at("input").at("frames"), h.at("input").at("mels")};
    c.model = Extractor(ec, shape, h.at("n_classes"));
    const auto& blocks = h.at("blocks");
    const auto& layout = c.model.layout();
    if (blocks.size() != layout.size()) fail(ErrorKind::artifact, "checkpoint block list does not match the network");
    for (std::size_t i = 0; i < layout.size(); ++i) {
      if (blocks[i].at("name") != layout[i].name || blocks[i].at("rows") != layout[i].rows ||
          blocks[i].at("cols") != layout[i].cols) {
        fail(ErrorKind::artifact, "checkpoint block " + layout[i].name + " has an unexpected shape");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::artifact, "bad checkpoint header in " + path.string() + ": " + e.what());
  }
  const auto n = r.uint<std::uint64_t>();
  if (n != c.model.params().size()) {
    fail(ErrorKind::artifact, "checkpoint holds " + std::to_string(n) + " parameters, network needs " +
                                  std::to_string(c.model.params().size()));
  }
  for (double& p : c.model.params()) p = r.f64();
  if (!r.done()) fail(ErrorKind::artifact, "trailing bytes in checkpoint " + path.string());
  return c;
}

std::string file_hash(const std::filesystem::path& path) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(slurp(path))));
  return buf;
}

}  // namespace oeasd
