#include "oeasd/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "oeasd/error.hpp"

namespace oeasd {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    fail(ErrorKind::config, "bad value for " + key + ": '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(ErrorKind::config, "bad boolean for " + key + ": '" + v + "'");
}

template <typename T>
std::vector<T> parse_number_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  for (const auto& item : split_list(v)) out.push_back(parse_number<T>(key, item));
  return out;
}

// "8x4x4,16x3x2" -> channels x kernel x stride per stage.
std::vector<ConvStage> parse_stack(const std::string& key, const std::string& v) {
  std::vector<ConvStage> out;
  for (const auto& item : split_list(v)) {
    std::vector<int> parts;
    std::stringstream ss(item);
    std::string p;
    while (std::getline(ss, p, 'x')) parts.push_back(parse_number<int>(key, trim(p)));
    if (parts.size() != 3) fail(ErrorKind::config, key + " stages are CHANNELSxKERNELxSTRIDE, got '" + item + "'");
    out.push_back({parts[0], parts[1], parts[2]});
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt(xs[i]);
    } else if constexpr (std::is_arithmetic_v<T>) {
      out += std::to_string(xs[i]);
    } else {
      out += xs[i];
    }
  }
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto num_d = [&t](const std::string& k, auto member) {
      t[k] = [member](ExperimentConfig& c, const std::string& key, const std::string& v) {
        member(c) = parse_number<double>(key, v);
      };
    };
    auto num_i = [&t](const std::string& k, auto member) {
      t[k] = [member](ExperimentConfig& c, const std::string& key, const std::string& v) {
        member(c) = parse_number<int>(key, v);
      };
    };
    auto flag = [&t](const std::string& k, auto member) {
      t[k] = [member](ExperimentConfig& c, const std::string& key, const std::string& v) {
        member(c) = parse_bool(key, v);
      };
    };

    t["dataset.source"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      if (v == "synth") c.source = DatasetSource::synth;
      else if (v == "dcase") c.source = DatasetSource::dcase;
      else fail(ErrorKind::config, key + " must be synth or dcase");
    };
    t["dataset.path"] = [](ExperimentConfig& c, const std::string&, const std::string& v) { c.dataset_path = v; };
    t["dataset.target_types"] = [](ExperimentConfig& c, const std::string&, const std::string& v) {
      c.target_types = split_list(v);
    };

    num_i("synth.machine_types", [](ExperimentConfig& c) -> int& { return c.synth.machine_types; });
    num_i("synth.ids_per_type", [](ExperimentConfig& c) -> int& { return c.synth.ids_per_type; });
    num_i("synth.clips_per_id", [](ExperimentConfig& c) -> int& { return c.synth.clips_per_id; });
    num_i("synth.test_clips_per_id", [](ExperimentConfig& c) -> int& { return c.synth.test_clips_per_id; });
    num_i("synth.train_anomalous_per_id", [](ExperimentConfig& c) -> int& { return c.synth.train_anomalous_per_id; });
    num_d("synth.clip_seconds", [](ExperimentConfig& c) -> double& { return c.synth.clip_seconds; });
    num_i("synth.sample_rate", [](ExperimentConfig& c) -> int& { return c.synth.sample_rate; });
    num_d("synth.noise_level", [](ExperimentConfig& c) -> double& { return c.synth.noise_level; });
    t["synth.base_frequencies"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.synth.base_frequencies = parse_number_list<double>(key, v);
    };
    t["synth.anomaly_kinds"] = [](ExperimentConfig& c, const std::string&, const std::string& v) {
      c.synth.anomaly_kinds.clear();
      for (const auto& k : split_list(v)) c.synth.anomaly_kinds.push_back(parse_anomaly_kind(k));
    };
    t["synth.seed"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.synth.seed = parse_number<std::uint64_t>(key, v);
    };

    num_d("dsp.chunk_seconds", [](ExperimentConfig& c) -> double& { return c.dsp.chunk_seconds; });
    num_i("dsp.n_mels", [](ExperimentConfig& c) -> int& { return c.dsp.n_mels; });
    num_d("dsp.window_ms", [](ExperimentConfig& c) -> double& { return c.dsp.window_ms; });
    num_d("dsp.hop_ms", [](ExperimentConfig& c) -> double& { return c.dsp.hop_ms; });
    num_d("dsp.fmin", [](ExperimentConfig& c) -> double& { return c.dsp.fmin; });
    num_d("dsp.fmax", [](ExperimentConfig& c) -> double& { return c.dsp.fmax; });
    num_d("dsp.log_floor", [](ExperimentConfig& c) -> double& { return c.dsp.log_floor; });

    num_i("extractor.embedding_dim", [](ExperimentConfig& c) -> int& { return c.extractor.embedding_dim; });
    num_i("extractor.hidden_dim", [](ExperimentConfig& c) -> int& { return c.extractor.hidden_dim; });
    num_d("extractor.output_init_gain", [](ExperimentConfig& c) -> double& { return c.extractor.output_init_gain; });
    flag("extractor.std_pooling", [](ExperimentConfig& c) -> bool& { return c.extractor.std_pooling; });
    t["extractor.conv_stack"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.extractor.conv_stack = parse_stack(key, v);
    };

    num_d("loss.alpha", [](ExperimentConfig& c) -> double& { return c.loss.alpha; });
    num_d("loss.eps", [](ExperimentConfig& c) -> double& { return c.loss.eps; });
    num_d("mixup.beta", [](ExperimentConfig& c) -> double& { return c.mixup.beta; });

    num_i("train.epochs", [](ExperimentConfig& c) -> int& { return c.train.epochs; });
    num_i("train.batch_size", [](ExperimentConfig& c) -> int& { return c.train.batch_size; });
    num_d("train.peak_lr", [](ExperimentConfig& c) -> double& { return c.train.peak_lr; });
    num_d("train.weight_decay", [](ExperimentConfig& c) -> double& { return c.train.weight_decay; });
    num_d("train.warmup_fraction", [](ExperimentConfig& c) -> double& { return c.train.warmup_fraction; });
    num_d("train.initial_lr_fraction", [](ExperimentConfig& c) -> double& { return c.train.initial_lr_fraction; });
    num_d("train.final_lr_fraction", [](ExperimentConfig& c) -> double& { return c.train.final_lr_fraction; });
    num_i("train.n_real_anomalous", [](ExperimentConfig& c) -> int& { return c.n_real_anomalous; });
    num_i("train.n_contaminated", [](ExperimentConfig& c) -> int& { return c.n_contaminated; });

    num_i("gmm.components", [](ExperimentConfig& c) -> int& { return c.gmm_components; });
    num_i("gmm.max_iters", [](ExperimentConfig& c) -> int& { return c.gmm.max_iters; });
    num_d("gmm.rel_tol", [](ExperimentConfig& c) -> double& { return c.gmm.rel_tol; });
    num_d("gmm.reg_scale", [](ExperimentConfig& c) -> double& { return c.gmm.reg_scale; });
    num_i("gmm.n_init", [](ExperimentConfig& c) -> int& { return c.gmm.n_init; });
    num_d("eval.pauc_p", [](ExperimentConfig& c) -> double& { return c.pauc_p; });

    flag("ablation.use_type_loss", [](ExperimentConfig& c) -> bool& { return c.ablation.use_type_loss; });
    flag("ablation.use_mixup", [](ExperimentConfig& c) -> bool& { return c.ablation.use_mixup; });
    flag("ablation.use_machine_ids", [](ExperimentConfig& c) -> bool& { return c.ablation.use_machine_ids; });
    t["ablation.id_loss_kind"] = [](ExperimentConfig& c, const std::string&, const std::string& v) {
      c.ablation.id_loss_kind = parse_id_loss_kind(v);
    };

    t["sweep.anomalous_counts"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.anomalous_counts = parse_number_list<int>(key, v);
    };
    t["sweep.contamination_counts"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.contamination_counts = parse_number_list<int>(key, v);
    };

    t["run.seeds"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.seeds = parse_number_list<std::uint64_t>(key, v);
    };
    t["run.output"] = [](ExperimentConfig& c, const std::string&, const std::string& v) { c.output = v; };
    num_i("run.jobs", [](ExperimentConfig& c) -> int& { return c.jobs; });
    return t;
  }();
  return table;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (source == DatasetSource::dcase && dataset_path.empty()) {
    fail(ErrorKind::config, "dataset.path is required for dcase data");
  }
  if (source == DatasetSource::synth) synth.validate();
  dsp.validate(source == DatasetSource::synth ? synth.sample_rate : 16000);
  extractor.validate();
  loss.validate();
  if (mixup.enabled) mixup.validate();
  train.validate();
  gmm.validate();
  if (gmm_components < 1) fail(ErrorKind::config, "gmm.components must be positive");
  if (!(pauc_p > 0.0 && pauc_p <= 1.0)) fail(ErrorKind::config, "eval.pauc_p must lie in (0, 1]");
  if (n_real_anomalous < 0 || n_contaminated < 0) fail(ErrorKind::config, "anomalous counts must be non-negative");
  for (int n : anomalous_counts)
    if (n < 0) fail(ErrorKind::config, "sweep.anomalous_counts must be non-negative");
  for (int n : contamination_counts)
    if (n < 0) fail(ErrorKind::config, "sweep.contamination_counts must be non-negative");
  if (seeds.empty()) fail(ErrorKind::config, "run.seeds needs at least one seed");
  if (jobs < 1) fail(ErrorKind::config, "run.jobs must be positive");
}

TrainSetup ExperimentConfig::train_setup(std::uint64_t seed) const {
  TrainSetup s;
  s.extractor = extractor;
  s.loss = loss;
  s.loss.type_loss_enabled = ablation.use_type_loss;
  s.loss.id_loss = ablation.id_loss_kind;
  if (!ablation.use_machine_ids) s.loss.alpha = 0.0;
  s.mixup = mixup;
  s.mixup.enabled = ablation.use_mixup;
  s.train = train;
  s.use_machine_ids = ablation.use_machine_ids;
  s.seed = seed;
  s.jobs = jobs;
  return s;
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  ExperimentConfig c;
  std::stringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') fail(ErrorKind::parse, where + ": unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::parse, where + ": expected key = value");
    std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (!section.empty()) key = section + "." + key;
    const auto it = setters().find(key);
    if (it == setters().end()) fail(ErrorKind::config, where + ": unknown key " + key);
    try {
      it->second(c, key, value);
    } catch (const Error& e) {
      fail(e.kind(), where + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::file, "cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string to_text(const ExperimentConfig& c) {
  std::string stack;
  for (const auto& s : c.extractor.conv_stack) {
    if (!stack.empty()) stack += ",";
    stack += std::to_string(s.channels) + "x" + std::to_string(s.kernel) + "x" + std::to_string(s.stride);
  }
  std::vector<std::string> kinds;
  for (AnomalyKind k : c.synth.anomaly_kinds) kinds.emplace_back(to_string(k));
  auto b = [](bool v) { return v ? "true" : "false"; };

  std::ostringstream o;
  o << "[dataset]\nsource = " << (c.source == DatasetSource::synth ? "synth" : "dcase") << "\n";
  if (!c.dataset_path.empty()) o << "path = " << c.dataset_path.string() << "\n";
  if (!c.target_types.empty()) o << "target_types = " << join(c.target_types) << "\n";
  o << "\n[synth]\nmachine_types = " << c.synth.machine_types << "\nids_per_type = " << c.synth.ids_per_type
    << "\nclips_per_id = " << c.synth.clips_per_id << "\ntest_clips_per_id = " << c.synth.test_clips_per_id
    << "\ntrain_anomalous_per_id = " << c.synth.train_anomalous_per_id
    << "\nclip_seconds = " << fmt(c.synth.clip_seconds) << "\nsample_rate = " << c.synth.sample_rate
    << "\nnoise_level = " << fmt(c.synth.noise_level) << "\n";
  if (!c.synth.base_frequencies.empty()) o << "base_frequencies = " << join(c.synth.base_frequencies) << "\n";
  o << "anomaly_kinds = " << join(kinds) << "\nseed = " << c.synth.seed << "\n";
  o << "\n[dsp]\nchunk_seconds = " << fmt(c.dsp.chunk_seconds) << "\nn_mels = " << c.dsp.n_mels
    << "\nwindow_ms = " << fmt(c.dsp.window_ms) << "\nhop_ms = " << fmt(c.dsp.hop_ms) << "\nfmin = " << fmt(c.dsp.fmin)
    << "\nfmax = " << fmt(c.dsp.fmax) << "\nlog_floor = " << fmt(c.dsp.log_floor) << "\n";
  o << "\n[extractor]\nembedding_dim = " << c.extractor.embedding_dim << "\nconv_stack = " << stack
    << "\nhidden_dim = " << c.extractor.hidden_dim << "\noutput_init_gain = " << fmt(c.extractor.output_init_gain)
    << "\nstd_pooling = " << b(c.extractor.std_pooling) << "\n";
  o << "\n[loss]\nalpha = " << fmt(c.loss.alpha) << "\neps = " << fmt(c.loss.eps) << "\n";
  o << "\n[mixup]\nbeta = " << fmt(c.mixup.beta) << "\n";
  o << "\n[train]\nepochs = " << c.train.epochs << "\nbatch_size = " << c.train.batch_size
    << "\npeak_lr = " << fmt(c.train.peak_lr) << "\nweight_decay = " << fmt(c.train.weight_decay)
    << "\nwarmup_fraction = " << fmt(c.train.warmup_fraction)
    << "\ninitial_lr_fraction = " << fmt(c.train.initial_lr_fraction)
    << "\nfinal_lr_fraction = " << fmt(c.train.final_lr_fraction) << "\nn_real_anomalous = " << c.n_real_anomalous
    << "\nn_contaminated = " << c.n_contaminated << "\n";
  o << "\n[gmm]\ncomponents = " << c.gmm_components << "\nmax_iters = " << c.gmm.max_iters
    << "\nrel_tol = " << fmt(c.gmm.rel_tol) << "\nreg_scale = " << fmt(c.gmm.reg_scale) << "\nn_init = " << c.gmm.n_init
    << "\n";
  o << "\n[eval]\npauc_p = " << fmt(c.pauc_p) << "\n";
  o << "\n[ablation]\nuse_type_loss = " << b(c.ablation.use_type_loss) << "\nuse_mixup = " << b(c.ablation.use_mixup)
    << "\nuse_machine_ids = " << b(c.ablation.use_machine_ids) << "\nid_loss_kind = " << to_string(c.ablation.id_loss_kind)
    << "\n";
  o << "\n[sweep]\nanomalous_counts = " << join(c.anomalous_counts)
    << "\ncontamination_counts = " << join(c.contamination_counts) << "\n";
  o << "\n[run]\nseeds = " << join(c.seeds) << "\noutput = " << c.output.string() << "\njobs = " << c.jobs << "\n";
  return o.str();
}

}  // namespace oeasd
