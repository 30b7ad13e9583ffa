#include "oeasd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>

#include "oeasd/error.hpp"
#include "oeasd/parallel.hpp"
#include "oeasd/rng.hpp"

namespace oeasd {

namespace fs = std::filesystem;

namespace {

void say(const Log& log, const std::string& msg) {
  if (log) log(msg);
}

int sample_rate_of(const Dataset& dataset) {
  if (dataset.empty()) fail(ErrorKind::validation, "dataset is empty");
  return dataset.front().sample_rate;
}

std::string detector_name(int machine_id) {
  if (machine_id < 0) return "detector_all.gmm";
  char buf[32];
  std::snprintf(buf, sizeof buf, "detector_id_%02d.gmm", machine_id);
  return buf;
}

std::vector<const AudioClip*> lookup(const Dataset& dataset, const std::vector<std::string>& ids) {
  std::map<std::string, const AudioClip*> by_id;
  for (const AudioClip& c : dataset) by_id.emplace(c.clip_id, &c);
  std::vector<const AudioClip*> out;
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) fail(ErrorKind::validation, "unknown clip id: " + id);
    out.push_back(it->second);
  }
  return out;
}

}  // namespace

Dataset load_dataset(const ExperimentConfig& config) {
  if (config.source == DatasetSource::synth) return synth_generate(config.synth, config.jobs);
  if (!fs::is_directory(config.dataset_path)) {
    fail(ErrorKind::file, "dataset directory not found: " + config.dataset_path.string());
  }
  // Pseudo-anomalous data needs every type, so the type filter is not applied here.
  return load_dcase_layout(config.dataset_path, {}, config.jobs);
}

std::vector<std::string> resolve_target_types(const ExperimentConfig& config, const Dataset& dataset) {
  const std::vector<std::string> present = machine_types(dataset);
  if (config.target_types.empty()) return present;
  for (const auto& t : config.target_types) {
    if (std::find(present.begin(), present.end(), t) == present.end()) {
      fail(ErrorKind::validation, "machine type not in dataset: " + t);
    }
  }
  return config.target_types;
}

const GmmModel* TypeModel::detector_for(int machine_id) const {
  for (const DetectorFile& d : detectors) {
    if (d.machine_id == machine_id || d.machine_id < 0) return &d.model;
  }
  return nullptr;
}

Eigen::MatrixXd clip_inputs(const ExtractorCheckpoint& extractor, const LogMel& mel, const AudioClip& clip) {
  const ChunkPlan plan = overlap_chunks(clip, extractor.dsp.chunk_seconds);
  const auto dim = static_cast<Eigen::Index>(extractor.model.input_dim());
  Eigen::MatrixXd X(dim, static_cast<Eigen::Index>(plan.count));
  std::vector<float> window(plan.length);
  std::vector<float> values(static_cast<std::size_t>(dim));
  for (std::size_t m = 0; m < plan.count; ++m) {
    normalize_into(std::span(clip.samples).subspan(plan.offsets[m], plan.length), extractor.norm, window);
    mel.compute_into(window, values);
    std::copy(values.begin(), values.end(), X.col(static_cast<Eigen::Index>(m)).data());
  }
  return X;
}

Eigen::MatrixXd embed_clip(const ExtractorCheckpoint& extractor, const LogMel& mel, const AudioClip& clip) {
  return extractor.model.embed(clip_inputs(extractor, mel, clip)).transpose();
}

TypeModel train_type(const Dataset& dataset, const RoleAssignment& roles, const ExperimentConfig& config,
                     std::uint64_t seed, const Log& log) {
  roles.check(dataset);
  const int sr = sample_rate_of(dataset);
  config.dsp.validate(sr);
  const LogMel mel(config.dsp, sr);
  const std::vector<const AudioClip*> pool = lookup(dataset, roles.normal_pool());
  const NormStats norm = fit_norm_stats(pool);
  if (norm.constant_signal) say(log, "warning: " + roles.target_type + " normal pool is constant; std set to 1");

  const ChunkSource source(dataset, norm, mel);
  const TrainSetup setup = config.train_setup(seed);
  say(log, "training extractor for " + roles.target_type);
  TrainResult trained = train_extractor(source, roles, setup, [&](const EpochLoss& e) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "  %s epoch %d loss %.5f (type %.5f, id %.5f)", roles.target_type.c_str(),
                  e.epoch + 1, e.total, e.type, e.id);
    say(log, buf);
  });

  TypeModel out;
  out.extractor.machine_type = roles.target_type;
  out.extractor.class_ids = trained.class_ids;
  out.extractor.norm = norm;
  out.extractor.dsp = config.dsp;
  out.extractor.model = std::move(trained.model);
  out.history = std::move(trained.history);

  // Embed the normal pool once, then group by machine id.
  std::vector<Eigen::MatrixXd> embedded(pool.size());
  parallel_for(pool.size(), config.jobs,
               [&](std::size_t i) { embedded[i] = embed_clip(out.extractor, mel, *pool[i]); });
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    members[setup.use_machine_ids ? pool[i]->key.machine_id : -1].push_back(i);
  }
  std::vector<std::pair<int, std::vector<std::size_t>>> groups(members.begin(), members.end());
  out.detectors.resize(groups.size());
  parallel_for(groups.size(), config.jobs, [&](std::size_t g) {
    const auto& [machine_id, idx] = groups[g];
    Eigen::Index rows = 0;
    for (std::size_t i : idx) rows += embedded[i].rows();
    Eigen::MatrixXd features(rows, out.extractor.model.embedding_dim());
    Eigen::Index r = 0;
    for (std::size_t i : idx) {
      features.middleRows(r, embedded[i].rows()) = embedded[i];
      r += embedded[i].rows();
    }
    GmmFitConfig gc = config.gmm;
    gc.seed = Rng::stream(seed, "gmm/" + roles.target_type + "/" + std::to_string(machine_id)).next_u64();
    DetectorFile& d = out.detectors[g];
    d.machine_type = roles.target_type;
    d.machine_id = machine_id;
    try {
      d.model = fit_gmm(features, config.gmm_components, gc);
    } catch (const Error& e) {
      fail(e.kind(), roles.target_type + " id " + std::to_string(machine_id) + ": " + e.what());
    }
  });
  return out;
}

std::vector<ClipScore> score_type(const Dataset& dataset, const RoleAssignment& roles, const TypeModel& model,
                                  const ExperimentConfig& config) {
  (void)config;
  const std::set<std::string> consumed = roles.consumed_anomalous();
  std::vector<const AudioClip*> clips;
  for (const AudioClip& c : dataset) {
    if (c.key.machine_type == roles.target_type && c.split == Split::test && !consumed.contains(c.clip_id)) {
      clips.push_back(&c);
    }
  }
  std::vector<const AudioClip*> kept;
  for (const AudioClip* c : clips) {
    if (model.detector_for(c->key.machine_id) != nullptr) kept.push_back(c);
  }
  const LogMel mel(model.extractor.dsp, sample_rate_of(dataset));
  std::vector<ClipScore> out(kept.size());
  parallel_for(kept.size(), config.jobs, [&](std::size_t i) {
    const AudioClip& c = *kept[i];
    const GmmModel& gmm = *model.detector_for(c.key.machine_id);
    const Eigen::MatrixXd emb = embed_clip(model.extractor, mel, c);
    const Eigen::VectorXd ll = gmm.log_likelihood(emb);
    ClipScore& s = out[i];
    s.clip_id = c.clip_id;
    s.machine_type = c.key.machine_type;
    s.machine_id = c.key.machine_id;
    s.truth = c.condition;
    s.chunk_scores.resize(static_cast<std::size_t>(ll.size()));
    for (Eigen::Index m = 0; m < ll.size(); ++m) s.chunk_scores[static_cast<std::size_t>(m)] = -ll[m];
    s.score = aggregate(s.chunk_scores);
  });
  return out;
}

std::vector<MetricRow> metrics_for(const std::vector<ClipScore>& scores, double p) {
  std::map<std::pair<std::string, int>, std::vector<ClipScore>> groups;
  for (const ClipScore& s : scores) groups[{s.machine_type, s.machine_id}].push_back(s);
  std::vector<MetricRow> rows;
  for (const auto& [key, clips] : groups) rows.push_back(evaluate_id(key.first, key.second, clips, p));
  return rows;
}

RunResult run_experiment(const Dataset& dataset, const ExperimentConfig& config, std::uint64_t seed,
                         int n_real_anomalous, int n_contaminated, const Log& log) {
  RunResult r;
  for (const std::string& type : resolve_target_types(config, dataset)) {
    RoleAssignment roles = assign_roles(dataset, type, n_real_anomalous, n_contaminated, seed);
    TypeModel model = train_type(dataset, roles, config, seed, log);
    std::vector<ClipScore> scores = score_type(dataset, roles, model, config);
    r.scores.insert(r.scores.end(), scores.begin(), scores.end());
    r.roles.emplace(type, std::move(roles));
    r.models.emplace(type, std::move(model));
  }
  r.metrics = metrics_for(r.scores, config.pauc_p);
  return r;
}

// ---------------------------------------------------------------------------
// Commands

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::file, "cannot create directory " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  if (!f) fail(ErrorKind::file, "cannot write " + path.string());
  return f;
}

// Rebuilds the per-type role assignment recorded in a manifest.
RoleAssignment roles_from_manifest(const std::vector<ManifestRecord>& records, const std::string& type) {
  RoleAssignment r;
  r.target_type = type;
  for (const ManifestRecord& m : records) {
    if (m.machine_type != type) {
      if (m.split == "train" && m.condition == "normal") r.pseudo_anomalous_ids.push_back(m.clip_id);
      continue;
    }
    if (m.role == "normal") r.normal_ids.push_back(m.clip_id);
    else if (m.role == "contaminated") r.contaminated_ids.push_back(m.clip_id);
    else if (m.role == "real_anomalous") r.real_anomalous_ids.push_back(m.clip_id);
  }
  return r;
}

TypeModel load_type_model(const fs::path& dir, const std::string& type) {
  const fs::path ckpt = dir / type / "extractor.ckpt";
  if (!fs::exists(ckpt)) fail(ErrorKind::file, "missing checkpoint " + ckpt.string() + " (run train first)");
  TypeModel m;
  m.extractor = read_checkpoint(ckpt);
  m.extractor_hash = file_hash(ckpt);
  if (m.extractor.machine_type != type) fail(ErrorKind::artifact, ckpt.string() + " belongs to " + m.extractor.machine_type);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir / type)) {
    if (e.path().extension() == ".gmm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) fail(ErrorKind::artifact, "no detectors for " + type);
  for (const fs::path& f : files) {
    DetectorFile d = read_detector(f);
    if (d.extractor_hash != m.extractor_hash) {
      fail(ErrorKind::artifact, f.string() + " was fitted on a different extractor (hash " + d.extractor_hash +
                                    ", checkpoint " + m.extractor_hash + ")");
    }
    if (d.machine_type != type) fail(ErrorKind::artifact, f.string() + " belongs to " + d.machine_type);
    m.detectors.push_back(std::move(d));
  }
  std::sort(m.detectors.begin(), m.detectors.end(),
            [](const DetectorFile& a, const DetectorFile& b) { return a.machine_id < b.machine_id; });
  return m;
}

}  // namespace

void cmd_train(const ExperimentConfig& config, std::uint64_t seed, const Log& log) {
  config.validate();
  const Dataset dataset = load_dataset(config);
  const fs::path out = config.output;
  ensure_dir(out);
  std::map<std::string, RoleAssignment> all_roles;
  for (const std::string& type : resolve_target_types(config, dataset)) {
    RoleAssignment roles = assign_roles(dataset, type, config.n_real_anomalous, config.n_contaminated, seed);
    TypeModel model = train_type(dataset, roles, config, seed, log);
    ensure_dir(out / type);
    const fs::path ckpt = out / type / "extractor.ckpt";
    write_checkpoint(ckpt, model.extractor);
    const std::string hash = file_hash(ckpt);
    for (const auto& e : fs::directory_iterator(out / type)) {
      if (e.path().extension() == ".gmm") fs::remove(e.path());
    }
    for (DetectorFile& d : model.detectors) {
      d.extractor_hash = hash;
      write_detector(out / type / detector_name(d.machine_id), d);
    }
    auto hist = open_out(out / type / "history.csv");
    hist << "epoch,total,type,id\n";
    for (const EpochLoss& e : model.history) {
      hist << e.epoch + 1 << ',' << format_metric(e.total) << ',' << format_metric(e.type) << ','
           << format_metric(e.id) << '\n';
    }
    say(log, "wrote " + std::to_string(model.detectors.size()) + " detectors for " + type);
    all_roles.emplace(type, std::move(roles));
  }
  write_manifest(out / "manifest.jsonl", dataset, all_roles);
  ExperimentConfig recorded = config;
  recorded.seeds = {seed};
  auto cfg = open_out(out / "config.txt");
  cfg << to_text(recorded);
}

void cmd_eval(const ExperimentConfig& config, const Log& log) {
  config.validate();
  const fs::path out = config.output;
  const fs::path manifest = out / "manifest.jsonl";
  if (!fs::exists(manifest)) fail(ErrorKind::file, "missing " + manifest.string() + " (run train first)");
  const std::vector<ManifestRecord> records = read_manifest(manifest);
  const Dataset dataset = load_dataset(config);

  std::vector<ClipScore> scores;
  for (const std::string& type : resolve_target_types(config, dataset)) {
    const TypeModel model = load_type_model(out, type);
    const RoleAssignment roles = roles_from_manifest(records, type);
    std::vector<ClipScore> s = score_type(dataset, roles, model, config);
    say(log, "scored " + std::to_string(s.size()) + " clips of " + type);
    scores.insert(scores.end(), s.begin(), s.end());
  }
  write_scores_csv(out / "scores.csv", scores);
  write_metrics_csv(out / "metrics.csv", metrics_for(scores, config.pauc_p));
}

std::vector<SweepRow> cmd_sweep(const ExperimentConfig& config, SweepKind kind, const Log& log) {
  config.validate();
  const std::vector<int>& grid = kind == SweepKind::anomalous ? config.anomalous_counts : config.contamination_counts;
  if (grid.empty()) fail(ErrorKind::config, "sweep grid is empty");
  const Dataset dataset = load_dataset(config);
  std::vector<SweepRow> rows;
  for (int count : grid) {
    for (std::uint64_t seed : config.seeds) {
      say(log, "sweep point count=" + std::to_string(count) + " seed=" + std::to_string(seed));
      const int n_real = kind == SweepKind::anomalous ? count : config.n_real_anomalous;
      const int n_contam = kind == SweepKind::contamination ? count : config.n_contaminated;
      const RunResult r = run_experiment(dataset, config, seed, n_real, n_contam, log);
      for (const TypeSummary& t : rollup(r.metrics)) rows.push_back({count, seed, t.machine_type, t.mean_aauc, t.min_auc});
    }
  }
  ensure_dir(config.output);
  const fs::path path =
      config.output / (kind == SweepKind::anomalous ? "sweep_anomalous.csv" : "sweep_contamination.csv");
  const fs::path tmp = path.string() + ".tmp";
  {
    auto f = open_out(tmp);
    f << "count,seed,machine_type,aauc,mauc\n";
    for (const SweepRow& r : rows) {
      f << r.count << ',' << r.seed << ',' << r.machine_type << ',' << format_metric(r.aauc) << ','
        << format_metric(r.mauc) << '\n';
    }
  }
  fs::rename(tmp, path);
  return rows;
}

void print_sweep_summary(std::ostream& out, const std::vector<SweepRow>& rows, SweepKind kind) {
  // count -> type -> values over seeds; type "all" averages the types per seed.
  std::map<int, std::map<std::string, std::vector<std::pair<double, double>>>> table;
  std::map<std::pair<int, std::uint64_t>, std::vector<std::pair<double, double>>> per_seed;
  for (const SweepRow& r : rows) {
    table[r.count][r.machine_type].emplace_back(r.aauc, r.mauc);
    per_seed[{r.count, r.seed}].emplace_back(r.aauc, r.mauc);
  }
  for (const auto& [key, v] : per_seed) {
    double a = 0.0, m = 0.0;
    for (const auto& [x, y] : v) {
      a += x;
      m += y;
    }
    table[key.first]["all"].emplace_back(a / v.size(), m / v.size());
  }
  auto stats = [](const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= xs.size();
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double se = xs.size() > 1 ? std::sqrt(ss / (xs.size() - 1) / xs.size()) : 0.0;
    return std::pair{mean, se};
  };
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-8s %-14s %-20s %-20s\n", "count", "machine_type", "aAUC (mean+-se)", "mAUC (mean+-se)");
  out << buf;
  std::vector<double> overall;
  for (const auto& [count, types] : table) {
    for (const auto& [type, v] : types) {
      std::vector<double> a, m;
      for (const auto& [x, y] : v) {
        a.push_back(100.0 * x);
        m.push_back(100.0 * y);
      }
      const auto [am, ase] = stats(a);
      const auto [mm, mse] = stats(m);
      std::snprintf(buf, sizeof buf, "%-8d %-14s %7.2f +- %-9.2f %7.2f +- %-9.2f\n", count, type.c_str(), am, ase, mm, mse);
      out << buf;
      if (type == "all") overall.push_back(am);
    }
  }
  if (kind == SweepKind::contamination && overall.size() > 1) {
    bool monotone = true;
    for (std::size_t i = 1; i < overall.size(); ++i) monotone = monotone && overall[i] <= overall[i - 1];
    out << "trend: " << (monotone ? "monotone decreasing" : "not monotone") << " in contamination\n";
  }
}

void cmd_export_embeddings(const ExperimentConfig& config, const Log& log) {
  config.validate();
  const fs::path out = config.output;
  const fs::path manifest = out / "manifest.jsonl";
  if (!fs::exists(manifest)) fail(ErrorKind::file, "missing " + manifest.string() + " (run train first)");
  const std::vector<ManifestRecord> records = read_manifest(manifest);
  const Dataset dataset = load_dataset(config);
  for (const std::string& type : resolve_target_types(config, dataset)) {
    const TypeModel model = load_type_model(out, type);
    const std::set<std::string> consumed = roles_from_manifest(records, type).consumed_anomalous();
    std::vector<const AudioClip*> clips;
    for (const AudioClip& c : dataset) {
      if (c.key.machine_type == type && c.split == Split::test && !consumed.contains(c.clip_id)) clips.push_back(&c);
    }
    const LogMel mel(model.extractor.dsp, sample_rate_of(dataset));
    std::vector<Eigen::MatrixXd> emb(clips.size());
    parallel_for(clips.size(), config.jobs, [&](std::size_t i) { emb[i] = embed_clip(model.extractor, mel, *clips[i]); });
    const fs::path path = out / type / "embeddings.csv";
    auto f = open_out(path);
    f << "clip_id,chunk_index,truth,machine_id";
    for (int d = 1; d <= model.extractor.model.embedding_dim(); ++d) f << ",e_" << d;
    f << '\n';
    char buf[32];
    for (std::size_t i = 0; i < clips.size(); ++i) {
      for (Eigen::Index m = 0; m < emb[i].rows(); ++m) {
        f << clips[i]->clip_id << ',' << m << ',' << to_string(clips[i]->condition) << ',' << clips[i]->key.machine_id;
        for (Eigen::Index d = 0; d < emb[i].cols(); ++d) {
          std::snprintf(buf, sizeof buf, ",%.9g", emb[i](m, d));
          f << buf;
        }
        f << '\n';
      }
    }
    if (!f) fail(ErrorKind::file, "write failed: " + path.string());
    say(log, "wrote " + path.string());
  }
}

void cmd_synth_data(const ExperimentConfig& config, const Log& log) {
  config.synth.validate();
  const Dataset dataset = synth_generate(config.synth, config.jobs);
  write_dcase_layout(config.output, dataset);
  say(log, "wrote " + std::to_string(dataset.size()) + " clips under " + config.output.string());
}

}  // namespace oeasd
