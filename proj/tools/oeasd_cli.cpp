// Command-line front end: train, eval, sweeps, embedding export, synthetic data.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "oeasd/config.hpp"
#include "oeasd/error.hpp"
#include "oeasd/pipeline.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> target_types;
  std::optional<int> jobs;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "Experiment config file (key = value)");
  cmd->add_option("--seed", f.seed, "Root seed; overrides run.seeds");
  cmd->add_option("--out", f.out, "Output directory; overrides run.output");
  cmd->add_option("--target-type", f.target_types, "Machine type to process (repeatable)");
  cmd->add_option("--jobs", f.jobs, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_flag("-q,--quiet", f.quiet, "Suppress progress messages");
}

oeasd::ExperimentConfig resolve(const CommonFlags& f) {
  oeasd::ExperimentConfig c = f.config.empty() ? oeasd::ExperimentConfig{} : oeasd::load_config(f.config);
  if (f.seed) c.seeds = {*f.seed};
  if (!f.out.empty()) c.output = f.out;
  if (!f.target_types.empty()) c.target_types = f.target_types;
  if (f.jobs) c.jobs = *f.jobs;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Outlier-exposure anomalous sound detection toolkit"};
  app.require_subcommand(1);

  CommonFlags flags;
  bool summary = false;
  auto* train = app.add_subcommand("train", "Train extractors and per-id detectors");
  auto* eval = app.add_subcommand("eval", "Score test clips and write metrics");
  auto* sweep_a = app.add_subcommand("sweep-anomalous", "Train+eval over the anomalous-clip grid");
  auto* sweep_c = app.add_subcommand("sweep-contamination", "Train+eval over the contamination grid");
  auto* export_e = app.add_subcommand("export-embeddings", "Write chunk embeddings of the test clips");
  auto* synth = app.add_subcommand("synth-data", "Write the synthetic dataset as WAV files");
  for (auto* cmd : {train, eval, sweep_a, sweep_c, export_e, synth}) add_common(cmd, flags);
  for (auto* cmd : {sweep_a, sweep_c}) cmd->add_flag("--summary", summary, "Print mean +- stderr tables");

  CLI11_PARSE(app, argc, argv);

  try {
    const oeasd::ExperimentConfig config = resolve(flags);
    const oeasd::Log log = [&](const std::string& msg) {
      if (!flags.quiet) std::cerr << msg << '\n';
    };
    if (train->parsed()) {
      oeasd::cmd_train(config, config.seeds.front(), log);
    } else if (eval->parsed()) {
      oeasd::cmd_eval(config, log);
    } else if (sweep_a->parsed() || sweep_c->parsed()) {
      const auto kind = sweep_a->parsed() ? oeasd::SweepKind::anomalous : oeasd::SweepKind::contamination;
      const auto rows = oeasd::cmd_sweep(config, kind, log);
      if (summary) oeasd::print_sweep_summary(std::cout, rows, kind);
    } else if (export_e->parsed()) {
      oeasd::cmd_export_embeddings(config, log);
    } else if (synth->parsed()) {
      oeasd::cmd_synth_data(config, log);
    }
  } catch (const oeasd::Error& e) {
    std::printf("error: kind=%s message=%s\n", oeasd::to_string(e.kind()), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::printf("error: kind=internal message=%s\n", e.what());
    return 3;
  }
  return 0;
}
