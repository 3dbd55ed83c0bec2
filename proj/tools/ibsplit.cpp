#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "ibsplit/errors.hpp"
#include "ibsplit/experiments.hpp"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string in;
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;
};

ibsplit::ExperimentConfig load_config(const Options& o) {
  auto cfg = ibsplit::ExperimentConfig::load(o.config);
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.workers) cfg.workers = *o.workers;
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  return cfg;
}

int finish(const ibsplit::ExperimentConfig& cfg, const std::vector<ibsplit::RunRecord>& records) {
  const auto checks = ibsplit::evaluate_checks(cfg, records);
  ibsplit::emit_report(cfg, records, checks, cfg.output_dir);
  bool all = true;
  for (const auto& c : checks) {
    std::printf("%-8s %s  %s\n", c.id.c_str(), c.passed ? "PASS" : "FAIL", c.detail.c_str());
    all = all && c.passed;
  }
  std::size_t failed = 0;
  for (const auto& r : records) failed += r.ok ? 0 : 1;
  std::printf("%zu runs (%zu failed), report in %s\n", records.size(), failed, cfg.output_dir.c_str());
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decoupling studies for the improved Boussinesq equation"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub, bool need_config) {
    auto* c = sub->add_option("--config", o.config, "study configuration file");
    if (need_config) c->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory (overrides output.dir)");
    sub->add_option("--workers", o.workers, "worker threads (0 = hardware concurrency)");
    sub->add_option("--seed", o.seed, "seed for noisy profiles");
  };

  auto* solve = app.add_subcommand("solve", "solve IB and model pairs, export binary snapshots");
  add_common(solve, true);
  auto* residual = app.add_subcommand("residual", "residual study of the model pairs");
  add_common(residual, true);
  auto* decouple = app.add_subcommand("decouple", "decoupling study");
  add_common(decouple, true);
  auto* energy = app.add_subcommand("energy", "energy and rate checks on exported snapshots");
  add_common(energy, true);
  energy->add_option("--in", o.in, "snapshot directory written by solve (default <out>/snapshots)");
  auto* report = app.add_subcommand("report", "re-evaluate checks and re-emit from records.json");
  add_common(report, true);
  report->add_option("--in", o.in, "records.json to read (default <out>/records.json)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed()) {
      const auto cfg = load_config(o);
      const auto dir = std::filesystem::path(cfg.output_dir) / "snapshots";
      const auto n = ibsplit::export_snapshots(cfg, dir);
      std::printf("%zu runs exported to %s\n", n, dir.c_str());
      return 0;
    }
    if (residual->parsed()) {
      const auto cfg = load_config(o);
      return finish(cfg, ibsplit::run_residual_study(cfg));
    }
    if (decouple->parsed()) {
      const auto cfg = load_config(o);
      return finish(cfg, ibsplit::run_decoupling_study(cfg));
    }
    if (energy->parsed()) {
      const auto cfg = load_config(o);
      const auto dir = o.in.empty() ? std::filesystem::path(cfg.output_dir) / "snapshots" : std::filesystem::path(o.in);
      return finish(cfg, ibsplit::analyse_snapshots(cfg, dir));
    }
    if (report->parsed()) {
      const auto cfg = load_config(o);
      const auto path = o.in.empty() ? std::filesystem::path(cfg.output_dir) / "records.json" : std::filesystem::path(o.in);
      std::ifstream in(path);
      if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
      std::stringstream ss;
      ss << in.rdbuf();
      return finish(cfg, ibsplit::records_from_json(ss.str()));
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ibsplit: %s\n", e.what());
    return 2;
  }
  return 2;
}
