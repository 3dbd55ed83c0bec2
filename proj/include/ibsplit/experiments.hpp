#pragma once

// Sweep orchestration: configuration files, decoupling and residual studies
// over (eps, delta) ladders, log-log rate fits, in-config checks and report
// emission (CSV, JSON, plot data).

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ibsplit/analysis.hpp"

namespace ibsplit {

enum class CouplingRule { eps_eq_delta, eps_eq_delta_sq, explicit_pairs };
std::string rule_name(CouplingRule r);
CouplingRule parse_rule(std::string_view s);

// Initial profile. Shapes: gaussian (a exp(-((x-c)/w)^2)), sech2
// (a sech^2((x-c)/w)), zero, and for v0 only minus_u0 (v0 = -u0). A nonzero
// `noise` adds a seeded smooth periodic perturbation of that amplitude.
struct ProfileSpec {
  std::string shape = "gaussian";
  double amplitude = 1.0;
  double width = 4.0;
  double center = 0.0;
  double noise = 0.0;

  friend bool operator==(const ProfileSpec&, const ProfileSpec&) = default;
};

Field make_profile(const ProfileSpec& profile, const PeriodicGrid& grid, std::uint64_t seed,
                   const Field* u0 = nullptr);

// How the IB initial velocity is chosen: split gives u_t(0) = (v0)_x,
// model gives u_t(0) = w+_t(0) + w-_t(0) from the model equations.
enum class IBVelocity { split, model };

// One acceptance-style check evaluated over the records of a study.
//   slope:  fit metric vs delta over the runs of `family`; slope in
//           [slope_min, slope_max] and r^2 >= r2_min.
//   stable: max(metric) < ratio_max * median(metric).
//   max:    max(metric) <= bound.
//   min:    min(metric) >= bound.
struct CheckSpec {
  std::string id;
  std::string kind = "slope";
  std::string metric;
  std::string family;  // model tag, e.g. "CH"; empty means every run
  double s = 2.0;
  double slope_min = 0.0;
  double slope_max = 0.0;
  double r2_min = 0.0;
  double ratio_max = 2.0;
  double bound = 0.0;

  friend bool operator==(const CheckSpec&, const CheckSpec&) = default;
};

struct SweepPoint {
  std::size_t index = 0;
  double epsilon = 0.0;
  double delta = 0.0;
};

struct ExperimentConfig {
  std::string name = "study";
  double half_length = 64.0;
  std::size_t n_points = 2048;
  ProfileSpec u0{};
  ProfileSpec v0{"gaussian", 0.5, 6.0, 0.0};
  IBVelocity ib_velocity = IBVelocity::split;
  std::vector<ModelTag> families{ModelTag::ch};
  CouplingRule rule = CouplingRule::eps_eq_delta_sq;
  std::vector<double> deltas{0.05, 0.1, 0.2, 0.4};
  std::vector<double> epsilons;  // EXPLICIT only, paired with deltas
  double c1 = 1.0;
  double c2 = 1.0;
  std::vector<double> s_list{2.0};
  double t_end = 10.0;
  double snapshot_every = 0.5;
  std::optional<double> dt;  // cap on the step; default is the stability bound
  Scheme kdv_scheme = Scheme::ifrk4;
  std::string output_dir = "out";
  std::size_t workers = 0;  // 0 = hardware concurrency
  std::uint64_t seed = 0;
  double blowup_cap = default_blowup_cap;
  std::vector<CheckSpec> checks;

  std::vector<SweepPoint> sweep() const;
  // Throws std::invalid_argument on out-of-regime sweeps or malformed fields.
  void validate() const;

  std::string serialize() const;
  static ExperimentConfig parse(std::string_view text);
  static ExperimentConfig load(const std::filesystem::path& path);
  // FNV-1a over serialize() with run.workers and output.dir blanked.
  std::uint64_t hash() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Uniform time grid shared by every solver of a sweep point.
struct TimeGrid {
  double dt = 0.0;
  std::size_t stride = 1;
  std::size_t n_snapshots = 0;  // including t = 0
};
TimeGrid time_grid(const ExperimentConfig& cfg, const PeriodicGrid& grid, const PhysParams& params);

struct SnapshotRow {
  double time = 0.0;
  double s = 2.0;
  double r_norm = 0.0;
  double r_t_norm = 0.0;
  double energy = 0.0;
  double f_plus = 0.0;
  double f_minus = 0.0;
  double f_tilde = 0.0;
  double interaction = 0.0;
  double linf_u = 0.0;
  double linf_wp = 0.0;
  double linf_wm = 0.0;
  bool in_window = true;
};

struct RunRecord {
  std::string study;  // "decouple" or "residual"
  std::size_t index = 0;
  ModelTag tag = ModelTag::ch;
  double epsilon = 0.0;
  double delta = 0.0;
  bool ok = true;
  std::string failure;
  double failure_time = 0.0;
  std::uint64_t config_hash = 0;
  std::vector<SnapshotRow> rows;
  std::map<std::string, double> metrics;

  // metrics key for a per-s quantity, e.g. metric_key("terminal_error", 2) == "terminal_error_s2".
  static std::string metric_key(std::string_view name, double s);
  std::optional<double> metric(std::string_view name, double s) const;
};

// Rows and per-run metrics of one decoupling run from aligned trajectories.
// `failed` runs are not analysed here; callers build those records directly.
RunRecord analyse_decoupling(const std::vector<IBState>& ib, const std::vector<WaveState>& wp,
                             const std::vector<WaveState>& wm, const std::vector<double>& s_list,
                             std::optional<std::pair<Field, Field>> initial_data = std::nullopt);

// One IB solve per sweep point (per family when ib.velocity = model), the
// +/- model pair of every configured family, error states, residuals and
// energies at each snapshot. Blow-up yields a failed record. Records are
// ordered by (sweep index, family order).
std::vector<RunRecord> run_decoupling_study(const ExperimentConfig& cfg);
// Model pairs only; sup-in-time residual norms per (eps, delta).
std::vector<RunRecord> run_residual_study(const ExperimentConfig& cfg);

// `solve`: for every sweep point and family, writes binary snapshot files of
// the IB run and both model runs into dir plus a manifest.json index.
// Returns the number of runs written; blow-ups are listed in the manifest.
std::size_t export_snapshots(const ExperimentConfig& cfg, const std::filesystem::path& dir);
// `energy`: decoupling records rebuilt from an export_snapshots directory.
std::vector<RunRecord> analyse_snapshots(const ExperimentConfig& cfg, const std::filesystem::path& dir);

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::vector<std::pair<double, double>> points;  // (log x, log y)
};

// Least squares through (log x, log y). Needs >= 3 points, all positive.
RateFit fit_loglog_slope(const std::vector<std::pair<double, double>>& points);

struct CheckResult {
  std::string id;
  std::string kind;
  bool passed = false;
  double value = 0.0;  // slope, max/median ratio, or extreme value
  std::optional<RateFit> fit;
  std::string detail;
};

std::vector<CheckResult> evaluate_checks(const ExperimentConfig& cfg, const std::vector<RunRecord>& records);

// Largest delta among runs that finished with the validity window intact.
std::optional<double> largest_passing_delta(const std::vector<RunRecord>& records);

// Writes runs.csv, summary.json, records.json and plot_*.csv into dir.
void emit_report(const ExperimentConfig& cfg, const std::vector<RunRecord>& records,
                 const std::vector<CheckResult>& checks, const std::filesystem::path& dir);

// CSV text for the records (header plus one row per snapshot row).
std::string records_csv(const std::vector<RunRecord>& records);

// records.json round trip used by the `report` subcommand.
std::string records_to_json(const std::vector<RunRecord>& records);
std::vector<RunRecord> records_from_json(std::string_view text);

std::string format_double(double v);

}  // namespace ibsplit
