#include "ibsplit/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <mutex>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "ibsplit/snapshots.hpp"

namespace ibsplit {

using nlohmann::json;

namespace {

constexpr double nan = std::numeric_limits<double>::quiet_NaN();

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  s = trim(s);
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(',', start);
    out.emplace_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  v = trim(v);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw std::invalid_argument("config: '" + std::string(key) + "' expects a number, got '" + std::string(v) + "'");
  return out;
}

std::uint64_t parse_uint(std::string_view key, std::string_view v) {
  v = trim(v);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw std::invalid_argument("config: '" + std::string(key) + "' expects a non-negative integer, got '" +
                                std::string(v) + "'");
  return out;
}

std::vector<double> parse_doubles(std::string_view key, std::string_view v) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(parse_double(key, item));
  return out;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += format_double(v[i]);
  }
  return out;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string short_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string rule_name(CouplingRule r) {
  switch (r) {
    case CouplingRule::eps_eq_delta: return "EPS_EQ_DELTA";
    case CouplingRule::eps_eq_delta_sq: return "EPS_EQ_DELTA_SQ";
    case CouplingRule::explicit_pairs: return "EXPLICIT";
  }
  return "?";
}

CouplingRule parse_rule(std::string_view s) {
  const auto u = upper(trim(s));
  if (u == "EPS_EQ_DELTA") return CouplingRule::eps_eq_delta;
  if (u == "EPS_EQ_DELTA_SQ") return CouplingRule::eps_eq_delta_sq;
  if (u == "EXPLICIT") return CouplingRule::explicit_pairs;
  throw std::invalid_argument("unknown coupling rule '" + std::string(s) + "'");
}

namespace {

// Smooth periodic perturbation: modes 1..32 with Gaussian-damped N(0,1)
// coefficients, scaled to unit max.
Field noise_field(const PeriodicGrid& grid, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> v(grid.size(), 0.0);
  const double L = grid.half_length();
  for (int k = 1; k <= 32; ++k) {
    const double xi = std::numbers::pi * k / L;
    const double damp = std::exp(-xi * xi);
    const double a = nd(rng) * damp, b = nd(rng) * damp;
    for (std::size_t j = 0; j < v.size(); ++j) v[j] += a * std::cos(xi * grid.x(j)) + b * std::sin(xi * grid.x(j));
  }
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  if (m > 0.0)
    for (double& x : v) x /= m;
  return Field(grid, std::move(v));
}

}  // namespace

Field make_profile(const ProfileSpec& profile, const PeriodicGrid& grid, std::uint64_t seed, const Field* u0) {
  const auto shape = lower(profile.shape);
  const double a = profile.amplitude, w = profile.width, c = profile.center;
  Field f = Field::zeros(grid);
  if (shape == "gaussian") {
    f = Field::sample(grid, [=](double x) { return a * std::exp(-((x - c) / w) * ((x - c) / w)); });
  } else if (shape == "sech2") {
    f = Field::sample(grid, [=](double x) {
      const double s = 1.0 / std::cosh((x - c) / w);
      return a * s * s;
    });
  } else if (shape == "minus_u0") {
    if (!u0) throw std::invalid_argument("profile 'minus_u0' needs u0");
    f = -*u0;
  } else if (shape != "zero") {
    throw std::invalid_argument("unknown profile shape '" + profile.shape + "'");
  }
  if (profile.noise != 0.0) f += profile.noise * noise_field(grid, seed);
  return f;
}

// ---------------------------------------------------------------- config

std::vector<SweepPoint> ExperimentConfig::sweep() const {
  std::vector<SweepPoint> out;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    const double d = deltas[i];
    double e = d;
    if (rule == CouplingRule::eps_eq_delta_sq) e = d * d;
    if (rule == CouplingRule::explicit_pairs) e = i < epsilons.size() ? epsilons[i] : nan;
    out.push_back({i, e, d});
  }
  return out;
}

void ExperimentConfig::validate() const {
  auto bad = [](const std::string& why) { throw std::invalid_argument("config: " + why); };
  if (!(half_length > 0.0)) bad("grid.L must be positive");
  if (n_points < 8 || n_points % 2 != 0) bad("grid.N must be even and >= 8");
  if (families.empty()) bad("families must name at least one model");
  if (s_list.empty()) bad("sobolev.s must list at least one index");
  for (double s : s_list)
    if (!(s > 0.5)) bad("every Sobolev index must exceed 1/2");
  if (!(t_end > 0.0)) bad("time.t_end must be positive");
  if (!(snapshot_every > 0.0) || snapshot_every > t_end) bad("time.snapshot_every must lie in (0, t_end]");
  if (dt && !(*dt > 0.0)) bad("time.dt must be positive");
  if (!(blowup_cap > 0.0)) bad("run.blowup_cap must be positive");
  if (lower(u0.shape) == "minus_u0") bad("profile.shape cannot be minus_u0");
  if (rule == CouplingRule::explicit_pairs && epsilons.size() != deltas.size())
    bad("EXPLICIT sweeps need one epsilon per delta");
  if (!(c1 > 0.0) || c1 > c2) bad("need 0 < sweep.c1 <= sweep.c2");

  const bool has_kdv = std::find(families.begin(), families.end(), ModelTag::kdv) != families.end();
  if (has_kdv && rule == CouplingRule::eps_eq_delta)
    bad("KdV sweeps need rule EPS_EQ_DELTA_SQ or EXPLICIT");
  for (const auto& p : sweep()) {
    if (!(p.epsilon > 0.0 && p.epsilon <= p.delta && p.delta <= 1.0)) {
      std::ostringstream os;
      os << "sweep point " << p.index << " (eps=" << p.epsilon << ", delta=" << p.delta
         << ") violates 0 < eps <= delta <= 1";
      bad(os.str());
    }
    if (has_kdv) {
      const double d2 = p.delta * p.delta;
      const double tol = 1e-12 * d2;
      if (p.epsilon < d2 / c2 - tol || p.epsilon > d2 / c1 + tol) {
        std::ostringstream os;
        os << "sweep point " << p.index << " (eps=" << p.epsilon << ", delta=" << p.delta
           << ") is outside the KdV band [delta^2/c2, delta^2/c1]";
        bad(os.str());
      }
    }
  }
  std::set<std::string> ids;
  for (const auto& c : checks) {
    if (c.id.empty()) bad("check with empty id");
    if (!ids.insert(c.id).second) bad("duplicate check id '" + c.id + "'");
    if (c.kind != "slope" && c.kind != "stable" && c.kind != "max" && c.kind != "min")
      bad("check '" + c.id + "' has unknown kind '" + c.kind + "'");
    if (c.metric.empty()) bad("check '" + c.id + "' needs a metric");
    if (!c.family.empty()) parse_tag(c.family);
  }
}

std::string ExperimentConfig::serialize() const {
  std::ostringstream os;
  auto kv = [&](const std::string& k, const std::string& v) { os << k << " = " << v << '\n'; };
  auto profile = [&](const std::string& prefix, const ProfileSpec& p) {
    kv(prefix + ".shape", p.shape);
    kv(prefix + ".amplitude", format_double(p.amplitude));
    kv(prefix + ".width", format_double(p.width));
    kv(prefix + ".center", format_double(p.center));
    kv(prefix + ".noise", format_double(p.noise));
  };
  kv("name", name);
  kv("grid.L", format_double(half_length));
  kv("grid.N", std::to_string(n_points));
  profile("profile", u0);
  profile("v0", v0);
  kv("ib.velocity", ib_velocity == IBVelocity::split ? "split" : "model");
  std::string fams;
  for (std::size_t i = 0; i < families.size(); ++i) fams += (i ? ", " : "") + tag_name(families[i]);
  kv("families", fams);
  kv("sweep.rule", rule_name(rule));
  kv("sweep.deltas", join_doubles(deltas));
  kv("sweep.epsilons", join_doubles(epsilons));
  kv("sweep.c1", format_double(c1));
  kv("sweep.c2", format_double(c2));
  kv("sobolev.s", join_doubles(s_list));
  kv("time.t_end", format_double(t_end));
  kv("time.snapshot_every", format_double(snapshot_every));
  kv("time.dt", dt ? format_double(*dt) : "auto");
  kv("time.kdv_scheme", scheme_name(kdv_scheme));
  kv("output.dir", output_dir);
  kv("run.workers", std::to_string(workers));
  kv("run.seed", std::to_string(seed));
  kv("run.blowup_cap", format_double(blowup_cap));
  for (const auto& c : checks) {
    const std::string p = "check." + c.id;
    kv(p + ".kind", c.kind);
    kv(p + ".metric", c.metric);
    kv(p + ".family", c.family.empty() ? "all" : c.family);
    kv(p + ".s", format_double(c.s));
    kv(p + ".slope_min", format_double(c.slope_min));
    kv(p + ".slope_max", format_double(c.slope_max));
    kv(p + ".r2_min", format_double(c.r2_min));
    kv(p + ".ratio_max", format_double(c.ratio_max));
    kv(p + ".bound", format_double(c.bound));
  }
  return os.str();
}

ExperimentConfig ExperimentConfig::parse(std::string_view text) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::vector<std::string> check_order;
  std::map<std::string, CheckSpec> check_map;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    std::string_view line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view val = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw std::invalid_argument("config: duplicate key '" + key + "'");

    auto profile_field = [&](ProfileSpec& p, std::string_view field) {
      if (field == "shape") p.shape = std::string(val);
      else if (field == "amplitude") p.amplitude = parse_double(key, val);
      else if (field == "width") p.width = parse_double(key, val);
      else if (field == "center") p.center = parse_double(key, val);
      else if (field == "noise") p.noise = parse_double(key, val);
      else return false;
      return true;
    };

    if (key == "name") cfg.name = std::string(val);
    else if (key == "grid.L") cfg.half_length = parse_double(key, val);
    else if (key == "grid.N") cfg.n_points = parse_uint(key, val);
    else if (key.rfind("profile.", 0) == 0 && profile_field(cfg.u0, std::string_view(key).substr(8))) {}
    else if (key.rfind("v0.", 0) == 0 && profile_field(cfg.v0, std::string_view(key).substr(3))) {}
    else if (key == "ib.velocity") {
      const auto v = lower(val);
      if (v == "split") cfg.ib_velocity = IBVelocity::split;
      else if (v == "model") cfg.ib_velocity = IBVelocity::model;
      else throw std::invalid_argument("config: ib.velocity must be split or model");
    } else if (key == "families") {
      cfg.families.clear();
      for (const auto& f : split_list(val)) cfg.families.push_back(parse_tag(f));
    } else if (key == "sweep.rule") cfg.rule = parse_rule(val);
    else if (key == "sweep.deltas") cfg.deltas = parse_doubles(key, val);
    else if (key == "sweep.epsilons") cfg.epsilons = parse_doubles(key, val);
    else if (key == "sweep.c1") cfg.c1 = parse_double(key, val);
    else if (key == "sweep.c2") cfg.c2 = parse_double(key, val);
    else if (key == "sobolev.s") cfg.s_list = parse_doubles(key, val);
    else if (key == "time.t_end") cfg.t_end = parse_double(key, val);
    else if (key == "time.snapshot_every") cfg.snapshot_every = parse_double(key, val);
    else if (key == "time.dt") {
      if (lower(val) == "auto") cfg.dt.reset();
      else cfg.dt = parse_double(key, val);
    } else if (key == "time.kdv_scheme") cfg.kdv_scheme = parse_scheme(val);
    else if (key == "output.dir") cfg.output_dir = std::string(val);
    else if (key == "run.workers") cfg.workers = parse_uint(key, val);
    else if (key == "run.seed") cfg.seed = parse_uint(key, val);
    else if (key == "run.blowup_cap") cfg.blowup_cap = parse_double(key, val);
    else if (key.rfind("check.", 0) == 0) {
      const auto rest = std::string_view(key).substr(6);
      const auto dot = rest.rfind('.');
      if (dot == std::string_view::npos || dot == 0)
        throw std::invalid_argument("config: check keys look like check.<ID>.<field>: '" + key + "'");
      const std::string id(rest.substr(0, dot));
      const auto field = rest.substr(dot + 1);
      if (!check_map.count(id)) {
        check_order.push_back(id);
        check_map[id].id = id;
      }
      auto& c = check_map[id];
      if (field == "kind") c.kind = lower(val);
      else if (field == "metric") c.metric = std::string(val);
      else if (field == "family") c.family = lower(val) == "all" ? "" : upper(val);
      else if (field == "s") c.s = parse_double(key, val);
      else if (field == "slope_min") c.slope_min = parse_double(key, val);
      else if (field == "slope_max") c.slope_max = parse_double(key, val);
      else if (field == "r2_min") c.r2_min = parse_double(key, val);
      else if (field == "ratio_max") c.ratio_max = parse_double(key, val);
      else if (field == "bound") c.bound = parse_double(key, val);
      else throw std::invalid_argument("config: unknown check field '" + key + "'");
    } else {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
  for (const auto& id : check_order) cfg.checks.push_back(check_map[id]);
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

std::uint64_t ExperimentConfig::hash() const {
  ExperimentConfig c = *this;
  c.workers = 0;
  c.output_dir.clear();
  return fnv1a64(c.serialize());
}

// ---------------------------------------------------------------- time grid

namespace {

double common_bound(const ExperimentConfig& cfg, const PeriodicGrid& grid, const PhysParams& params) {
  double b = max_stable_dt(grid, params, std::nullopt, Scheme::rk4);
  for (ModelTag tag : cfg.families) {
    const ModelFamily fam{tag, Direction::right};
    b = std::min(b, max_stable_dt(grid, params, fam, tag == ModelTag::kdv ? cfg.kdv_scheme : Scheme::rk4));
  }
  if (cfg.dt) b = std::min(b, *cfg.dt);
  return b;
}

Scheme scheme_for(const ExperimentConfig& cfg, ModelTag tag) {
  return tag == ModelTag::kdv ? cfg.kdv_scheme : Scheme::rk4;
}

StepControl control_for(const ExperimentConfig& cfg, const TimeGrid& tg, const PeriodicGrid& grid,
                        const PhysParams& params, std::optional<ModelFamily> fam) {
  const Scheme scheme = fam ? scheme_for(cfg, fam->tag) : Scheme::rk4;
  return StepControl(tg.dt, scheme, cfg.t_end, tg.stride, max_stable_dt(grid, params, fam, scheme));
}

}  // namespace

TimeGrid time_grid(const ExperimentConfig& cfg, const PeriodicGrid& grid, const PhysParams& params) {
  const double bound = common_bound(cfg, grid, params);
  const auto n_int = static_cast<std::size_t>(std::max(1.0, std::round(cfg.t_end / cfg.snapshot_every)));
  const double interval = cfg.t_end / static_cast<double>(n_int);
  const auto stride = static_cast<std::size_t>(std::max(1.0, std::ceil(interval / bound - 1e-9)));
  return {cfg.t_end / static_cast<double>(stride * n_int), stride, n_int + 1};
}

// ---------------------------------------------------------------- records

std::string RunRecord::metric_key(std::string_view name, double s) {
  return std::string(name) + "_s" + short_double(s);
}

std::optional<double> RunRecord::metric(std::string_view name, double s) const {
  if (auto it = metrics.find(metric_key(name, s)); it != metrics.end()) return it->second;
  if (auto it = metrics.find(std::string(name)); it != metrics.end()) return it->second;
  return std::nullopt;
}

RunRecord analyse_decoupling(const std::vector<IBState>& ib, const std::vector<WaveState>& wp,
                             const std::vector<WaveState>& wm, const std::vector<double>& s_list,
                             std::optional<std::pair<Field, Field>> initial_data) {
  if (ib.empty() || ib.size() != wp.size() || ib.size() != wm.size())
    throw std::invalid_argument("analyse_decoupling: trajectories must be non-empty and aligned");
  RunRecord rec;
  rec.study = "decouple";
  rec.tag = wp.front().family.tag;
  const PhysParams p = ib.front().params;
  rec.epsilon = p.epsilon;
  rec.delta = p.delta;

  const double e = p.epsilon, d2 = p.delta * p.delta;
  auto bound_at = [&](double t) {
    if (rec.tag == ModelTag::kdv) return e * (1.0 + t);
    return (e + d2) + (e + d2 * d2) * t;
  };

  const std::size_t ns = s_list.size();
  std::vector<std::vector<EnergyTrajectoryPoint>> energy_traj(ns);
  std::vector<bool> window_open(ns, true);
  std::vector<double> window(ns, ib.back().time);
  std::vector<int> lower_bound_fail(ns, 0), regime_fail(ns, 0);
  double mean_r = 0.0;

  for (std::size_t i = 0; i < ib.size(); ++i) {
    const ErrorState es = error_state(ib[i], wp[i], wm[i]);
    mean_r = std::max(mean_r, std::abs(es.r.mean()));
    const ResidualReport rep = residual_tilde(wp[i], wm[i], s_list.front());
    const Field w_tilde = wp[i].w + wm[i].w;
    const double lu = linf_norm(ib[i].u), lp = linf_norm(wp[i].w), lm = linf_norm(wm[i].w);

    if (i == 0 && initial_data) {
      const double diff = linf_norm(es.rho_t - initial_rho_t(initial_data->first, initial_data->second, p));
      rec.metrics["rho_t0_error"] = diff;
    }

    for (std::size_t k = 0; k < ns; ++k) {
      const double s = s_list[k];
      SnapshotRow row;
      row.time = es.time;
      row.s = s;
      row.r_norm = sobolev_norm(es.r, s);
      row.r_t_norm = sobolev_norm(es.r_t, s);
      row.f_plus = sobolev_norm(rep.f_plus, s);
      row.f_minus = sobolev_norm(rep.f_minus, s);
      row.f_tilde = sobolev_norm(rep.f_tilde, s);
      row.interaction = sobolev_norm(rep.interaction, s);
      row.linf_u = lu;
      row.linf_wp = lp;
      row.linf_wm = lm;
      if (window_open[k] && row.r_norm > 1.0) {
        window_open[k] = false;
        window[k] = es.time;
      }
      row.in_window = window_open[k];
      try {
        const EnergyValue ev = energy(es, w_tilde, s);
        row.energy = ev.e_s;
        if (row.in_window && !energy_lower_bound_holds(ev)) ++lower_bound_fail[k];
        energy_traj[k].push_back({es.time, e, ev, row.f_tilde});
      } catch (const RegimeViolationError&) {
        row.energy = nan;
        ++regime_fail[k];
        if (row.in_window) ++lower_bound_fail[k];
      }
      rec.rows.push_back(row);
    }
  }

  rec.metrics["mean_r_max"] = mean_r;
  rec.metrics["uniform_bound"] =
      std::max(uniform_bound_monitor(wp, 1, s_list.front()), uniform_bound_monitor(wm, 1, s_list.front()));

  for (std::size_t k = 0; k < ns; ++k) {
    const double s = s_list[k];
    auto key = [&](const char* n) { return RunRecord::metric_key(n, s); };
    double max_err = 0.0, c_hat = 0.0, sup_ft = 0.0, sup_fp = 0.0, sup_fm = 0.0, sup_int = 0.0, rt0 = nan,
           terminal = nan;
    for (const auto& row : rec.rows) {
      if (row.s != s) continue;
      if (std::isnan(rt0)) rt0 = row.r_t_norm;
      terminal = row.r_norm;
      max_err = std::max(max_err, row.r_norm);
      c_hat = std::max(c_hat, row.r_norm / bound_at(row.time));
      sup_ft = std::max(sup_ft, row.f_tilde);
      sup_fp = std::max(sup_fp, row.f_plus);
      sup_fm = std::max(sup_fm, row.f_minus);
      sup_int = std::max(sup_int, row.interaction);
    }
    rec.metrics[key("terminal_error")] = terminal;
    rec.metrics[key("max_error")] = max_err;
    rec.metrics[key("c_hat")] = c_hat;
    rec.metrics[key("r_t0")] = rt0;
    rec.metrics[key("sup_f_tilde")] = sup_ft;
    rec.metrics[key("sup_f_plus")] = sup_fp;
    rec.metrics[key("sup_f_minus")] = sup_fm;
    rec.metrics[key("sup_interaction")] = sup_int;
    rec.metrics[key("window")] = window[k];
    rec.metrics[key("energy_lower_ok")] = lower_bound_fail[k] == 0 ? 1.0 : 0.0;
    rec.metrics[key("energy_regime_violations")] = regime_fail[k];
    double energy_c = nan;
    if (regime_fail[k] == 0 && energy_traj[k].size() >= 5) {
      const auto rate = energy_rate_check(energy_traj[k]);
      if (rate.finite()) energy_c = rate.empirical_c;
    }
    rec.metrics[key("energy_c")] = energy_c;
  }
  return rec;
}

namespace {

RunRecord failed_record(const std::string& study, const SweepPoint& pt, ModelTag tag, const std::string& why,
                        double t) {
  RunRecord r;
  r.study = study;
  r.index = pt.index;
  r.tag = tag;
  r.epsilon = pt.epsilon;
  r.delta = pt.delta;
  r.ok = false;
  r.failure = why;
  r.failure_time = t;
  return r;
}

template <class Fn>
std::vector<RunRecord> run_pool(const ExperimentConfig& cfg, Fn&& per_point) {
  const auto points = cfg.sweep();
  std::vector<std::vector<RunRecord>> slots(points.size());
  std::size_t workers = cfg.workers ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = std::max<std::size_t>(1, std::min(workers, points.size()));

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= points.size()) return;
      try {
        slots[i] = per_point(points[i]);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  std::vector<RunRecord> out;
  const auto h = cfg.hash();
  for (auto& slot : slots)
    for (auto& r : slot) {
      r.config_hash = h;
      out.push_back(std::move(r));
    }
  return out;
}

}  // namespace

namespace {

struct FamilyRun {
  ModelTag tag = ModelTag::ch;
  bool ok = true;
  std::string failure;
  double failure_time = nan;
  std::vector<IBState> ib;
  std::vector<WaveState> wp, wm;
  std::optional<StepControl> ib_ctrl, p_ctrl, m_ctrl;
};

struct PointData {
  Field u0, v0;
};

PointData point_data(const ExperimentConfig& cfg) {
  const PeriodicGrid grid(cfg.half_length, cfg.n_points);
  Field u0 = make_profile(cfg.u0, grid, cfg.seed);
  Field v0 = make_profile(cfg.v0, grid, cfg.seed + 1, &u0);
  return {std::move(u0), std::move(v0)};
}

std::vector<FamilyRun> solve_point(const ExperimentConfig& cfg, const SweepPoint& pt, const PointData& data) {
  const PeriodicGrid& grid = data.u0.grid();
  const PhysParams params{pt.epsilon, pt.delta, cfg.s_list.front()};
  const auto [w0p, w0m] = split_initial_data(data.u0, data.v0);
  const TimeGrid tg = time_grid(cfg, grid, params);
  const StepControl ib_ctrl = control_for(cfg, tg, grid, params, std::nullopt);

  std::optional<std::vector<IBState>> shared_ib;
  std::optional<std::pair<std::string, double>> shared_fail;
  if (cfg.ib_velocity == IBVelocity::split) {
    try {
      shared_ib = ib_solve(data.u0, data.v0, params, ib_ctrl, cfg.blowup_cap);
    } catch (const BlowUpError& e) {
      shared_fail = {e.what(), e.time()};
    }
  }

  std::vector<FamilyRun> out;
  for (ModelTag tag : cfg.families) {
    FamilyRun run;
    run.tag = tag;
    auto fail = [&](const std::string& why, double t) {
      run.ok = false;
      run.failure = why;
      run.failure_time = t;
    };
    if (shared_fail) {
      fail(shared_fail->first, shared_fail->second);
      out.push_back(std::move(run));
      continue;
    }
    const ModelFamily fp{tag, Direction::right}, fm{tag, Direction::left};
    run.ib_ctrl = ib_ctrl;
    run.p_ctrl = control_for(cfg, tg, grid, params, fp);
    run.m_ctrl = control_for(cfg, tg, grid, params, fm);
    try {
      run.wp = model_solve(w0p, params, fp, *run.p_ctrl, cfg.blowup_cap);
      run.wm = model_solve(w0m, params, fm, *run.m_ctrl, cfg.blowup_cap);
      if (shared_ib) {
        run.ib = *shared_ib;
      } else {
        const Field u1 = model_time_derivative(run.wp.front()) + model_time_derivative(run.wm.front());
        run.ib = ib_solve_with_velocity(data.u0, u1, params, ib_ctrl, cfg.blowup_cap);
      }
    } catch (const BlowUpError& e) {
      fail(e.what(), e.time());
    } catch (const BlownUpFieldError& e) {
      fail(e.what(), nan);
    } catch (const NonzeroMeanError& e) {
      fail(e.what(), nan);
    }
    out.push_back(std::move(run));
  }
  return out;
}

RunRecord analyse_run(const ExperimentConfig& cfg, const SweepPoint& pt, const PointData& data,
                      const FamilyRun& run) {
  if (!run.ok) return failed_record("decouple", pt, run.tag, run.failure, run.failure_time);
  std::optional<std::pair<Field, Field>> init;
  if (cfg.ib_velocity == IBVelocity::split && run.tag == ModelTag::ch) init.emplace(data.u0, data.v0);
  RunRecord rec = analyse_decoupling(run.ib, run.wp, run.wm, cfg.s_list, init);
  rec.index = pt.index;
  rec.epsilon = pt.epsilon;
  rec.delta = pt.delta;
  return rec;
}

std::string run_stem(const SweepPoint& pt, ModelTag tag) {
  return "p" + std::to_string(pt.index) + "_" + tag_name(tag);
}

}  // namespace

std::vector<RunRecord> run_decoupling_study(const ExperimentConfig& cfg) {
  cfg.validate();
  return run_pool(cfg, [&](const SweepPoint& pt) {
    const PointData data = point_data(cfg);
    std::vector<RunRecord> out;
    for (const auto& run : solve_point(cfg, pt, data)) out.push_back(analyse_run(cfg, pt, data, run));
    return out;
  });
}

std::size_t export_snapshots(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create '" + dir.string() + "': " + ec.message());
  std::mutex m;
  json entries = json::array();
  std::vector<json> by_index(cfg.sweep().size());
  run_pool(cfg, [&](const SweepPoint& pt) {
    const PointData data = point_data(cfg);
    json list = json::array();
    for (const auto& run : solve_point(cfg, pt, data)) {
      const std::string stem = run_stem(pt, run.tag);
      json e = {{"index", pt.index},
                {"family", tag_name(run.tag)},
                {"epsilon", pt.epsilon},
                {"delta", pt.delta},
                {"ok", run.ok},
                {"failure", run.failure},
                {"failure_time", number_or_null(run.failure_time)}};
      if (run.ok) {
        write_snapshot_file(dir / (stem + "_ib.bin"), snapshots_from(run.ib, *run.ib_ctrl));
        write_snapshot_file(dir / (stem + "_plus.bin"), snapshots_from(run.wp, *run.p_ctrl));
        write_snapshot_file(dir / (stem + "_minus.bin"), snapshots_from(run.wm, *run.m_ctrl));
        e["ib"] = stem + "_ib.bin";
        e["plus"] = stem + "_plus.bin";
        e["minus"] = stem + "_minus.bin";
      }
      list.push_back(e);
    }
    std::lock_guard lock(m);
    by_index[pt.index] = list;
    return std::vector<RunRecord>{};
  });
  std::size_t written = 0;
  for (const auto& list : by_index)
    for (const auto& e : list) {
      written += e.at("ok").get<bool>() ? 1 : 0;
      entries.push_back(e);
    }
  json manifest = {{"config_hash", hex64(cfg.hash())}, {"runs", entries}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write '" + (dir / "manifest.json").string() + "'");
  out << manifest.dump(2) << '\n';
  std::ofstream cfg_out(dir / "config.cfg");
  cfg_out << cfg.serialize();
  return written;
}

std::vector<RunRecord> analyse_snapshots(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  cfg.validate();
  const auto path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument("'" + path.string() + "': " + e.what());
  }
  if (manifest.at("config_hash").get<std::string>() != hex64(cfg.hash()))
    throw std::invalid_argument("'" + path.string() + "' was written for a different configuration");

  std::optional<PointData> data;
  if (cfg.ib_velocity == IBVelocity::split) data = point_data(cfg);
  std::vector<RunRecord> out;
  for (const auto& e : manifest.at("runs")) {
    const SweepPoint pt{e.at("index").get<std::size_t>(), e.at("epsilon").get<double>(), e.at("delta").get<double>()};
    const ModelTag tag = parse_tag(e.at("family").get<std::string>());
    if (!e.at("ok").get<bool>()) {
      const auto& ft = e.at("failure_time");
      out.push_back(failed_record("decouple", pt, tag, e.at("failure").get<std::string>(),
                                  ft.is_null() ? nan : ft.get<double>()));
      continue;
    }
    const auto ib = ib_states_from(read_snapshot_file(dir / e.at("ib").get<std::string>()));
    const auto wp = wave_states_from(read_snapshot_file(dir / e.at("plus").get<std::string>()));
    const auto wm = wave_states_from(read_snapshot_file(dir / e.at("minus").get<std::string>()));
    std::optional<std::pair<Field, Field>> init;
    if (data && tag == ModelTag::ch) init.emplace(data->u0, data->v0);
    RunRecord rec = analyse_decoupling(ib, wp, wm, cfg.s_list, init);
    rec.index = pt.index;
    rec.epsilon = pt.epsilon;
    rec.delta = pt.delta;
    rec.config_hash = cfg.hash();
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<RunRecord> run_residual_study(const ExperimentConfig& cfg) {
  cfg.validate();
  return run_pool(cfg, [&](const SweepPoint& pt) {
    const PeriodicGrid grid(cfg.half_length, cfg.n_points);
    const PhysParams params{pt.epsilon, pt.delta, cfg.s_list.front()};
    const Field u0 = make_profile(cfg.u0, grid, cfg.seed);
    const Field v0 = make_profile(cfg.v0, grid, cfg.seed + 1, &u0);
    const auto [w0p, w0m] = split_initial_data(u0, v0);
    const TimeGrid tg = time_grid(cfg, grid, params);

    std::vector<RunRecord> out;
    for (ModelTag tag : cfg.families) {
      const ModelFamily fp{tag, Direction::right}, fm{tag, Direction::left};
      try {
        const auto wp = model_solve(w0p, params, fp, control_for(cfg, tg, grid, params, fp), cfg.blowup_cap);
        const auto wm = model_solve(w0m, params, fm, control_for(cfg, tg, grid, params, fm), cfg.blowup_cap);
        RunRecord rec;
        rec.study = "residual";
        rec.index = pt.index;
        rec.tag = tag;
        rec.epsilon = pt.epsilon;
        rec.delta = pt.delta;
        std::vector<double> sup_p(cfg.s_list.size(), 0.0), sup_m(cfg.s_list.size(), 0.0);
        double identity = 0.0;
        for (std::size_t i = 0; i < wp.size(); ++i) {
          const Field fplus = residual_model(wp[i]);
          const Field fminus = residual_model(wm[i]);
          for (const auto* pair : {&wp[i], &wm[i]}) {
            const Field lhs = spectral_derivative(pair == &wp[i] ? fplus : fminus, 1);
            const Field rhs = defining_residual(*pair);
            const double scale = sobolev_norm(rhs, 0.0);
            if (scale > 0.0) identity = std::max(identity, sobolev_norm(lhs - rhs, 0.0) / scale);
          }
          const double lp = linf_norm(wp[i].w), lm = linf_norm(wm[i].w);
          for (std::size_t k = 0; k < cfg.s_list.size(); ++k) {
            SnapshotRow row;
            row.time = wp[i].time;
            row.s = cfg.s_list[k];
            row.r_norm = row.r_t_norm = row.energy = row.f_tilde = row.interaction = row.linf_u = nan;
            row.f_plus = sobolev_norm(fplus, row.s);
            row.f_minus = sobolev_norm(fminus, row.s);
            row.linf_wp = lp;
            row.linf_wm = lm;
            sup_p[k] = std::max(sup_p[k], row.f_plus);
            sup_m[k] = std::max(sup_m[k], row.f_minus);
            rec.rows.push_back(row);
          }
        }
        for (std::size_t k = 0; k < cfg.s_list.size(); ++k) {
          rec.metrics[RunRecord::metric_key("sup_f_plus", cfg.s_list[k])] = sup_p[k];
          rec.metrics[RunRecord::metric_key("sup_f_minus", cfg.s_list[k])] = sup_m[k];
          rec.metrics[RunRecord::metric_key("sup_f_max", cfg.s_list[k])] = std::max(sup_p[k], sup_m[k]);
        }
        rec.metrics["identity_rel"] = identity;
        out.push_back(std::move(rec));
      } catch (const BlowUpError& e) {
        out.push_back(failed_record("residual", pt, tag, e.what(), e.time()));
      } catch (const BlownUpFieldError& e) {
        out.push_back(failed_record("residual", pt, tag, e.what(), nan));
      }
    }
    return out;
  });
}

// ---------------------------------------------------------------- fits

RateFit fit_loglog_slope(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3) throw std::invalid_argument("fit_loglog_slope: need at least 3 points");
  RateFit fit;
  for (const auto& [x, y] : points) {
    if (!(x > 0.0) || !(y > 0.0) || !std::isfinite(x) || !std::isfinite(y))
      throw std::invalid_argument("fit_loglog_slope: data must be finite and positive");
    fit.points.emplace_back(std::log(x), std::log(y));
  }
  const double n = static_cast<double>(fit.points.size());
  double mx = 0.0, my = 0.0;
  for (const auto& [lx, ly] : fit.points) {
    mx += lx / n;
    my += ly / n;
  }
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [lx, ly] : fit.points) {
    sxx += (lx - mx) * (lx - mx);
    sxy += (lx - mx) * (ly - my);
    syy += (ly - my) * (ly - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("fit_loglog_slope: x values must not all coincide");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (const auto& [lx, ly] : fit.points) {
    const double r = ly - (fit.intercept + fit.slope * lx);
    ss_res += r * r;
  }
  // Constant data: syy is pure rounding noise in the mean.
  const double noise = n * std::pow(64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(my)), 2);
  fit.r_squared = syy > noise ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
  return fit;
}

std::vector<CheckResult> evaluate_checks(const ExperimentConfig& cfg, const std::vector<RunRecord>& records) {
  std::vector<CheckResult> out;
  for (const auto& c : cfg.checks) {
    CheckResult res{c.id, c.kind, false, nan, std::nullopt, {}};
    std::vector<const RunRecord*> runs;
    std::size_t failed = 0;
    for (const auto& r : records) {
      if (!c.family.empty() && tag_name(r.tag) != upper(c.family)) continue;
      if (!r.ok) {
        ++failed;
        continue;
      }
      runs.push_back(&r);
    }
    std::vector<double> vals;
    std::vector<std::pair<double, double>> pts;
    bool missing = false;
    for (const auto* r : runs) {
      const auto v = r->metric(c.metric, c.s);
      if (!v) {
        missing = true;
        continue;
      }
      vals.push_back(*v);
      pts.emplace_back(r->delta, *v);
    }
    std::ostringstream detail;
    if (failed) detail << failed << " failed run(s); ";
    if (missing) detail << "metric '" << c.metric << "' missing on some runs; ";
    if (vals.empty()) {
      detail << (runs.empty() ? "no runs" : "no values");
    } else if (c.kind == "slope") {
      try {
        const RateFit fit = fit_loglog_slope(pts);
        res.value = fit.slope;
        res.fit = fit;
        res.passed = !failed && !missing && fit.slope >= c.slope_min && fit.slope <= c.slope_max &&
                     fit.r_squared >= c.r2_min;
        detail << "slope " << short_double(fit.slope) << " in [" << short_double(c.slope_min) << ", "
               << short_double(c.slope_max) << "], r2 " << short_double(fit.r_squared) << " >= "
               << short_double(c.r2_min);
      } catch (const std::invalid_argument& e) {
        detail << e.what();
      }
    } else if (c.kind == "stable") {
      std::vector<double> sorted = vals;
      std::sort(sorted.begin(), sorted.end());
      const std::size_t n = sorted.size();
      const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
      res.value = sorted.back() / median;
      res.passed = !failed && !missing && constants_stable(vals, c.ratio_max);
      detail << "max/median " << short_double(res.value) << " < " << short_double(c.ratio_max);
    } else if (c.kind == "max" || c.kind == "min") {
      const bool finite = std::all_of(vals.begin(), vals.end(), [](double v) { return std::isfinite(v); });
      const bool is_max = c.kind == "max";
      res.value = is_max ? *std::max_element(vals.begin(), vals.end()) : *std::min_element(vals.begin(), vals.end());
      res.passed = !failed && !missing && finite && (is_max ? res.value <= c.bound : res.value >= c.bound);
      detail << c.kind << " " << short_double(res.value) << (is_max ? " <= " : " >= ") << short_double(c.bound);
    }
    res.detail = detail.str();
    out.push_back(std::move(res));
  }
  return out;
}

std::optional<double> largest_passing_delta(const std::vector<RunRecord>& records) {
  std::optional<double> best;
  for (const auto& r : records) {
    if (!r.ok) continue;
    bool window_ok = true;
    for (const auto& row : r.rows) window_ok = window_ok && row.in_window;
    if (window_ok && (!best || r.delta > *best)) best = r.delta;
  }
  return best;
}

// ---------------------------------------------------------------- output

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double from_number(const json& j) { return j.is_null() ? nan : j.get<double>(); }

}  // namespace

std::string records_csv(const std::vector<RunRecord>& records) {
  std::string out =
      "study,index,family,epsilon,delta,ok,s,t,r_norm,r_t_norm,energy,f_plus,f_minus,f_tilde,interaction,"
      "linf_u,linf_wp,linf_wm,in_window\n";
  for (const auto& r : records) {
    const std::string head = csv_field(r.study) + "," + std::to_string(r.index) + "," + tag_name(r.tag) + "," +
                             format_double(r.epsilon) + "," + format_double(r.delta) + "," + (r.ok ? "1" : "0");
    for (const auto& row : r.rows) {
      out += head;
      for (double v : {row.s, row.time, row.r_norm, row.r_t_norm, row.energy, row.f_plus, row.f_minus, row.f_tilde,
                       row.interaction, row.linf_u, row.linf_wp, row.linf_wm})
        out += "," + format_double(v);
      out += row.in_window ? ",1\n" : ",0\n";
    }
  }
  return out;
}

std::string records_to_json(const std::vector<RunRecord>& records) {
  json arr = json::array();
  for (const auto& r : records) {
    json rows = json::array();
    for (const auto& row : r.rows)
      rows.push_back({number(row.time), number(row.s), number(row.r_norm), number(row.r_t_norm), number(row.energy),
                      number(row.f_plus), number(row.f_minus), number(row.f_tilde), number(row.interaction),
                      number(row.linf_u), number(row.linf_wp), number(row.linf_wm), row.in_window});
    json metrics = json::object();
    for (const auto& [k, v] : r.metrics) metrics[k] = number(v);
    arr.push_back({{"study", r.study},
                   {"index", r.index},
                   {"family", tag_name(r.tag)},
                   {"epsilon", r.epsilon},
                   {"delta", r.delta},
                   {"ok", r.ok},
                   {"failure", r.failure},
                   {"failure_time", number(r.failure_time)},
                   {"config_hash", hex64(r.config_hash)},
                   {"metrics", metrics},
                   {"row_columns",
                    {"t", "s", "r_norm", "r_t_norm", "energy", "f_plus", "f_minus", "f_tilde", "interaction",
                     "linf_u", "linf_wp", "linf_wm", "in_window"}},
                   {"rows", rows}});
  }
  return arr.dump(1);
}

std::vector<RunRecord> records_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("records JSON: ") + e.what());
  }
  const json& arr = doc.is_object() ? doc.at("records") : doc;
  std::vector<RunRecord> out;
  try {
    for (const auto& j : arr) {
      RunRecord r;
      r.study = j.at("study").get<std::string>();
      r.index = j.at("index").get<std::size_t>();
      r.tag = parse_tag(j.at("family").get<std::string>());
      r.epsilon = j.at("epsilon").get<double>();
      r.delta = j.at("delta").get<double>();
      r.ok = j.at("ok").get<bool>();
      r.failure = j.at("failure").get<std::string>();
      r.failure_time = from_number(j.at("failure_time"));
      r.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
      for (const auto& [k, v] : j.at("metrics").items()) r.metrics[k] = from_number(v);
      for (const auto& row : j.at("rows")) {
        SnapshotRow s;
        s.time = from_number(row.at(0));
        s.s = from_number(row.at(1));
        s.r_norm = from_number(row.at(2));
        s.r_t_norm = from_number(row.at(3));
        s.energy = from_number(row.at(4));
        s.f_plus = from_number(row.at(5));
        s.f_minus = from_number(row.at(6));
        s.f_tilde = from_number(row.at(7));
        s.interaction = from_number(row.at(8));
        s.linf_u = from_number(row.at(9));
        s.linf_wp = from_number(row.at(10));
        s.linf_wm = from_number(row.at(11));
        s.in_window = row.at(12).get<bool>();
        r.rows.push_back(s);
      }
      out.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("records JSON: ") + e.what());
  }
  return out;
}

void emit_report(const ExperimentConfig& cfg, const std::vector<RunRecord>& records,
                 const std::vector<CheckResult>& checks, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create '" + dir.string() + "': " + ec.message());

  write_text(dir / "runs.csv", records_csv(records));

  std::size_t failed = 0;
  for (const auto& r : records) failed += r.ok ? 0 : 1;
  json jchecks = json::object();
  bool all = true;
  for (const auto& c : checks) {
    json jc = {{"kind", c.kind}, {"passed", c.passed}, {"value", number(c.value)}, {"detail", c.detail}};
    if (c.fit) {
      json pts = json::array();
      for (const auto& [lx, ly] : c.fit->points) pts.push_back({lx, ly});
      jc["fit"] = {{"slope", c.fit->slope},
                   {"intercept", c.fit->intercept},
                   {"r_squared", c.fit->r_squared},
                   {"log_points", pts}};
    }
    jchecks[c.id] = jc;
    all = all && c.passed;
  }
  const auto best = largest_passing_delta(records);
  json summary = {{"name", cfg.name},
                  {"config_hash", hex64(cfg.hash())},
                  {"runs", records.size()},
                  {"failed_runs", failed},
                  {"largest_passing_delta", best ? json(*best) : json(nullptr)},
                  {"all_passed", all},
                  {"checks", jchecks}};
  write_text(dir / "summary.json", summary.dump(2) + "\n");

  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  json rec_doc = {{"provenance", {{"version", "0.1.0"}, {"generated_at", stamp}, {"config_hash", hex64(cfg.hash())}}},
                  {"records", json::parse(records_to_json(records))}};
  write_text(dir / "records.json", rec_doc.dump(1) + "\n");
  write_text(dir / "config.cfg", cfg.serialize());

  // Plot data: one CSV per figure, x and y columns plus series labels.
  std::string vs_t = "family,delta,s,t,r_norm\n";
  std::string vs_delta = "family,s,delta,terminal_error\n";
  std::string res_delta = "study,family,s,delta,sup_f_plus,sup_f_minus,sup_f_tilde\n";
  for (const auto& r : records) {
    if (!r.ok) continue;
    const std::string fam = tag_name(r.tag);
    for (double s : cfg.s_list) {
      if (r.study == "decouple") {
        for (const auto& row : r.rows)
          if (row.s == s)
            vs_t += fam + "," + format_double(r.delta) + "," + format_double(s) + "," + format_double(row.time) + "," +
                    format_double(row.r_norm) + "\n";
        vs_delta += fam + "," + format_double(s) + "," + format_double(r.delta) + "," +
                    format_double(r.metric("terminal_error", s).value_or(nan)) + "\n";
      }
      res_delta += r.study + "," + fam + "," + format_double(s) + "," + format_double(r.delta) + "," +
                   format_double(r.metric("sup_f_plus", s).value_or(nan)) + "," +
                   format_double(r.metric("sup_f_minus", s).value_or(nan)) + "," +
                   format_double(r.metric("sup_f_tilde", s).value_or(nan)) + "\n";
    }
  }
  write_text(dir / "plot_error_vs_t.csv", vs_t);
  write_text(dir / "plot_error_vs_delta.csv", vs_delta);
  write_text(dir / "plot_residual_vs_delta.csv", res_delta);
}

}  // namespace ibsplit
