#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "ibsplit/errors.hpp"
#include "ibsplit/experiments.hpp"
#include "ibsplit/snapshots.hpp"

using namespace ibsplit;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ibsplit_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.half_length = 32.0;
  cfg.n_points = 256;
  cfg.u0 = {"gaussian", 1.0, 3.0, 0.0, 0.0};
  cfg.v0 = {"gaussian", 0.5, 4.0, 1.0, 0.0};
  cfg.deltas = {0.1, 0.2, 0.4};
  cfg.t_end = 2.0;
  cfg.snapshot_every = 0.5;
  cfg.workers = 1;
  return cfg;
}

RunRecord synthetic_record(double delta, double value, ModelTag tag = ModelTag::ch) {
  RunRecord r;
  r.study = "decouple";
  r.tag = tag;
  r.delta = delta;
  r.epsilon = delta * delta;
  r.metrics[RunRecord::metric_key("terminal_error", 2.0)] = value;
  SnapshotRow row;
  r.rows.push_back(row);
  return r;
}

}  // namespace

TEST_CASE("fit_loglog_slope examples") {
  const auto sq = fit_loglog_slope({{1, 1}, {2, 4}, {4, 16}});
  CHECK(sq.slope == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(sq.r_squared == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(sq.points.size() == 3);

  const auto flat = fit_loglog_slope({{1, 5}, {2, 5}, {4, 5}});
  CHECK(std::abs(flat.slope) < 1e-14);
  CHECK(flat.r_squared == 1.0);

  std::vector<std::pair<double, double>> pts;
  for (int i = 0; i < 8; ++i) {
    const double x = std::pow(2.0, i);
    pts.emplace_back(x, x * x * x * (1.0 + 0.01 * (i % 2 ? 1.0 : -1.0)));
  }
  const auto cube = fit_loglog_slope(pts);
  CHECK(std::abs(cube.slope - 3.0) < 0.05);
  CHECK(cube.r_squared >= 0.0);
  CHECK(cube.r_squared <= 1.0);
}

TEST_CASE("fit_loglog_slope errors") {
  CHECK_THROWS_AS(fit_loglog_slope({{1, 1}, {2, 4}}), std::invalid_argument);
  CHECK_THROWS_AS(fit_loglog_slope({{1, 1}, {2, 0}, {4, 16}}), std::invalid_argument);
  CHECK_THROWS_AS(fit_loglog_slope({{-1, 1}, {2, 4}, {4, 16}}), std::invalid_argument);
  CHECK_THROWS_AS(fit_loglog_slope({{2, 1}, {2, 4}, {2, 16}}), std::invalid_argument);
}

TEST_CASE("config round trip") {
  ExperimentConfig cfg = small_config();
  cfg.name = "round trip";
  cfg.families = {ModelTag::ch, ModelTag::kdv};
  cfg.rule = CouplingRule::explicit_pairs;
  cfg.deltas = {0.1, 0.3};
  cfg.epsilons = {0.01, 0.09000000000000001};
  cfg.s_list = {1.5, 2.0, 3.25};
  cfg.dt = 0.0123;
  cfg.ib_velocity = IBVelocity::model;
  cfg.v0 = {"minus_u0", 1.0, 1.0, 0.0, 0.0};
  cfg.u0.noise = 0.1;
  cfg.seed = 42;
  CheckSpec c;
  c.id = "X-1";
  c.metric = "terminal_error";
  c.family = "CH";
  c.slope_min = 1.7;
  c.slope_max = 2.3;
  c.r2_min = 0.9;
  cfg.checks = {c};
  CheckSpec d = c;
  d.id = "A-0";
  d.kind = "max";
  d.family.clear();
  d.bound = 1e-9;
  cfg.checks.push_back(d);

  const auto text = cfg.serialize();
  const auto back = ExperimentConfig::parse(text);
  CHECK(back == cfg);
  CHECK(back.serialize() == text);
  CHECK(back.hash() == cfg.hash());
  CHECK(back.checks[0].id == "X-1");
  CHECK(back.checks[1].id == "A-0");

  cfg.dt.reset();
  CHECK(ExperimentConfig::parse(cfg.serialize()) == cfg);
  CHECK(ExperimentConfig::parse(cfg.serialize()).hash() != back.hash());

  auto moved = cfg;
  moved.workers = 7;
  moved.output_dir = "elsewhere";
  CHECK(moved.hash() == cfg.hash());
  CHECK_FALSE(moved == cfg);
}

TEST_CASE("config parse errors") {
  CHECK_THROWS_AS(ExperimentConfig::parse("grid.M = 3\n"), std::invalid_argument);
  CHECK_THROWS_AS(ExperimentConfig::parse("grid.L = 3\ngrid.L = 4\n"), std::invalid_argument);
  CHECK_THROWS_AS(ExperimentConfig::parse("grid.L = abc\n"), std::invalid_argument);
  CHECK_THROWS_AS(ExperimentConfig::parse("grid.N = -4\n"), std::invalid_argument);
  CHECK_THROWS_AS(ExperimentConfig::parse("just words\n"), std::invalid_argument);
  CHECK_THROWS_AS(ExperimentConfig::parse("sweep.rule = SOMETIMES\n"), std::invalid_argument);
  CHECK_THROWS_AS(ExperimentConfig::parse("check.A.colour = red\n"), std::invalid_argument);
  const auto cfg = ExperimentConfig::parse("# comment only\n\n  grid.L = 8   # trailing\n");
  CHECK(cfg.half_length == 8.0);
}

TEST_CASE("config validation") {
  CHECK_NOTHROW(small_config().validate());

  auto cfg = small_config();
  cfg.rule = CouplingRule::eps_eq_delta;
  cfg.deltas = {1.5};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = small_config();
  cfg.rule = CouplingRule::explicit_pairs;
  cfg.deltas = {0.1, 0.2};
  cfg.epsilons = {0.2, 0.01};  // eps > delta at the first point
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.epsilons = {0.01};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  cfg = small_config();
  cfg.families = {ModelTag::kdv};
  cfg.rule = CouplingRule::eps_eq_delta;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.rule = CouplingRule::eps_eq_delta_sq;
  CHECK_NOTHROW(cfg.validate());
  cfg.rule = CouplingRule::explicit_pairs;
  cfg.deltas = {0.2};
  cfg.epsilons = {0.02};
  cfg.c1 = 1.0;
  cfg.c2 = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.c2 = 2.0;
  CHECK_NOTHROW(cfg.validate());

  cfg = small_config();
  cfg.s_list = {0.5};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.families.clear();
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.checks.push_back({"A", "median"});
  cfg.checks.back().metric = "x";
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("sweep rules") {
  auto cfg = small_config();
  cfg.rule = CouplingRule::eps_eq_delta_sq;
  auto pts = cfg.sweep();
  REQUIRE(pts.size() == 3);
  CHECK(pts[1].epsilon == 0.2 * 0.2);
  CHECK(pts[2].index == 2);
  cfg.rule = CouplingRule::eps_eq_delta;
  CHECK(cfg.sweep()[1].epsilon == 0.2);
}

TEST_CASE("time grid") {
  const auto cfg = small_config();
  const PeriodicGrid g(cfg.half_length, cfg.n_points);
  const PhysParams p{0.04, 0.2, 2.0};
  const auto tg = time_grid(cfg, g, p);
  CHECK(tg.n_snapshots == 5);
  CHECK(tg.dt <= max_stable_dt(g, p, ModelFamily{ModelTag::ch, Direction::right}, Scheme::rk4));
  CHECK(tg.dt * static_cast<double>(tg.stride * (tg.n_snapshots - 1)) == doctest::Approx(cfg.t_end));

  auto capped = cfg;
  capped.dt = 1e-3;
  CHECK(time_grid(capped, g, p).dt <= 1e-3);
}

TEST_CASE("empty sweep gives empty collections") {
  auto cfg = small_config();
  cfg.deltas.clear();
  CHECK(run_decoupling_study(cfg).empty());
  CHECK(run_residual_study(cfg).empty());
}

TEST_CASE("CSV shape") {
  const std::string header =
      "study,index,family,epsilon,delta,ok,s,t,r_norm,r_t_norm,energy,f_plus,f_minus,f_tilde,interaction,"
      "linf_u,linf_wp,linf_wm,in_window\n";
  CHECK(records_csv({}) == header);

  auto cfg = small_config();
  cfg.deltas = {0.2};
  const auto recs = run_decoupling_study(cfg);
  REQUIRE(recs.size() == 1);
  const auto csv = records_csv(recs);
  const auto lines = std::count(csv.begin(), csv.end(), '\n');
  CHECK(lines == 1 + 5);
  CHECK(recs[0].rows.size() == 5);

  RunRecord odd;
  odd.study = "a,\"b\"";
  odd.rows.push_back({});
  const auto q = records_csv({odd});
  CHECK(q.find("\"a,\"\"b\"\"\",0,CH") != std::string::npos);
}

TEST_CASE("decoupling study is deterministic across worker counts") {
  auto cfg = small_config();
  cfg.families = {ModelTag::ch, ModelTag::bbm};
  const auto a = records_csv(run_decoupling_study(cfg));
  const auto b = records_csv(run_decoupling_study(cfg));
  cfg.workers = 3;
  const auto c = records_csv(run_decoupling_study(cfg));
  CHECK(a == b);
  CHECK(a == c);
}

TEST_CASE("decoupling records") {
  auto cfg = small_config();
  const auto recs = run_decoupling_study(cfg);
  REQUIRE(recs.size() == 3);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = recs[i];
    CHECK(r.ok);
    CHECK(r.index == i);
    CHECK(r.config_hash == cfg.hash());
    CHECK(r.rows.front().r_norm == 0.0);
    for (std::size_t k = 1; k < r.rows.size(); ++k) CHECK(r.rows[k].time > r.rows[k - 1].time);
    CHECK(r.metric("rho_t0_error", 2.0).value() < 1e-9);
    CHECK(r.metric("terminal_error", 2.0).value() == r.rows.back().r_norm);
  }
  // Terminal error shrinks as delta decreases along eps = delta^2.
  CHECK(recs[0].metric("terminal_error", 2.0).value() <= recs[1].metric("terminal_error", 2.0).value());
  CHECK(recs[1].metric("terminal_error", 2.0).value() <= recs[2].metric("terminal_error", 2.0).value());
}

TEST_CASE("blow-up becomes a failed record") {
  auto cfg = small_config();
  cfg.blowup_cap = 0.5;
  cfg.families = {ModelTag::ch, ModelTag::bbm};
  const auto recs = run_decoupling_study(cfg);
  REQUIRE(recs.size() == 6);
  for (const auto& r : recs) {
    CHECK_FALSE(r.ok);
    CHECK_FALSE(r.failure.empty());
    CHECK(r.rows.empty());
  }
  const auto res = run_residual_study(cfg);
  REQUIRE(res.size() == 6);
  CHECK_FALSE(res[0].ok);

  CheckSpec c;
  c.id = "S";
  c.metric = "terminal_error";
  c.slope_min = -10;
  c.slope_max = 10;
  cfg.checks = {c};
  const auto checks = evaluate_checks(cfg, recs);
  CHECK_FALSE(checks[0].passed);
  CHECK_FALSE(largest_passing_delta(recs).has_value());
}

TEST_CASE("zero initial data gives zero residuals and errors") {
  auto cfg = small_config();
  cfg.u0.shape = "zero";
  cfg.v0.shape = "zero";
  cfg.families = {ModelTag::ch, ModelTag::bbm, ModelTag::kdv};
  for (const auto& r : run_residual_study(cfg)) {
    CHECK(r.ok);
    for (const auto& row : r.rows) {
      CHECK(row.f_plus == 0.0);
      CHECK(row.f_minus == 0.0);
    }
  }
  for (const auto& r : run_decoupling_study(cfg))
    for (const auto& row : r.rows) {
      CHECK(row.r_norm == 0.0);
      CHECK(row.f_tilde == 0.0);
    }
}

TEST_CASE("evaluate_checks on synthetic records") {
  ExperimentConfig cfg;
  std::vector<RunRecord> recs;
  for (double d : {0.05, 0.1, 0.2, 0.4}) recs.push_back(synthetic_record(d, 3.0 * d * d));
  recs.push_back(synthetic_record(0.1, 100.0, ModelTag::bbm));

  CheckSpec slope;
  slope.id = "slope";
  slope.metric = "terminal_error";
  slope.family = "CH";
  slope.slope_min = 1.9;
  slope.slope_max = 2.1;
  slope.r2_min = 0.99;
  CheckSpec stable = slope;
  stable.id = "stable";
  stable.kind = "stable";
  CheckSpec mx = slope;
  mx.id = "max";
  mx.kind = "max";
  mx.bound = 0.5;
  CheckSpec mn = slope;
  mn.id = "min";
  mn.kind = "min";
  mn.bound = 0.01;
  CheckSpec missing = slope;
  missing.id = "missing";
  missing.metric = "nothing";
  cfg.checks = {slope, stable, mx, mn, missing};

  const auto res = evaluate_checks(cfg, recs);
  REQUIRE(res.size() == 5);
  CHECK(res[0].passed);
  CHECK(res[0].value == doctest::Approx(2.0));
  REQUIRE(res[0].fit.has_value());
  CHECK_FALSE(res[1].passed);  // max/median = 0.48 / 0.0375
  CHECK(res[2].passed);
  CHECK(res[2].value == doctest::Approx(0.48));
  CHECK_FALSE(res[3].passed);
  CHECK_FALSE(res[4].passed);

  for (const char* kind : {"slope", "stable", "max", "min"}) {
    missing.kind = kind;
    cfg.checks = {missing};
    const auto none = evaluate_checks(cfg, recs);
    CHECK_FALSE(none[0].passed);
    CHECK(none[0].detail.find("no values") != std::string::npos);
  }
}

TEST_CASE("largest passing delta") {
  std::vector<RunRecord> recs{synthetic_record(0.1, 1.0), synthetic_record(0.2, 1.0), synthetic_record(0.4, 1.0)};
  recs[2].rows.back().in_window = false;
  CHECK(largest_passing_delta(recs).value() == 0.2);
  recs[1].ok = false;
  CHECK(largest_passing_delta(recs).value() == 0.1);
}

TEST_CASE("records JSON round trip") {
  auto cfg = small_config();
  cfg.deltas = {0.2};
  auto recs = run_decoupling_study(cfg);
  recs.push_back(synthetic_record(0.3, std::nan("")));
  recs.back().ok = false;
  recs.back().failure = "boom";
  recs.back().failure_time = 1.25;
  const auto back = records_from_json(records_to_json(recs));
  REQUIRE(back.size() == recs.size());
  CHECK(records_csv(back) == records_csv(recs));
  CHECK(back[0].metrics == recs[0].metrics);
  CHECK(back[0].config_hash == recs[0].config_hash);
  CHECK(std::isnan(back[1].metric("terminal_error", 2.0).value()));
  CHECK(back[1].failure == "boom");
  CHECK(back[1].failure_time == 1.25);
  CHECK_THROWS_AS(records_from_json("{not json"), std::invalid_argument);
}

TEST_CASE("emit_report writes every artifact with check ids as summary keys") {
  auto cfg = small_config();
  cfg.deltas = {0.1, 0.2, 0.4};
  CheckSpec c;
  c.id = "AC-3";
  c.metric = "terminal_error";
  c.family = "CH";
  c.slope_min = 1.0;
  c.slope_max = 3.0;
  CheckSpec d = c;
  d.id = "AC-3-C";
  d.kind = "stable";
  d.metric = "c_hat";
  cfg.checks = {c, d};
  const auto recs = run_decoupling_study(cfg);
  const auto checks = evaluate_checks(cfg, recs);
  const auto dir = scratch_dir("report");
  emit_report(cfg, recs, checks, dir);
  for (const char* f : {"runs.csv", "summary.json", "records.json", "config.cfg", "plot_error_vs_t.csv",
                        "plot_error_vs_delta.csv", "plot_residual_vs_delta.csv"})
    CHECK(std::filesystem::exists(dir / f));
  const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  std::vector<std::string> keys;
  for (const auto& [k, v] : summary.at("checks").items()) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  CHECK(keys == std::vector<std::string>{"AC-3", "AC-3-C"});
  CHECK(summary.at("runs") == 3);
  CHECK(summary.at("config_hash") == hex64(cfg.hash()));
  CHECK(slurp(dir / "runs.csv") == records_csv(recs));
  CHECK(ExperimentConfig::parse(slurp(dir / "config.cfg")) == cfg);

  const auto vs_t = slurp(dir / "plot_error_vs_t.csv");
  CHECK(std::count(vs_t.begin(), vs_t.end(), '\n') == 1 + 3 * 5);

  CHECK_THROWS_AS(emit_report(cfg, recs, checks, dir / "runs.csv" / "sub"), std::runtime_error);
}

TEST_CASE("snapshot files round trip and detect corruption") {
  const PeriodicGrid g(8.0, 32);
  const PhysParams p{0.04, 0.2, 2.0};
  const ModelFamily fam{ModelTag::bbm, Direction::left};
  const Field w0 = Field::sample(g, [](double x) { return std::exp(-x * x); });
  const StepControl ctrl = StepControl::standard(g, p, fam, 1.0, 4);
  const auto traj = model_solve(w0, p, fam, ctrl);

  const auto dir = scratch_dir("snap");
  const auto path = dir / "w.bin";
  write_snapshot_file(path, snapshots_from(traj, ctrl));
  const auto file = read_snapshot_file(path);
  CHECK(file.meta.kind == fam.name());
  CHECK(file.meta.stride == 4);
  const auto back = wave_states_from(file);
  REQUIRE(back.size() == traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    CHECK(back[i].time == traj[i].time);
    CHECK(back[i].family.tag == fam.tag);
    CHECK(back[i].family.direction == fam.direction);
    CHECK(std::ranges::equal(back[i].w.values(), traj[i].w.values()));
  }
  CHECK_THROWS_AS(ib_states_from(file), SnapshotFormatError);

  const auto ib = ib_solve(w0, Field::zeros(g), p, StepControl::standard(g, p, std::nullopt, 1.0, 4));
  write_snapshot_file(dir / "ib.bin", snapshots_from(ib, StepControl::standard(g, p, std::nullopt, 1.0, 4)));
  const auto ib_back = ib_states_from(read_snapshot_file(dir / "ib.bin"));
  REQUIRE(ib_back.size() == ib.size());
  CHECK(std::ranges::equal(ib_back.back().p.values(), ib.back().p.values()));

  // Flip one sample bit.
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(100);
    char c = 0;
    f.read(&c, 1);
    c ^= 0x01;
    f.seekp(100);
    f.write(&c, 1);
  }
  CHECK_THROWS_AS(read_snapshot_file(path), SnapshotFormatError);

  std::filesystem::resize_file(dir / "ib.bin", std::filesystem::file_size(dir / "ib.bin") - 8);
  CHECK_THROWS_AS(read_snapshot_file(dir / "ib.bin"), SnapshotFormatError);
  CHECK_THROWS_AS(read_snapshot_file(dir / "missing.bin"), std::runtime_error);
}

TEST_CASE("fnv1a64 reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("exported snapshots reproduce the in-memory study") {
  auto cfg = small_config();
  cfg.families = {ModelTag::ch, ModelTag::kdv};
  cfg.workers = 2;
  const auto dir = scratch_dir("export");
  CHECK(export_snapshots(cfg, dir) == 6);
  const auto from_disk = analyse_snapshots(cfg, dir);
  const auto direct = run_decoupling_study(cfg);
  CHECK(records_csv(from_disk) == records_csv(direct));
  REQUIRE(from_disk.size() == direct.size());
  for (std::size_t i = 0; i < direct.size(); ++i) {
    CHECK(from_disk[i].tag == direct[i].tag);
    CHECK(from_disk[i].metrics.size() == direct[i].metrics.size());
  }
  auto other = cfg;
  other.t_end = 3.0;
  CHECK_THROWS_AS(analyse_snapshots(other, dir), std::invalid_argument);
}

TEST_CASE("profiles") {
  const PeriodicGrid g(16.0, 64);
  const auto gauss = make_profile({"gaussian", 2.0, 3.0, 1.0, 0.0}, g, 0);
  CHECK(gauss.values()[g.size() / 2 + 4] == doctest::Approx(2.0 * std::exp(-1.0 / 9.0)));
  const auto sech = make_profile({"sech2", 1.0, 2.0, 0.0, 0.0}, g, 0);
  CHECK(sech.values()[g.size() / 2] == doctest::Approx(1.0));
  const auto minus = make_profile({"minus_u0", 1.0, 1.0, 0.0, 0.0}, g, 0, &gauss);
  CHECK(linf_norm(minus + gauss) == 0.0);
  CHECK_THROWS_AS(make_profile({"minus_u0", 1.0, 1.0, 0.0, 0.0}, g, 0), std::invalid_argument);
  CHECK_THROWS_AS(make_profile({"square", 1.0, 1.0, 0.0, 0.0}, g, 0), std::invalid_argument);

  const ProfileSpec noisy{"zero", 1.0, 1.0, 0.0, 0.25};
  const auto a = make_profile(noisy, g, 7), b = make_profile(noisy, g, 7), c = make_profile(noisy, g, 8);
  CHECK(std::ranges::equal(a.values(), b.values()));
  CHECK(linf_norm(a - c) > 0.0);
  CHECK(linf_norm(a) == doctest::Approx(0.25));
}
