#include <doctest.h>

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>

#include "ibsplit/solvers.hpp"
#include "support/oracles.hpp"

using namespace ibsplit;
namespace t = ibsplit::testing;

namespace {

constexpr double pi = std::numbers::pi;

const ModelFamily all_families[] = {
    {ModelTag::ch, Direction::right},  {ModelTag::ch, Direction::left},  {ModelTag::bbm, Direction::right},
    {ModelTag::bbm, Direction::left},  {ModelTag::kdv, Direction::right}, {ModelTag::kdv, Direction::left},
};

Scheme default_scheme(const ModelFamily& f) { return f.tag == ModelTag::kdv ? Scheme::ifrk4 : Scheme::rk4; }

StepControl control(const PeriodicGrid& g, const PhysParams& p, std::optional<ModelFamily> f, double t_end,
                    std::size_t stride = 1, std::optional<Scheme> scheme = std::nullopt, double dt = 0.0) {
  const Scheme s = scheme ? *scheme : (f ? default_scheme(*f) : Scheme::rk4);
  const double bound = max_stable_dt(g, p, f, s);
  return StepControl(dt > 0.0 ? dt : bound, s, t_end, stride, bound);
}

std::complex<double> mode_coeff(const Field& f, std::size_t m) { return forward(f).coeffs()[m]; }

}  // namespace

TEST_CASE("family names and parsing") {
  CHECK(ModelFamily{ModelTag::ch, Direction::right}.name() == "CH+");
  CHECK(ModelFamily{ModelTag::kdv, Direction::left}.name() == "KDV-");
  CHECK(parse_family("bbm-") == ModelFamily{ModelTag::bbm, Direction::left});
  CHECK(parse_family("KdV+") == ModelFamily{ModelTag::kdv, Direction::right});
  CHECK_THROWS_AS(parse_family("CH"), std::invalid_argument);
  CHECK_THROWS_AS(parse_family("foo+"), std::invalid_argument);
  CHECK(parse_scheme("ifrk4") == Scheme::ifrk4);
}

TEST_CASE("StepControl") {
  const PeriodicGrid g(64.0, 2048);
  const PhysParams p{0.01, 0.1};
  CHECK(max_stable_dt(g, p, std::nullopt, Scheme::rk4) == doctest::Approx(std::min(0.5 * g.dx(), 0.025)));
  CHECK(max_stable_dt(g, p, ModelFamily{ModelTag::kdv, Direction::right}, Scheme::ifrk4) ==
        doctest::Approx(0.5 * g.dx()));
  CHECK_THROWS_AS(max_stable_dt(g, p, std::nullopt, Scheme::ifrk4), std::invalid_argument);
  CHECK_THROWS_AS(StepControl(0.1, Scheme::rk4, 1.0, 1, 0.05), std::invalid_argument);
  CHECK_THROWS_AS(StepControl(-0.1, Scheme::rk4, 1.0, 1, 0.05), std::invalid_argument);
  CHECK_THROWS_AS(StepControl(0.01, Scheme::rk4, 1.0, 0, 0.05), std::invalid_argument);
  const StepControl c(0.03, Scheme::rk4, 1.0, 1, 0.05);
  CHECK(c.n_steps() == 34);
  CHECK(c.step() * 34 == doctest::Approx(1.0));
  CHECK(c.step() <= 0.03);
}

TEST_CASE("blowup_check") {
  const PeriodicGrid g(pi, 16);
  CHECK_FALSE(blowup_check(Field::zeros(g)));
  std::vector<double> v(16, 0.0);
  v[2] = std::numeric_limits<double>::infinity();
  CHECK(blowup_check(Field(g, v)));
  CHECK(blowup_check(Field::constant(g, 2e6)));
  CHECK(blowup_check(Field::constant(g, 3.0), 2.0));
}

TEST_CASE("zero is a fixed point of every solver") {
  const PeriodicGrid g(16.0, 64);
  const PhysParams p{0.04, 0.2};
  for (const auto& fam : all_families) {
    CHECK(t::max_abs(model_rhs({Field::zeros(g), 0.0, p, fam}).values()) == 0.0);
    const auto traj = model_solve(Field::zeros(g), p, fam, control(g, p, fam, 1.0, 10));
    for (const auto& s : traj) CHECK(t::max_abs(s.w.values()) == 0.0);
    CHECK(traj.back().time == doctest::Approx(1.0));
  }
  const auto [a, b] = ib_rhs({Field::zeros(g), Field::zeros(g), 0.0, p});
  CHECK(t::max_abs(a.values()) == 0.0);
  CHECK(t::max_abs(b.values()) == 0.0);
  const auto ib = ib_solve(Field::zeros(g), Field::zeros(g), p, control(g, p, std::nullopt, 1.0, 10));
  for (const auto& s : ib) CHECK(t::max_abs(s.u.values()) == 0.0);
}

TEST_CASE("ib_rhs") {
  SUBCASE("linear mode") {
    const PeriodicGrid g(pi, 32);
    const PhysParams p{0.0, 0.3};
    const double k = 3.0;
    const Field u = Field::sample(g, [k](double x) { return std::cos(k * x); });
    const auto [ut, utt] = ib_rhs({u, Field::zeros(g), 0.0, p});
    const Field expect = (-k * k / (1.0 + 0.09 * k * k)) * u;
    CHECK(t::max_abs_diff(utt.values(), expect.values()) < 1e-13);
  }
  SUBCASE("dense-matrix oracle at N=64") {
    const PeriodicGrid g(pi, 64);
    const PhysParams p{0.1, 0.3};
    const Field u = Field::sample(g, [](double x) { return std::sin(x); });
    const auto flux = t::axpy(p.epsilon, t::hadamard(u.values(), u.values()), u.values());
    const auto ref = t::apply(t::dense_helmholtz_inverse(g, p.delta, 1.0), t::apply(t::dense_derivative(g, 2), flux));
    const auto [ut, utt] = ib_rhs({u, Field::zeros(g), 0.0, p});
    CHECK(t::max_abs_diff(utt.values(), ref) < 1e-12);
  }
}

TEST_CASE("model_rhs linear dispersion symbols") {
  const PhysParams p{0.0, 0.2};
  for (double k : {0.5, 1.0, 3.0}) {
    const double d2k2 = p.delta * p.delta * k * k;
    CHECK(model_phase_speed({ModelTag::ch, Direction::right}, p, k) ==
          doctest::Approx((1.0 + 0.75 * d2k2) / (1.0 + 1.25 * d2k2)));
    CHECK(model_phase_speed({ModelTag::kdv, Direction::right}, p, k) == doctest::Approx(1.0 - 0.5 * d2k2));
    CHECK(model_phase_speed({ModelTag::ch, Direction::left}, p, k) ==
          doctest::Approx(-(1.0 + 0.75 * d2k2) / (1.0 + 1.25 * d2k2)));
    CHECK(ib_phase_speed(p, k) == doctest::Approx(1.0 / std::sqrt(1.0 + d2k2)));
  }
}

TEST_CASE("linear-regime phase speeds of all seven equations") {
  const PeriodicGrid g(pi, 32);
  const PhysParams p{1e-8, 0.3};
  const double t_end = 5.0;
  const std::size_t m = 2;
  const double k = static_cast<double>(m);
  const Field w0 = Field::sample(g, [k](double x) { return std::cos(k * x); });

  // A travelling mode cos(k(x - c t)) has coefficient c_m(t) = c_m(0) e^{-i k c t}.
  auto phase_error = [&](const Field& w_end, double c) {
    const auto ratio = mode_coeff(w_end, m) / mode_coeff(w0, m);
    const double expected = -k * c * t_end;
    const double mismatch = std::arg(ratio * std::exp(std::complex<double>(0.0, -expected)));
    return std::abs(mismatch) / std::abs(expected);
  };

  for (const auto& fam : all_families) {
    const auto traj = model_solve(w0, p, fam, control(g, p, fam, t_end, 1000));
    const double err = phase_error(traj.back().w, model_phase_speed(fam, p, k));
    INFO(fam.name() << " relative phase-speed error " << err);
    CHECK(err < 1e-5);
  }
  const double c = ib_phase_speed(p, k);
  const Field u1 = Field::sample(g, [k, c](double x) { return k * c * std::sin(k * x); });
  const auto ib = ib_solve_with_velocity(w0, u1, p, control(g, p, std::nullopt, t_end, 1000));
  const double err = phase_error(ib.back().u, c);
  INFO("IB relative phase-speed error " << err);
  CHECK(err < 1e-5);
}

TEST_CASE("epsilon = 0 single mode keeps its amplitude") {
  const PeriodicGrid g(pi, 32);
  const PhysParams p{0.0, 0.1};
  const Field w0 = Field::sample(g, [](double x) { return std::sin(x); });
  for (const auto& fam : all_families) {
    const auto traj = model_solve(w0, p, fam, control(g, p, fam, 10.0, 20));
    const double a0 = std::abs(mode_coeff(w0, 1));
    for (const auto& s : traj) CHECK(std::abs(std::abs(mode_coeff(s.w, 1)) - a0) / a0 < 1e-8);
  }
}

TEST_CASE("IB quadratic energy is conserved when epsilon = 0") {
  const PeriodicGrid g(32.0, 256);
  const PhysParams p{0.0, 0.3};
  const Field u0 = t::gaussian(g, 1.0, 3.0);
  const Field v0 = t::gaussian(g, 0.5, 4.0, 2.0);
  auto quad = [&](const IBState& s) {
    const double a = sobolev_norm(s.p, 0.0);
    const double b = sobolev_norm(spectral_derivative(s.p, 1), 0.0);
    const double c = sobolev_norm(spectral_derivative(s.u, 1), 0.0);
    return 0.5 * (a * a + p.delta * p.delta * b * b + c * c);
  };
  const auto traj = ib_solve(u0, v0, p, control(g, p, std::nullopt, 10.0, 100, Scheme::rk4, 0.02));
  const double e0 = quad(traj.front());
  for (const auto& s : traj) CHECK(std::abs(quad(s) - e0) / e0 < 1e-8);
}

TEST_CASE("mass conservation") {
  const PeriodicGrid g(32.0, 256);
  const PhysParams p{0.09, 0.3};
  const Field w0 = t::gaussian(g, 1.0, 3.0, 1.0) + Field::constant(g, 0.2);
  for (const auto& fam : all_families) {
    const auto traj = model_solve(w0, p, fam, control(g, p, fam, 5.0, 25));
    for (const auto& s : traj) CHECK(std::abs(s.w.mean() - w0.mean()) < 1e-10);
  }
  const Field v0 = t::gaussian(g, 0.5, 4.0);
  const auto ib = ib_solve(w0, v0, p, control(g, p, std::nullopt, 5.0, 25));
  for (const auto& s : ib) CHECK(std::abs(s.u.mean() - w0.mean()) < 1e-10);
}

TEST_CASE("parity between right- and left-moving families") {
  const PeriodicGrid g(32.0, 256);
  const PhysParams p{0.04, 0.2};
  const Field w0 = t::gaussian(g, 1.0, 3.0, 4.0);
  for (ModelTag tag : {ModelTag::ch, ModelTag::bbm, ModelTag::kdv}) {
    const ModelFamily right{tag, Direction::right}, left{tag, Direction::left};
    const auto a = model_solve(w0, p, right, control(g, p, right, 5.0, 50));
    const auto b = model_solve(w0.reflected(), p, left, control(g, p, left, 5.0, 50));
    REQUIRE(a.size() == b.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
      worst = std::max(worst, t::max_abs_diff(a[i].w.values(), b[i].w.reflected().values()));
    INFO(tag_name(tag) << " parity mismatch " << worst);
    CHECK(worst < 1e-9);
  }
}

namespace {

// Terminal-state discrepancies against a fine reference on a 4-point dt
// ladder; returns the fitted order.
template <class Solve>
double dt_order(Solve&& solve, double dt0) {
  const Field ref = solve(dt0 / 32.0);
  std::vector<double> dts, errs;
  for (double dt = dt0; dt > dt0 / 16.0; dt /= 2.0) {
    dts.push_back(dt);
    errs.push_back(t::max_abs_diff(solve(dt).values(), ref.values()));
  }
  return t::loglog_slope(dts, errs);
}

}  // namespace

TEST_CASE("time-step refinement order") {
  const PeriodicGrid g(16.0, 128);
  const PhysParams p{0.16, 0.4};
  // Large enough amplitude that the IFRK4 discrepancies stay above roundoff.
  const Field w0 = t::gaussian(g, 3.0, 2.0);
  const double t_end = 2.0;

  for (const auto& fam : all_families) {
    for (Scheme scheme : {Scheme::rk4, Scheme::ifrk4}) {
      if (fam.tag == ModelTag::kdv && scheme == Scheme::rk4) continue;
      const double bound = max_stable_dt(g, p, fam, scheme);
      auto solve = [&](double dt) {
        return model_solve(w0, p, fam, StepControl(dt, scheme, t_end, 1u << 20, bound)).back().w;
      };
      const double order = dt_order(solve, std::min(bound, 0.1));
      INFO(fam.name() << " " << scheme_name(scheme) << " order " << order);
      CHECK(std::abs(order - 4.0) < 0.3);
    }
  }
  const double bound = max_stable_dt(g, p, std::nullopt, Scheme::rk4);
  const Field v0 = t::gaussian(g, 0.5, 3.0);
  auto solve = [&](double dt) {
    return ib_solve(w0, v0, p, StepControl(dt, Scheme::rk4, t_end, 1u << 20, bound)).back().u;
  };
  const double order = dt_order(solve, std::min(bound, 0.1));
  INFO("IB order " << order);
  CHECK(std::abs(order - 4.0) < 0.3);
}

TEST_CASE("spectral accuracy in N") {
  const PhysParams p{0.04, 0.2};
  const ModelFamily fam{ModelTag::ch, Direction::right};
  auto run = [&](std::size_t n) {
    const PeriodicGrid g(32.0, n);
    const Field w0 = t::gaussian(g, 1.0, 3.0);
    return model_solve(w0, p, fam, StepControl(0.02, Scheme::rk4, 2.0, 1000, max_stable_dt(g, p, fam, Scheme::rk4)))
        .back()
        .w;
  };
  const Field fine = run(512);
  const Field coarse = run(256);
  double err = 0.0;
  for (std::size_t j = 0; j < 256; ++j) err = std::max(err, std::abs(coarse[j] - fine[2 * j]));
  CHECK(err < 1e-10);
}

TEST_CASE("blow-up aborts carry the time") {
  const PeriodicGrid g(16.0, 64);
  const PhysParams p{0.04, 0.2};
  const ModelFamily fam{ModelTag::ch, Direction::right};
  const Field w0 = t::gaussian(g, 1.0, 2.0);
  try {
    model_solve(w0, p, fam, control(g, p, fam, 1.0), 0.5);
    FAIL("expected BlowUpError");
  } catch (const BlowUpError& e) {
    CHECK(e.time() > 0.0);
  }
  std::vector<double> v(64, 0.0);
  v[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(model_solve(Field(g, v), p, fam, control(g, p, fam, 1.0)), BlownUpFieldError);
}
