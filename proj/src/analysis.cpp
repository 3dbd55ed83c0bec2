#include "ibsplit/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace ibsplit {

namespace {

Field dx(const Field& f, int n = 1) { return spectral_derivative(f, n); }

}  // namespace

namespace {

// p ~ (u - v)/2 and m = u - p with p + m == u exactly whenever |v| <= |u|.
// Elsewhere the halves can be coarser than u's last bit and the sum is
// within half an ulp of max(|u|, |v|).
void split_point(double u, double v, double& p, double& m) {
  p = 0.5 * (u - v);
  m = u - p;
  if (p + m == u || u == 0.0) return;
  // Snap p to a multiple of ulp(u) with the parity of u, so u - p is an
  // even multiple of ulp(u) and stays representable.
  int e = 0;
  std::frexp(u, &e);
  const double a = std::ldexp(1.0, e - 53);
  const double parity = std::fmod(u / a, 2.0);
  const double pc = (2.0 * std::nearbyint(0.5 * (p / a - parity)) + parity) * a;
  const double mc = u - pc;
  if (pc + mc == u && u - mc == pc) {
    p = pc;
    m = mc;
  }
}

}  // namespace

std::pair<Field, Field> split_initial_data(const Field& u0, const Field& v0) {
  require_same_grid(u0, v0);
  const std::size_t n = u0.size();
  std::vector<double> plus(n), minus(n);
  for (std::size_t j = 0; j < n; ++j) split_point(u0[j], v0[j], plus[j], minus[j]);
  return {Field(u0.grid(), std::move(plus)), Field(u0.grid(), std::move(minus))};
}

Field initial_rho_t(const Field& u0, const Field& v0, const PhysParams& params) {
  require_same_grid(u0, v0);
  const double e = params.epsilon;
  const double d2 = params.delta * params.delta;
  const Field uv = multiply(u0, v0);
  Field bracket = (-0.5 * d2) * dx(v0, 2) - (0.5 * e) * uv;
  bracket -= (0.375 * e * d2) * (multiply(dx(u0), dx(v0)) - dx(uv, 2));
  return remove_mean(apply_helmholtz_inverse(bracket, params.delta, 1.25));
}

Field initial_r_t(const Field& u0, const Field& v0, const PhysParams& params) {
  return dx(initial_rho_t(u0, v0, params));
}

ErrorState error_state(const IBState& ib, const WaveState& wp, const WaveState& wm) {
  require_same_grid(ib.u, wp.w);
  require_same_grid(ib.u, wm.w);
  const double tol = 1e-9 * std::max(1.0, std::abs(ib.time));
  if (std::abs(ib.time - wp.time) > tol || std::abs(ib.time - wm.time) > tol) {
    std::ostringstream os;
    os << "error_state: snapshot times differ (IB " << ib.time << ", w+ " << wp.time << ", w- " << wm.time << ")";
    throw std::invalid_argument(os.str());
  }
  if (wp.family.direction != Direction::right || wm.family.direction != Direction::left)
    throw std::invalid_argument("error_state: expected a right-moving w+ and a left-moving w-");
  Field r = ib.u - wp.w - wm.w;
  Field r_t = ib.p - model_time_derivative(wp) - model_time_derivative(wm);
  Field rho = antiderivative(r);
  Field rho_t = antiderivative(r_t);
  return {std::move(r), std::move(rho), std::move(r_t), std::move(rho_t), ib.time, ib.params};
}

namespace {

// Right-moving CH residual. The e^2 d^2 bracket carries 3 w (w_x^2 + 2 w w_xx)_x.
Field ch_residual(const Field& w, const Field& wt, const Field& wtt, const PhysParams& p) {
  const double e = p.epsilon;
  const double d2 = p.delta * p.delta;
  const double d4 = d2 * d2;
  const Field wx = dx(w), wxx = dx(w, 2), wxxx = dx(w, 3);
  const Field wxt = dx(wt), wxxt = dx(wt, 2), wxxxt = dx(wt, 3);
  const Field wxxtt = dx(wtt, 2);
  const Field w2 = multiply(w, w);
  const Field pp = multiply(wx, wx) + 2.0 * multiply(w, wxx);
  const Field pp_t = 2.0 * (multiply(wx, wxt) + multiply(wt, wxx) + multiply(w, wxxt));
  const Field g = 3.0 * wxxx + 5.0 * wxxt;
  const Field g_t = 3.0 * wxxxt + 5.0 * wxxtt;
  const Field pp_x = dx(pp), pp_xx = dx(pp, 2), pp_xxx = dx(pp, 3);

  Field f = (e * e / 3.0) * dx(multiply(w, w2));
  f -= (e * e * d2 / 8.0) *
       (3.0 * multiply(w, pp_x) - 3.0 * multiply(w, dx(w2, 3)) + 2.0 * multiply(wxx, dx(w2)) + multiply(wx, dx(w2, 2)));
  f += (d4 / 16.0) * (dx(g_t) - 3.0 * dx(g, 2));
  f += (e * d4 / 32.0) * (3.0 * (dx(pp_t, 2) - 3.0 * pp_xxx) +
                          2.0 * (-3.0 * multiply(w, dx(g, 2)) + 2.0 * multiply(wxx, g) + multiply(wx, dx(g))));
  f += (e * e * d4 / 32.0) * (-9.0 * multiply(w, pp_xxx) + 6.0 * multiply(wxx, pp_x) + 3.0 * multiply(wx, pp_xx));
  return f;
}

Field bbm_residual(const Field& w, const Field& wt, const Field& wtt, const PhysParams& p) {
  const double e = p.epsilon;
  const double d2 = p.delta * p.delta;
  const Field wx = dx(w), wxx = dx(w, 2);
  const Field wxt = dx(wt), wxxt = dx(wt, 2);
  Field f = (e * e / 3.0) * dx(multiply(w, multiply(w, w)));
  f -= (0.25 * e * d2) *
       (6.0 * multiply(w, wxxt) + 2.0 * multiply(wx, wxt) + multiply(wt, wxx) - 9.0 * multiply(wx, wxx));
  f += (d2 * d2 / 16.0) * dx(5.0 * wtt - 12.0 * wxt - 9.0 * wxx, 3);
  return f;
}

Field kdv_residual(const Field& w, const Field& wt, const PhysParams& p) {
  const double e = p.epsilon;
  const double d2 = p.delta * p.delta;
  const Field wx = dx(w);
  Field inner = (e * e / 3.0) * multiply(w, multiply(w, w));
  inner += (0.25 * e * d2) * (-3.0 * multiply(wx, wx) + 4.0 * (multiply(wt, wx) + multiply(w, dx(wt))));
  inner += (0.25 * d2 * d2) * (-1.0 * dx(w, 4) + 2.0 * dx(wt, 3));
  return dx(inner);
}

}  // namespace

Field residual_model(const WaveState& state) {
  const Field wt = model_time_derivative(state);
  const Field wtt = model_second_time_derivative(state, wt);
  // t -> -t for left-moving waves: odd time derivatives change sign.
  const Field wt_signed = state.family.sign() * wt;
  switch (state.family.tag) {
    case ModelTag::ch: return ch_residual(state.w, wt_signed, wtt, state.params);
    case ModelTag::bbm: return bbm_residual(state.w, wt_signed, wtt, state.params);
    case ModelTag::kdv: return kdv_residual(state.w, wt_signed, state.params);
  }
  throw std::logic_error("residual_model: unknown family");
}

Field defining_residual(const WaveState& state) {
  const auto& p = state.params;
  const Field wtt = model_second_time_derivative(state);
  return wtt - dx(state.w, 2) - (p.delta * p.delta) * dx(wtt, 2) - p.epsilon * dx(multiply(state.w, state.w), 2);
}

ResidualReport residual_tilde(const WaveState& wp, const WaveState& wm, double s) {
  require_same_grid(wp.w, wm.w);
  if (std::abs(wp.time - wm.time) > 1e-9 * std::max(1.0, std::abs(wp.time)))
    throw std::invalid_argument("residual_tilde: snapshot times differ");
  if (wp.family.direction != Direction::right || wm.family.direction != Direction::left ||
      wp.family.tag != wm.family.tag)
    throw std::invalid_argument("residual_tilde: need a matching (+, -) model pair");
  ResidualReport rep{residual_model(wp), residual_model(wm),
                     (2.0 * wp.params.epsilon) * dx(multiply(wp.w, wm.w)), Field::zeros(wp.w.grid())};
  rep.f_tilde = rep.f_plus + rep.f_minus - rep.interaction;
  rep.s = s;
  rep.norm_plus = sobolev_norm(rep.f_plus, s);
  rep.norm_minus = sobolev_norm(rep.f_minus, s);
  rep.norm_interaction = sobolev_norm(rep.interaction, s);
  rep.norm_tilde = sobolev_norm(rep.f_tilde, s);
  return rep;
}

EnergyValue energy(const ErrorState& es, const Field& w_tilde, double s) {
  const auto& p = es.params;
  const double nr = sobolev_norm(es.r, s);
  const double nrt = sobolev_norm(es.r_t, s);
  const double nrho_t = sobolev_norm(es.rho_t, s);
  EnergyValue ev;
  ev.quadratic_part = 0.5 * (nrho_t * nrho_t + p.delta * p.delta * nrt * nrt + nr * nr);
  if (p.epsilon != 0.0) {
    ev.epsilon_terms = p.epsilon * sobolev_inner(multiply(w_tilde, es.r), es.r, s) +
                       0.5 * p.epsilon * sobolev_inner(multiply(es.r, es.r), es.r, s);
  }
  ev.e_s_squared = ev.quadratic_part + ev.epsilon_terms;
  if (ev.e_s_squared < 0.0) {
    std::ostringstream os;
    os << "energy: E_s^2 = " << ev.e_s_squared << " < 0 at t=" << es.time;
    throw RegimeViolationError(os.str());
  }
  ev.e_s = std::sqrt(ev.e_s_squared);
  return ev;
}

bool energy_lower_bound_holds(const EnergyValue& ev) noexcept {
  // E^2 >= (2 * quadratic_part) / 4.
  const double slack = 1e-14 * ev.quadratic_part;
  return ev.e_s_squared + slack >= 0.5 * ev.quadratic_part;
}

bool EnergyRateResult::finite() const noexcept {
  return std::isfinite(empirical_c) &&
         std::all_of(ratios.begin(), ratios.end(), [](double r) { return std::isfinite(r); });
}

EnergyRateResult energy_rate_check(std::span<const EnergyTrajectoryPoint> traj) {
  if (traj.size() < 5) throw std::invalid_argument("energy_rate_check: need at least 5 snapshots");
  const double h = traj[1].time - traj[0].time;
  if (!(h > 0.0)) throw std::invalid_argument("energy_rate_check: snapshot times must increase");
  for (std::size_t i = 1; i < traj.size(); ++i) {
    if (std::abs((traj[i].time - traj[i - 1].time) - h) > 1e-9 * std::max(1.0, traj[i].time))
      throw std::invalid_argument("energy_rate_check: snapshots must be uniformly spaced");
  }
  EnergyRateResult out;
  for (const auto& pt : traj) out.sup_f_tilde = std::max(out.sup_f_tilde, pt.f_tilde_norm);
  out.empirical_c = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i + 1 < traj.size(); ++i) {
    const double de = (traj[i + 1].energy.e_s - traj[i - 1].energy.e_s) / (traj[i + 1].time - traj[i - 1].time);
    const double denom = traj[i].epsilon * traj[i].energy.e_s + out.sup_f_tilde;
    double ratio = 0.0;
    if (denom > 0.0)
      ratio = de / denom;
    else if (de != 0.0)
      ratio = de > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    out.times.push_back(traj[i].time);
    out.de_dt.push_back(de);
    out.ratios.push_back(ratio);
    out.empirical_c = std::max(out.empirical_c, ratio);
  }
  return out;
}

bool constants_stable(std::span<const double> cs, double factor) {
  if (cs.empty()) return false;
  std::vector<double> v(cs.begin(), cs.end());
  if (!std::all_of(v.begin(), v.end(), [](double c) { return std::isfinite(c); })) return false;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  const double median = n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  return v.back() < factor * median;
}

double uniform_bound_monitor(std::span<const WaveState> traj, int k, double s) {
  if (k < 1) throw std::invalid_argument("uniform_bound_monitor: k must be >= 1");
  double sup = 0.0;
  for (const auto& st : traj) {
    const double b = sobolev_norm(st.w, s + k) + sobolev_norm(model_time_derivative(st), s + k - 1);
    sup = std::max(sup, b);
  }
  return sup;
}

double validity_window(std::span<const ErrorState> traj, double s) {
  if (traj.empty()) return 0.0;
  for (const auto& es : traj)
    if (sobolev_norm(es.r, s) > 1.0) return es.time;
  return traj.back().time;
}

}  // namespace ibsplit
