#include "ibsplit/solvers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace ibsplit {

std::string tag_name(ModelTag tag) {
  switch (tag) {
    case ModelTag::ch: return "CH";
    case ModelTag::bbm: return "BBM";
    case ModelTag::kdv: return "KDV";
  }
  return "?";
}

namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

ModelTag parse_tag(std::string_view s) {
  const auto u = upper(s);
  if (u == "CH") return ModelTag::ch;
  if (u == "BBM") return ModelTag::bbm;
  if (u == "KDV") return ModelTag::kdv;
  throw std::invalid_argument("unknown model tag '" + std::string(s) + "'");
}

std::string ModelFamily::name() const { return tag_name(tag) + (direction == Direction::right ? "+" : "-"); }

ModelFamily parse_family(std::string_view s) {
  if (s.empty()) throw std::invalid_argument("empty model family");
  const char last = s.back();
  if (last != '+' && last != '-') throw std::invalid_argument("model family needs a +/- suffix: '" + std::string(s) + "'");
  return {parse_tag(s.substr(0, s.size() - 1)), last == '+' ? Direction::right : Direction::left};
}

std::string scheme_name(Scheme s) { return s == Scheme::rk4 ? "RK4" : "IFRK4"; }

Scheme parse_scheme(std::string_view s) {
  const auto u = upper(s);
  if (u == "RK4") return Scheme::rk4;
  if (u == "IFRK4") return Scheme::ifrk4;
  throw std::invalid_argument("unknown scheme '" + std::string(s) + "'");
}

double max_stable_dt(const PeriodicGrid& grid, const PhysParams& params, std::optional<ModelFamily> family,
                     Scheme scheme) {
  const double half_dx = 0.5 * grid.dx();
  const double regularised = std::min(half_dx, 0.25 * params.delta);
  if (!family) {
    if (scheme != Scheme::rk4) throw std::invalid_argument("the IB equation is integrated with RK4 only");
    return regularised;
  }
  if (family->tag != ModelTag::kdv) return regularised;
  if (scheme == Scheme::ifrk4) return half_dx;
  // Explicit RK4 on KdV: keep dt * max|symbol| inside the imaginary-axis
  // stability interval (|z| <= 2.8) with some margin.
  const double kmax = grid.half_wavenumbers().back();
  const double sym = kmax + 0.5 * params.delta * params.delta * kmax * kmax * kmax +
                     params.epsilon * kmax;
  return std::min(half_dx, 2.5 / sym);
}

StepControl::StepControl(double dt, Scheme scheme, double t_end, std::size_t snapshot_stride, double dt_bound)
    : dt_(dt), scheme_(scheme), t_end_(t_end), stride_(snapshot_stride), bound_(dt_bound) {
  if (!(dt > 0.0)) throw std::invalid_argument("StepControl: dt must be positive");
  if (!(t_end > 0.0)) throw std::invalid_argument("StepControl: t_end must be positive");
  if (snapshot_stride == 0) throw std::invalid_argument("StepControl: snapshot_stride must be positive");
  if (dt > dt_bound * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "StepControl: dt=" << dt << " exceeds the stability bound " << dt_bound;
    throw std::invalid_argument(os.str());
  }
}

StepControl StepControl::standard(const PeriodicGrid& grid, const PhysParams& params,
                                  std::optional<ModelFamily> family, double t_end,
                                  std::size_t snapshot_stride) {
  const Scheme scheme = (family && family->tag == ModelTag::kdv) ? Scheme::ifrk4 : Scheme::rk4;
  const double bound = max_stable_dt(grid, params, family, scheme);
  return StepControl(bound, scheme, t_end, snapshot_stride, bound);
}

std::size_t StepControl::n_steps() const noexcept {
  return static_cast<std::size_t>(std::max(1.0, std::ceil(t_end_ / dt_ - 1e-9)));
}

double StepControl::step() const noexcept { return t_end_ / static_cast<double>(n_steps()); }

// ---------------------------------------------------------------------------
// Model right-hand sides.
//
// CH(+):  (1 - 5/4 d^2 D^2) w_t = -D [ w + e/2 w^2 - 3/4 d^2 w_xx
//                                     - 3/4 e d^2 (w_x^2 / 2 + w w_xx) ]
// using 2 w_x w_xx + w w_xxx = D(w_x^2 / 2 + w w_xx). BBM drops the e d^2
// bracket; KdV(+) is w_t = -D [ w + e/2 w^2 + d^2/2 w_xx ]. The (-) forms
// flip the sign of the whole right-hand side.

namespace {

Field q_dx(const Field& f, double delta) {
  const double a = 1.25 * delta * delta;
  return apply_multiplier(f, [a](double xi) { return std::complex<double>(0.0, xi / (1.0 + a * xi * xi)); }, false);
}

// The bracket whose x-derivative drives w_t, split into linear and
// nonlinear parts so IFRK4 can reuse the nonlinear half.
Field nonlinear_flux(const Field& w, const PhysParams& p, ModelTag tag) {
  const double e = p.epsilon;
  const double d2 = p.delta * p.delta;
  Field flux = 0.5 * e * multiply(w, w);
  if (tag == ModelTag::ch && e != 0.0) {
    const Field wx = spectral_derivative(w, 1);
    const Field wxx = spectral_derivative(w, 2);
    flux -= (0.75 * e * d2) * (0.5 * multiply(wx, wx) + multiply(w, wxx));
  }
  return flux;
}

Field linear_flux(const Field& w, const PhysParams& p, ModelTag tag) {
  const double d2 = p.delta * p.delta;
  const double c = tag == ModelTag::kdv ? 0.5 * d2 : -0.75 * d2;
  return w + c * spectral_derivative(w, 2);
}

Field flux_to_rhs(const Field& flux, const PhysParams& p, const ModelFamily& fam) {
  const Field d = fam.tag == ModelTag::kdv ? spectral_derivative(flux, 1) : q_dx(flux, p.delta);
  return -fam.sign() * d;
}

void require_model_state(const WaveState& s) {
  require_finite(s.w, "model state");
  if (!(s.params.delta >= 0.0) || !(s.params.epsilon >= 0.0))
    throw std::invalid_argument("model state: epsilon and delta must be non-negative");
}

}  // namespace

Field model_rhs(const WaveState& state) {
  require_model_state(state);
  const auto& p = state.params;
  return flux_to_rhs(linear_flux(state.w, p, state.family.tag) + nonlinear_flux(state.w, p, state.family.tag), p,
                     state.family);
}

Field model_time_derivative(const WaveState& state) { return model_rhs(state); }

Field model_second_time_derivative(const WaveState& state, const Field& w_t) {
  require_model_state(state);
  require_same_grid(state.w, w_t);
  const auto& p = state.params;
  const auto tag = state.family.tag;
  const double e = p.epsilon;
  const double d2 = p.delta * p.delta;
  // Directional derivative of the flux along w_t.
  Field flux = linear_flux(w_t, p, tag) + e * multiply(state.w, w_t);
  if (tag == ModelTag::ch && e != 0.0) {
    const Field wx = spectral_derivative(state.w, 1);
    const Field wxx = spectral_derivative(state.w, 2);
    const Field wtx = spectral_derivative(w_t, 1);
    const Field wtxx = spectral_derivative(w_t, 2);
    flux -= (0.75 * e * d2) * (multiply(wx, wtx) + multiply(w_t, wxx) + multiply(state.w, wtxx));
  }
  return flux_to_rhs(flux, p, state.family);
}

Field model_second_time_derivative(const WaveState& state) {
  return model_second_time_derivative(state, model_rhs(state));
}

std::complex<double> model_linear_symbol(const ModelFamily& family, const PhysParams& params, double xi) {
  const double d2 = params.delta * params.delta;
  const double x2 = xi * xi;
  double omega = 0.0;  // w_t = -i * sign * omega(xi) w
  if (family.tag == ModelTag::kdv)
    omega = xi * (1.0 - 0.5 * d2 * x2);
  else
    omega = xi * (1.0 + 0.75 * d2 * x2) / (1.0 + 1.25 * d2 * x2);
  return {0.0, -family.sign() * omega};
}

double model_phase_speed(const ModelFamily& family, const PhysParams& params, double k) {
  return -model_linear_symbol(family, params, k).imag() / k;
}

double ib_phase_speed(const PhysParams& params, double k) {
  return 1.0 / std::sqrt(1.0 + params.delta * params.delta * k * k);
}

bool blowup_check(const Field& f, double cap) noexcept {
  if (!f.is_finite()) return true;
  return linf_norm(f) > cap;
}

namespace {

[[noreturn]] void abort_blowup(const char* what, double t) {
  std::ostringstream os;
  os << what << " blew up at t=" << t;
  throw BlowUpError(os.str(), t);
}

bool snapshot_due(std::size_t step, std::size_t n, std::size_t stride) { return step % stride == 0 || step == n; }

std::vector<WaveState> solve_rk4(const Field& w0, const PhysParams& params, const ModelFamily& family,
                                 const StepControl& ctrl, double cap) {
  const std::size_t n = ctrl.n_steps();
  const double h = ctrl.step();
  auto rhs = [&](const Field& w) { return model_rhs(WaveState{w, 0.0, params, family}); };
  std::vector<WaveState> out;
  out.push_back({w0, 0.0, params, family});
  Field w = w0;
  for (std::size_t i = 1; i <= n; ++i) {
    const Field k1 = rhs(w);
    const Field k2 = rhs(w + (0.5 * h) * k1);
    const Field k3 = rhs(w + (0.5 * h) * k2);
    const Field k4 = rhs(w + h * k3);
    w += (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4);
    const double t = h * static_cast<double>(i);
    if (blowup_check(w, cap)) abort_blowup(family.name().c_str(), t);
    if (snapshot_due(i, n, ctrl.snapshot_stride())) out.push_back({w, t, params, family});
  }
  return out;
}

// Integrating-factor RK4: v = e^{-Lt} w_hat is stepped with classical RK4,
// so the linear part is propagated exactly mode by mode.
std::vector<WaveState> solve_ifrk4(const Field& w0, const PhysParams& params, const ModelFamily& family,
                                   const StepControl& ctrl, double cap) {
  const auto& grid = w0.grid();
  const std::size_t n = ctrl.n_steps();
  const double h = ctrl.step();
  const auto xi = grid.half_wavenumbers();
  const std::size_t m = grid.spectrum_size();

  std::vector<std::complex<double>> e_half(m), e_full(m);
  for (std::size_t k = 0; k < m; ++k) {
    const auto l = (k + 1 == m) ? std::complex<double>(0.0) : model_linear_symbol(family, params, xi[k]);
    e_half[k] = std::exp(0.5 * h * l);
    e_full[k] = e_half[k] * e_half[k];
  }

  auto nonlinear = [&](const std::vector<std::complex<double>>& c) {
    const Field w = inverse(Spectrum(grid, c));
    const Field r = flux_to_rhs(nonlinear_flux(w, params, family.tag), params, family);
    const auto s = forward(r);
    return std::vector<std::complex<double>>(s.coeffs().begin(), s.coeffs().end());
  };
  auto combine = [m](const std::vector<std::complex<double>>& a, const std::vector<std::complex<double>>& f1,
                     const std::vector<std::complex<double>>& b, double s) {
    std::vector<std::complex<double>> out(m);
    for (std::size_t k = 0; k < m; ++k) out[k] = f1[k] * (a[k] + s * b[k]);
    return out;
  };

  const auto s0 = forward(w0);
  std::vector<std::complex<double>> c(s0.coeffs().begin(), s0.coeffs().end());
  std::vector<WaveState> out;
  out.push_back({w0, 0.0, params, family});
  for (std::size_t i = 1; i <= n; ++i) {
    const auto a = nonlinear(c);
    const auto b = nonlinear(combine(c, e_half, a, 0.5 * h));
    std::vector<std::complex<double>> ec(m);
    for (std::size_t k = 0; k < m; ++k) ec[k] = e_half[k] * c[k];
    std::vector<std::complex<double>> arg(m);
    for (std::size_t k = 0; k < m; ++k) arg[k] = ec[k] + 0.5 * h * b[k];
    const auto cc = nonlinear(arg);
    for (std::size_t k = 0; k < m; ++k) arg[k] = e_full[k] * c[k] + h * e_half[k] * cc[k];
    const auto d = nonlinear(arg);
    for (std::size_t k = 0; k < m; ++k)
      c[k] = e_full[k] * c[k] + (h / 6.0) * (e_full[k] * a[k] + 2.0 * e_half[k] * (b[k] + cc[k]) + d[k]);
    const double t = h * static_cast<double>(i);
    Field w = inverse(Spectrum(grid, c));
    if (blowup_check(w, cap)) abort_blowup(family.name().c_str(), t);
    if (snapshot_due(i, n, ctrl.snapshot_stride())) out.push_back({std::move(w), t, params, family});
  }
  return out;
}

}  // namespace

std::vector<WaveState> model_solve(const Field& w0, const PhysParams& params, const ModelFamily& family,
                                   const StepControl& ctrl, double blowup_cap) {
  require_finite(w0, "initial data");
  if (ctrl.scheme() == Scheme::ifrk4) return solve_ifrk4(w0, params, family, ctrl, blowup_cap);
  return solve_rk4(w0, params, family, ctrl, blowup_cap);
}

std::pair<Field, Field> ib_rhs(const IBState& state) {
  require_finite(state.u, "IB displacement");
  require_finite(state.p, "IB velocity");
  require_same_grid(state.u, state.p);
  const auto& p = state.params;
  const double a = p.delta * p.delta;
  const Field flux = state.u + p.epsilon * multiply(state.u, state.u);
  // (1 - a D^2)^{-1} D^2 has symbol -xi^2 / (1 + a xi^2).
  Field acc = apply_multiplier(flux, [a](double xi) { return -xi * xi / (1.0 + a * xi * xi); }, true);
  return {state.p, std::move(acc)};
}

std::vector<IBState> ib_solve_with_velocity(const Field& u0, const Field& u1, const PhysParams& params,
                                            const StepControl& ctrl, double blowup_cap) {
  require_finite(u0, "IB u0");
  require_finite(u1, "IB u1");
  require_same_grid(u0, u1);
  if (ctrl.scheme() != Scheme::rk4) throw std::invalid_argument("ib_solve: only RK4 is supported");
  const std::size_t n = ctrl.n_steps();
  const double h = ctrl.step();
  auto rhs = [&](const Field& u, const Field& v) { return ib_rhs(IBState{u, v, 0.0, params}); };

  std::vector<IBState> out;
  out.push_back({u0, u1, 0.0, params});
  Field u = u0;
  Field v = u1;
  for (std::size_t i = 1; i <= n; ++i) {
    const auto [ku1, kv1] = rhs(u, v);
    const auto [ku2, kv2] = rhs(u + (0.5 * h) * ku1, v + (0.5 * h) * kv1);
    const auto [ku3, kv3] = rhs(u + (0.5 * h) * ku2, v + (0.5 * h) * kv2);
    const auto [ku4, kv4] = rhs(u + h * ku3, v + h * kv3);
    u += (h / 6.0) * (ku1 + 2.0 * (ku2 + ku3) + ku4);
    v += (h / 6.0) * (kv1 + 2.0 * (kv2 + kv3) + kv4);
    const double t = h * static_cast<double>(i);
    if (blowup_check(u, blowup_cap) || !v.is_finite()) abort_blowup("IB", t);
    if (snapshot_due(i, n, ctrl.snapshot_stride())) out.push_back({u, v, t, params});
  }
  return out;
}

std::vector<IBState> ib_solve(const Field& u0, const Field& v0, const PhysParams& params, const StepControl& ctrl,
                              double blowup_cap) {
  require_finite(v0, "IB v0");
  return ib_solve_with_velocity(u0, spectral_derivative(v0, 1), params, ctrl, blowup_cap);
}

}  // namespace ibsplit
