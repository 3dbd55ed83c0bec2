#include "ibsplit/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace ibsplit {

namespace {

// FFTW planning is not thread-safe, execution with the new-array interface
// is. Plans are created once per size under a lock and live for the process.
class PlanPair {
 public:
  explicit PlanPair(std::size_t n) : n_(n) {
    const int ni = static_cast<int>(n);
    std::vector<double> re(n);
    std::vector<std::complex<double>> sp(n / 2 + 1);
    auto* c = reinterpret_cast<fftw_complex*>(sp.data());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    r2c_ = fftw_plan_dft_r2c_1d(ni, re.data(), c, flags);
    c2r_ = fftw_plan_dft_c2r_1d(ni, c, re.data(), flags);
    if (r2c_ == nullptr || c2r_ == nullptr) throw std::runtime_error("fftw planning failed");
  }
  PlanPair(const PlanPair&) = delete;
  PlanPair& operator=(const PlanPair&) = delete;
  ~PlanPair() {
    fftw_destroy_plan(r2c_);
    fftw_destroy_plan(c2r_);
  }

  void forward(const double* in, std::complex<double>* out) const {
    // r2c does not modify its input with FFTW_ESTIMATE plans.
    fftw_execute_dft_r2c(r2c_, const_cast<double*>(in), reinterpret_cast<fftw_complex*>(out));
  }
  // Destroys `in`.
  void backward(std::complex<double>* in, double* out) const {
    fftw_execute_dft_c2r(c2r_, reinterpret_cast<fftw_complex*>(in), out);
  }

 private:
  std::size_t n_;
  fftw_plan r2c_ = nullptr;
  fftw_plan c2r_ = nullptr;
};

const PlanPair& plans_for(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::unique_ptr<PlanPair>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<PlanPair>(n);
  return *slot;
}

}  // namespace

PeriodicGrid::PeriodicGrid(double half_length, std::size_t n_points) {
  if (!(half_length > 0.0) || !std::isfinite(half_length))
    throw std::invalid_argument("PeriodicGrid: half_length must be positive");
  if (n_points < 8 || n_points % 2 != 0)
    throw std::invalid_argument("PeriodicGrid: n_points must be even and >= 8");
  auto d = std::make_shared<Data>();
  d->half_length = half_length;
  d->n = n_points;
  d->dx = 2.0 * half_length / static_cast<double>(n_points);
  d->half_xi.resize(n_points / 2 + 1);
  for (std::size_t k = 0; k < d->half_xi.size(); ++k)
    d->half_xi[k] = std::numbers::pi * static_cast<double>(k) / half_length;
  data_ = std::move(d);
}

std::vector<double> PeriodicGrid::wavenumbers() const {
  const auto n = static_cast<long>(size());
  std::vector<double> xi(size());
  for (long k = 0; k < n; ++k) {
    const long kk = k < n / 2 ? k : k - n;
    xi[static_cast<std::size_t>(k)] = std::numbers::pi * static_cast<double>(kk) / half_length();
  }
  return xi;
}

std::vector<double> PeriodicGrid::nodes() const {
  std::vector<double> xs(size());
  for (std::size_t j = 0; j < xs.size(); ++j) xs[j] = x(j);
  return xs;
}

Field::Field(PeriodicGrid grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.size() != grid_.size()) throw GridMismatchError("Field: value count != grid size");
}

Field Field::zeros(const PeriodicGrid& grid) { return Field(grid, std::vector<double>(grid.size(), 0.0)); }

Field Field::constant(const PeriodicGrid& grid, double c) {
  return Field(grid, std::vector<double>(grid.size(), c));
}

Field Field::sample(const PeriodicGrid& grid, const std::function<double(double)>& f) {
  std::vector<double> v(grid.size());
  for (std::size_t j = 0; j < v.size(); ++j) v[j] = f(grid.x(j));
  return Field(grid, std::move(v));
}

bool Field::is_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double Field::mean() const noexcept {
  double s = 0.0;
  for (double v : values_) s += v;
  return s / static_cast<double>(values_.size());
}

Field Field::reflected() const {
  const std::size_t n = values_.size();
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j) out[j] = values_[(n - j) % n];
  return Field(grid_, std::move(out));
}

Field& Field::operator+=(const Field& o) {
  if (!(grid_ == o.grid_)) throw GridMismatchError("Field +=: grids differ");
  for (std::size_t j = 0; j < values_.size(); ++j) values_[j] += o.values_[j];
  return *this;
}

Field& Field::operator-=(const Field& o) {
  if (!(grid_ == o.grid_)) throw GridMismatchError("Field -=: grids differ");
  for (std::size_t j = 0; j < values_.size(); ++j) values_[j] -= o.values_[j];
  return *this;
}

Field& Field::operator*=(double a) {
  for (double& v : values_) v *= a;
  return *this;
}

Spectrum::Spectrum(PeriodicGrid grid, std::vector<std::complex<double>> coeffs)
    : grid_(std::move(grid)), coeffs_(std::move(coeffs)) {
  if (coeffs_.size() != grid_.spectrum_size())
    throw GridMismatchError("Spectrum: coefficient count != N/2+1");
}

bool PhysParams::in_regime() const noexcept {
  return epsilon > 0.0 && epsilon <= delta && delta <= 1.0 && sobolev_index > 0.5;
}

void PhysParams::require_regime() const {
  if (in_regime()) return;
  std::ostringstream os;
  os << "parameters outside 0 < eps <= delta <= 1, s > 1/2 (eps=" << epsilon << ", delta=" << delta
     << ", s=" << sobolev_index << ")";
  throw std::invalid_argument(os.str());
}

Spectrum forward(const Field& f) {
  const auto& g = f.grid();
  std::vector<std::complex<double>> c(g.spectrum_size());
  plans_for(g.size()).forward(f.values().data(), c.data());
  return Spectrum(g, std::move(c));
}

Field inverse(const Spectrum& s) {
  const auto& g = s.grid();
  std::vector<std::complex<double>> tmp(s.coeffs().begin(), s.coeffs().end());
  std::vector<double> out(g.size());
  plans_for(g.size()).backward(tmp.data(), out.data());
  const double inv_n = 1.0 / static_cast<double>(g.size());
  for (double& v : out) v *= inv_n;
  return Field(g, std::move(out));
}

void require_same_grid(const Field& a, const Field& b) {
  if (!(a.grid() == b.grid())) throw GridMismatchError("fields live on different grids");
}

void require_finite(const Field& f, const char* what) {
  if (!f.is_finite()) throw BlownUpFieldError(std::string(what) + " contains NaN or Inf");
}

Field apply_multiplier(const Field& f, const std::function<std::complex<double>(double)>& symbol,
                       bool even_symbol) {
  auto s = forward(f);
  auto c = s.coeffs();
  const auto xi = f.grid().half_wavenumbers();
  for (std::size_t k = 0; k < c.size(); ++k) c[k] *= symbol(xi[k]);
  if (!even_symbol) c.back() = 0.0;
  return inverse(s);
}

Field spectral_derivative(const Field& f, int order) {
  if (order < 0) throw std::invalid_argument("spectral_derivative: negative order");
  require_finite(f);
  if (order == 0) return f;
  auto s = forward(f);
  auto c = s.coeffs();
  const auto xi = f.grid().half_wavenumbers();
  // (i xi)^n = i^n xi^n, with i^n cycling 1, i, -1, -i.
  static constexpr std::complex<double> ipow[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  const auto unit = ipow[order % 4];
  for (std::size_t k = 0; k < c.size(); ++k) c[k] *= unit * std::pow(xi[k], order);
  if (order % 2 == 1) c.back() = 0.0;
  return inverse(s);
}

Field apply_lambda_s(const Field& f, double s) {
  require_finite(f);
  if (s == 0.0) return f;
  return apply_multiplier(f, [s](double xi) { return std::pow(1.0 + xi * xi, 0.5 * s); }, true);
}

Field apply_helmholtz_inverse(const Field& f, double delta, double coeff) {
  if (delta < 0.0 || !(coeff > 0.0)) throw std::invalid_argument("apply_helmholtz_inverse: need delta >= 0, coeff > 0");
  const double a = coeff * delta * delta;
  return apply_multiplier(f, [a](double xi) { return 1.0 / (1.0 + a * xi * xi); }, true);
}

Field apply_helmholtz(const Field& f, double delta, double coeff) {
  const double a = coeff * delta * delta;
  return apply_multiplier(f, [a](double xi) { return 1.0 + a * xi * xi; }, true);
}

namespace {

// sum_k w_k (1+xi_k^2)^s conj(F_k) G_k over the half spectrum, with the
// Hermitian multiplicity w_k = 2 except at k = 0 and the Nyquist mode.
// The factor 2L/N^2 makes s = 0 equal the trapezoidal L^2 inner product.
double weighted_sum(const Spectrum& a, const Spectrum& b, double s) {
  const auto& g = a.grid();
  const auto xi = g.half_wavenumbers();
  const auto ca = a.coeffs();
  const auto cb = b.coeffs();
  const std::size_t last = ca.size() - 1;
  double acc = 0.0;
  for (std::size_t k = 0; k < ca.size(); ++k) {
    const double mult = (k == 0 || k == last) ? 1.0 : 2.0;
    const double wgt = s == 0.0 ? 1.0 : std::pow(1.0 + xi[k] * xi[k], s);
    acc += mult * wgt * (std::conj(ca[k]) * cb[k]).real();
  }
  const double n = static_cast<double>(g.size());
  return acc * 2.0 * g.half_length() / (n * n);
}

}  // namespace

double sobolev_norm(const Field& f, double s) {
  require_finite(f);
  const auto sp = forward(f);
  return std::sqrt(std::max(0.0, weighted_sum(sp, sp, s)));
}

double sobolev_inner(const Field& f, const Field& g, double s) {
  require_same_grid(f, g);
  require_finite(f);
  require_finite(g);
  return weighted_sum(forward(f), forward(g), s);
}

double linf_norm(const Field& f) noexcept {
  double m = 0.0;
  for (double v : f.values()) {
    if (std::isnan(v)) return v;
    m = std::max(m, std::abs(v));
  }
  return m;
}

double antiderivative_mean_tolerance(const PeriodicGrid& grid) noexcept {
  return 1e-10 * static_cast<double>(grid.size());
}

Field antiderivative(const Field& f) {
  require_finite(f);
  const double m = f.mean();
  if (std::abs(m) > antiderivative_mean_tolerance(f.grid())) {
    std::ostringstream os;
    os << "antiderivative: field mean " << m << " exceeds tolerance";
    throw NonzeroMeanError(os.str(), m);
  }
  auto s = forward(f);
  auto c = s.coeffs();
  const auto xi = f.grid().half_wavenumbers();
  c[0] = 0.0;
  for (std::size_t k = 1; k < c.size(); ++k) c[k] /= std::complex<double>(0.0, xi[k]);
  c.back() = 0.0;
  return inverse(s);
}

Field remove_mean(const Field& f) {
  const double m = f.mean();
  std::vector<double> v(f.values().begin(), f.values().end());
  for (double& x : v) x -= m;
  return Field(f.grid(), std::move(v));
}

Field dealias(const Field& f) {
  auto s = forward(f);
  auto c = s.coeffs();
  for (std::size_t k = f.grid().dealias_cutoff() + 1; k < c.size(); ++k) c[k] = 0.0;
  return inverse(s);
}

namespace {

Field pointwise(const Field& a, const Field& b) {
  require_same_grid(a, b);
  std::vector<double> v(a.size());
  for (std::size_t j = 0; j < v.size(); ++j) v[j] = a[j] * b[j];
  return Field(a.grid(), std::move(v));
}

}  // namespace

Field multiply(const Field& a, const Field& b) { return dealias(pointwise(a, b)); }

Field commutator_bracket(const Field& w, const Field& g, double s) {
  require_same_grid(w, g);
  require_finite(w);
  require_finite(g);
  return apply_lambda_s(pointwise(w, g), s) - pointwise(w, apply_lambda_s(g, s));
}

}  // namespace ibsplit
