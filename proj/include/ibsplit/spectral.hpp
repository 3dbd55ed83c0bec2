#pragma once

// Fourier machinery on the periodic interval [-L, L).
//
// Forward transforms are unnormalised (X_k = sum_j x_j e^{-2 pi i jk/N});
// the inverse divides by N. Only the half spectrum k = 0..N/2 is stored
// since every field is real. Odd-order derivative symbols are zeroed at the
// Nyquist mode so that results stay real.

#include <complex>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "ibsplit/errors.hpp"

namespace ibsplit {

class PeriodicGrid {
 public:
  PeriodicGrid(double half_length, std::size_t n_points);

  double half_length() const noexcept { return data_->half_length; }
  std::size_t size() const noexcept { return data_->n; }
  double dx() const noexcept { return data_->dx; }
  double x(std::size_t j) const noexcept { return -half_length() + dx() * static_cast<double>(j); }

  // xi_k = pi k / L in standard DFT ordering (N entries, k = 0 first).
  std::vector<double> wavenumbers() const;

  // Non-negative wavenumbers for the stored half spectrum (N/2 + 1 entries).
  std::span<const double> half_wavenumbers() const noexcept { return data_->half_xi; }
  std::size_t spectrum_size() const noexcept { return data_->n / 2 + 1; }

  // Modes with index above this are removed by the 2/3 rule.
  std::size_t dealias_cutoff() const noexcept { return data_->n / 3; }

  std::vector<double> nodes() const;

  friend bool operator==(const PeriodicGrid& a, const PeriodicGrid& b) noexcept {
    return a.data_ == b.data_ ||
           (a.data_->n == b.data_->n && a.data_->half_length == b.data_->half_length);
  }

 private:
  struct Data {
    double half_length;
    std::size_t n;
    double dx;
    std::vector<double> half_xi;
  };
  std::shared_ptr<const Data> data_;
};

class Field {
 public:
  Field(PeriodicGrid grid, std::vector<double> values);

  static Field zeros(const PeriodicGrid& grid);
  static Field constant(const PeriodicGrid& grid, double c);
  static Field sample(const PeriodicGrid& grid, const std::function<double(double)>& f);

  const PeriodicGrid& grid() const noexcept { return grid_; }
  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t j) const noexcept { return values_[j]; }

  bool is_finite() const noexcept;
  double mean() const noexcept;

  // f(x) -> f(-x) on the grid (index j -> (N - j) mod N).
  Field reflected() const;

  Field& operator+=(const Field& o);
  Field& operator-=(const Field& o);
  Field& operator*=(double a);

  friend Field operator+(Field a, const Field& b) { return a += b; }
  friend Field operator-(Field a, const Field& b) { return a -= b; }
  friend Field operator*(double a, Field f) { return f *= a; }
  friend Field operator*(Field f, double a) { return f *= a; }
  friend Field operator-(Field f) { return f *= -1.0; }

 private:
  PeriodicGrid grid_;
  std::vector<double> values_;
};

class Spectrum {
 public:
  Spectrum(PeriodicGrid grid, std::vector<std::complex<double>> coeffs);

  const PeriodicGrid& grid() const noexcept { return grid_; }
  std::span<const std::complex<double>> coeffs() const noexcept { return coeffs_; }
  std::span<std::complex<double>> coeffs() noexcept { return coeffs_; }
  std::size_t size() const noexcept { return coeffs_.size(); }

 private:
  PeriodicGrid grid_;
  std::vector<std::complex<double>> coeffs_;
};

struct PhysParams {
  double epsilon = 0.0;
  double delta = 0.0;
  double sobolev_index = 2.0;

  // 0 < eps <= delta <= 1 and s > 1/2.
  bool in_regime() const noexcept;
  // Throws std::invalid_argument when !in_regime().
  void require_regime() const;
};

Spectrum forward(const Field& f);
Field inverse(const Spectrum& s);

void require_same_grid(const Field& a, const Field& b);
void require_finite(const Field& f, const char* what = "field");

// Multiplies the half spectrum by symbol(xi). The Nyquist coefficient is
// kept only when `even_symbol` is true.
Field apply_multiplier(const Field& f, const std::function<std::complex<double>(double)>& symbol,
                       bool even_symbol);

Field spectral_derivative(const Field& f, int order);
Field apply_lambda_s(const Field& f, double s);

// (1 - coeff delta^2 D_x^2)^{-1}; coeff = 5/4 gives Q, coeff = 1 the IB inverse.
Field apply_helmholtz_inverse(const Field& f, double delta, double coeff);
Field apply_helmholtz(const Field& f, double delta, double coeff);

double sobolev_norm(const Field& f, double s);
double sobolev_inner(const Field& f, const Field& g, double s);
double linf_norm(const Field& f) noexcept;

// Tolerance on |mean(f)| used by antiderivative: 1e-10 * N.
double antiderivative_mean_tolerance(const PeriodicGrid& grid) noexcept;
Field antiderivative(const Field& f);
Field remove_mean(const Field& f);

// Pointwise product followed by 2/3-rule truncation.
Field multiply(const Field& a, const Field& b);
Field dealias(const Field& f);

// [Lambda^s, w] g = Lambda^s (w g) - w Lambda^s g, with exact pointwise products.
Field commutator_bracket(const Field& w, const Field& g, double s);

}  // namespace ibsplit
