#pragma once

// Method-of-lines integration of the improved Boussinesq (IB) equation
//
//   u_tt - u_xx - delta^2 u_xxtt - eps (u^2)_xx = 0
//
// and of the unidirectional Camassa-Holm, BBM and KdV models, each in a
// right-moving (+) and a left-moving (-) form.

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ibsplit/spectral.hpp"

namespace ibsplit {

enum class ModelTag { ch, bbm, kdv };
enum class Direction { right, left };

struct ModelFamily {
  ModelTag tag = ModelTag::ch;
  Direction direction = Direction::right;

  // +1 for right-moving, -1 for left-moving.
  double sign() const noexcept { return direction == Direction::right ? 1.0 : -1.0; }
  ModelFamily mirrored() const noexcept {
    return {tag, direction == Direction::right ? Direction::left : Direction::right};
  }
  std::string name() const;  // "CH+", "KDV-", ...

  friend bool operator==(const ModelFamily&, const ModelFamily&) = default;
};

std::string tag_name(ModelTag tag);
ModelTag parse_tag(std::string_view s);
// Accepts "CH+", "bbm-", "KdV+".
ModelFamily parse_family(std::string_view s);

enum class Scheme { rk4, ifrk4 };
std::string scheme_name(Scheme s);
Scheme parse_scheme(std::string_view s);

inline constexpr double default_blowup_cap = 1e6;

// Largest admissible step: min(dx/2, delta/4) for RK4 on IB/CH/BBM and for
// IFRK4 on CH/BBM; dx/2 for IFRK4-KdV; an imaginary-axis RK4 bound for
// explicit KdV. `family` empty means the IB equation.
double max_stable_dt(const PeriodicGrid& grid, const PhysParams& params,
                     std::optional<ModelFamily> family, Scheme scheme);

class StepControl {
 public:
  // Throws std::invalid_argument if dt is non-positive or exceeds dt_bound.
  StepControl(double dt, Scheme scheme, double t_end, std::size_t snapshot_stride, double dt_bound);

  // dt = max_stable_dt(...) for the given equation.
  static StepControl standard(const PeriodicGrid& grid, const PhysParams& params,
                              std::optional<ModelFamily> family, double t_end,
                              std::size_t snapshot_stride);

  double dt() const noexcept { return dt_; }
  Scheme scheme() const noexcept { return scheme_; }
  double t_end() const noexcept { return t_end_; }
  std::size_t snapshot_stride() const noexcept { return stride_; }
  double dt_bound() const noexcept { return bound_; }

  // Steps are uniform of size t_end / n_steps <= dt so the final time is t_end.
  std::size_t n_steps() const noexcept;
  double step() const noexcept;

 private:
  double dt_;
  Scheme scheme_;
  double t_end_;
  std::size_t stride_;
  double bound_;
};

struct WaveState {
  Field w;
  double time = 0.0;
  PhysParams params;
  ModelFamily family;
};

struct IBState {
  Field u;
  Field p;  // u_t
  double time = 0.0;
  PhysParams params;
};

// w_t for the state's model equation.
Field model_rhs(const WaveState& state);
// Public alias of model_rhs: the exact-in-model time derivative.
Field model_time_derivative(const WaveState& state);
// w_tt, from differentiating the model right-hand side along w_t.
Field model_second_time_derivative(const WaveState& state, const Field& w_t);
Field model_second_time_derivative(const WaveState& state);

// Linear part of the model as a Fourier symbol, w_t = L w + N(w).
std::complex<double> model_linear_symbol(const ModelFamily& family, const PhysParams& params, double xi);
// Linear phase speed omega(k)/k of a right-moving (sign +1) or left-moving mode.
double model_phase_speed(const ModelFamily& family, const PhysParams& params, double k);
double ib_phase_speed(const PhysParams& params, double k);

std::vector<WaveState> model_solve(const Field& w0, const PhysParams& params, const ModelFamily& family,
                                   const StepControl& ctrl, double blowup_cap = default_blowup_cap);

// (u_t, u_tt) with u_tt = (1 - delta^2 D_x^2)^{-1} D_x^2 (u + eps u^2).
std::pair<Field, Field> ib_rhs(const IBState& state);

// u_t(x, 0) = (v0)_x.
std::vector<IBState> ib_solve(const Field& u0, const Field& v0, const PhysParams& params,
                              const StepControl& ctrl, double blowup_cap = default_blowup_cap);
// u_t(x, 0) = u1 given directly.
std::vector<IBState> ib_solve_with_velocity(const Field& u0, const Field& u1, const PhysParams& params,
                                            const StepControl& ctrl,
                                            double blowup_cap = default_blowup_cap);

bool blowup_check(const Field& f, double cap = default_blowup_cap) noexcept;

}  // namespace ibsplit
