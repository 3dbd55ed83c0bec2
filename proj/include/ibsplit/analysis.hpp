#pragma once

// Quantities between solver output and the decoupling estimates: the split
// of IB initial data into right/left-moving halves, the error r = u - w+ - w-
// and its antiderivative rho, the residuals obtained by substituting model
// solutions into the IB equation, and the energy functional that controls r.

#include <span>
#include <utility>
#include <vector>

#include "ibsplit/solvers.hpp"

namespace ibsplit {

// (w0+, w0-) = ((u0 - v0)/2, (u0 + v0)/2).
std::pair<Field, Field> split_initial_data(const Field& u0, const Field& v0);

// rho_t(x, 0) = Q { -(d^2/2) v0_xx - (e/2) u0 v0 - (3/8) e d^2 (u0_x v0_x - (u0 v0)_xx) },
// projected to mean zero (rho_t is fixed only up to a constant).
Field initial_rho_t(const Field& u0, const Field& v0, const PhysParams& params);
// r_t(x, 0) = D_x initial_rho_t.
Field initial_r_t(const Field& u0, const Field& v0, const PhysParams& params);

struct ErrorState {
  Field r;
  Field rho;
  Field r_t;
  Field rho_t;
  double time = 0.0;
  PhysParams params;
};

// Times must agree to 1e-9; wp must be right-moving and wm left-moving.
ErrorState error_state(const IBState& ib, const WaveState& wp, const WaveState& wm);

// F with D_x F = w_tt - w_xx - d^2 w_xxtt - e (w^2)_xx for the state's model.
// Time derivatives are expanded by the product rule using the model's own
// w_t and w_tt; left-moving states use the right-moving formula with t -> -t.
Field residual_model(const WaveState& state);
// The defining residual w_tt - w_xx - d^2 w_xxtt - e (w^2)_xx evaluated directly.
Field defining_residual(const WaveState& state);

struct ResidualReport {
  Field f_plus;
  Field f_minus;
  Field interaction;  // 2 e (w+ w-)_x
  Field f_tilde;      // f_plus + f_minus - interaction
  double s = 2.0;
  double norm_plus = 0.0;
  double norm_minus = 0.0;
  double norm_interaction = 0.0;
  double norm_tilde = 0.0;
};

ResidualReport residual_tilde(const WaveState& wp, const WaveState& wm, double s);

struct EnergyValue {
  double e_s = 0.0;
  double e_s_squared = 0.0;
  // (||rho_t||^2 + d^2 ||r_t||^2 + ||r||^2) / 2 in H^s.
  double quadratic_part = 0.0;
  // e <L^s(w~ r), L^s r> + (e/2) <L^s r^2, L^s r>.
  double epsilon_terms = 0.0;
};

// Throws RegimeViolationError when E_s^2 < 0.
EnergyValue energy(const ErrorState& es, const Field& w_tilde, double s);

// E_s^2 >= (||rho_t||^2 + d^2 ||r_t||^2 + ||r||^2) / 4.
bool energy_lower_bound_holds(const EnergyValue& ev) noexcept;

struct EnergyTrajectoryPoint {
  double time = 0.0;
  double epsilon = 0.0;
  EnergyValue energy;
  double f_tilde_norm = 0.0;
};

struct EnergyRateResult {
  double empirical_c = 0.0;  // max over interior snapshots of the ratio
  double sup_f_tilde = 0.0;
  std::vector<double> times;  // interior snapshot times
  std::vector<double> de_dt;  // centred differences of E_s
  std::vector<double> ratios; // de_dt / (e E_s + sup ||F~||)
  bool finite() const noexcept;
};

// Needs >= 5 uniformly spaced points.
EnergyRateResult energy_rate_check(std::span<const EnergyTrajectoryPoint> trajectory);

// max(cs) < factor * median(cs), all entries finite.
bool constants_stable(std::span<const double> cs, double factor = 2.0);

// sup_t ||w||_{H^{s+k}} + ||w_t||_{H^{s+k-1}}, k >= 1.
double uniform_bound_monitor(std::span<const WaveState> trajectory, int k, double s);

// First snapshot time with ||r||_{H^s} > 1, else the last time.
double validity_window(std::span<const ErrorState> trajectory, double s);

}  // namespace ibsplit
