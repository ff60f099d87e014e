#pragma once

#include "shipem/domain.hpp"

namespace shipem::plant {

struct GenState {
  double i_g = 0.0;       // A
  double integral = 0.0;  // DLC integrator of the current error, A*s
  double v_c = 0.0;       // V, shunt-capacitor variant only
};

struct GenStep {
  GenState state;
  double p_actual = 0.0;  // W
};

/// Generator at rest or in steady state at power p (W) on an ideal bus.
GenState steady_gen_state(const GenParams& params, double p, double v_bus);

/// Advances the generator RL circuit by dt under its PI current loop.
/// i_ref = p_cmd / v_bus; the loop adds the r_g*i_ref feedforward.
GenStep step_pgm(const GenParams& params, const GenState& state, double p_cmd, double v_bus,
                 double dt);

/// Shunt-capacitor generator driven directly by its source voltage v_g:
/// l_g di/dt = -r_g i + (v_g - v_c), c_g dv_c/dt = i - i_load. Used by the
/// adaptive voltage controller. Requires params.c_g.
GenState step_dcgen(const GenParams& params, const GenState& state, double v_g, double i_load,
                    double dt);

struct SocState {
  double q = 0.0;
};

struct PcmStep {
  double v_b = 0.0;  // V, controllable source
  double i_b = 0.0;  // A, positive when discharging
  SocState soc;
  bool clamped = false;
};

double open_circuit_voltage(const BattParams& params, double q);

/// Algebraic battery exchange plus one Euler SoC step; SoC is clamped to [0,1]
/// and the clamp is reported. Throws std::invalid_argument if v_bus <= 0.
PcmStep step_pcm(const BattParams& params, const SocState& soc, double p_cmd, double v_bus,
                 double dt);

/// q - (t_s / (capacity * v)) * p_b, unclamped. Shared with the MPC builders.
double soc_discrete_update(double q, double p_b, double t_s, double capacity, double v);

/// T_s/(Q v): SoC change per watt over one step.
double soc_sensitivity(double t_s, double capacity, double v);

struct DegradationState {
  double throughput = 0.0;  // integral of |i_b|^rho
  double q_loss = 0.0;      // A*s
  DegradationParams params;
};

/// zeta1 * exp((-zeta2 + T*C_r) / (R*T)).
double effective_zeta(const DegradationParams& params);

DegradationState update_degradation(const DegradationState& deg, double i_b, double dt);

/// (Q - Q_L)/Q * 100, i.e. remaining capacity in percent.
double capacity_loss_percent(const DegradationState& deg, double capacity);

struct FlywheelState {
  double omega = 0.0;  // rad/s
};

struct FlywheelStep {
  FlywheelState state;
  double p_f = 0.0;    // W
  double soc_f = 0.0;
};

/// Throws std::invalid_argument when |tau_cmd| > tau_max.
FlywheelStep step_flywheel(const FlywheelParams& params, const FlywheelState& state,
                           double tau_cmd, double dt);

double flywheel_energy(const FlywheelParams& params, const FlywheelState& state);

struct StaticLoad {
  double v_l = 0.0;
  double i_l = 0.0;
};

/// Resistive load drawing p_load from the bus through a controlled voltage.
StaticLoad static_load(const LoadParams& params, double p_load, double v_bus);

struct LoadState {
  double i_l = 0.0;
  double integral = 0.0;
};

/// Controllable load: l_L di/dt = -r_L i + v~, with a PI current loop toward p_ref/v_bus.
LoadState step_plm(const LoadParams& params, const LoadState& state, double p_ref, double v_bus,
                   double dt);

}  // namespace shipem::plant
