#include "shipem/plant.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "shipem/dlc.hpp"

namespace shipem::plant {

GenState steady_gen_state(const GenParams& params, double p, double v_bus) {
  GenState s;
  s.i_g = p / v_bus;
  s.integral = 0.0;
  s.v_c = params.c_g ? v_bus : 0.0;
  return s;
}

GenStep step_pgm(const GenParams& params, const GenState& state, double p_cmd, double v_bus,
                 double dt) {
  const double i_ref = p_cmd / v_bus;
  const dlc::PiOutput pi =
      dlc::pi_step({params.k_p, params.k_i, state.integral, std::nullopt}, i_ref - state.i_g, dt);
  // Voltage applied across the RL branch.
  const double dv = params.r_g * i_ref + pi.u;

  GenStep out;
  out.state.integral = pi.state.integral;
  out.state.i_g = state.i_g + dt * (-params.r_g * state.i_g + dv) / params.l_g;
  if (params.c_g) {
    const double v_c = state.v_c > 0.0 ? state.v_c : v_bus;
    out.state.v_c = v_c + dt * (state.i_g - i_ref) / *params.c_g;
    out.p_actual = out.state.v_c * out.state.i_g;
  } else {
    out.p_actual = v_bus * out.state.i_g;
  }
  if (!std::isfinite(out.state.i_g) || !std::isfinite(out.state.integral) ||
      !std::isfinite(out.state.v_c) || !std::isfinite(out.p_actual)) {
    throw SimulationFault("generator '" + params.name + "': integration diverged");
  }
  return out;
}

GenState step_dcgen(const GenParams& params, const GenState& state, double v_g, double i_load,
                    double dt) {
  if (!params.c_g) {
    throw std::invalid_argument("generator '" + params.name + "': no shunt capacitor configured");
  }
  GenState out = state;
  out.i_g = state.i_g + dt * (-params.r_g * state.i_g + v_g - state.v_c) / params.l_g;
  out.v_c = state.v_c + dt * (state.i_g - i_load) / *params.c_g;
  if (!std::isfinite(out.i_g) || !std::isfinite(out.v_c)) {
    throw SimulationFault("generator '" + params.name + "': integration diverged");
  }
  return out;
}

double open_circuit_voltage(const BattParams& params, double q) {
  return params.c1 * q + params.c2;
}

PcmStep step_pcm(const BattParams& params, const SocState& soc, double p_cmd, double v_bus,
                 double dt) {
  if (!(v_bus > 0.0)) {
    throw std::invalid_argument("battery '" + params.name + "': invalid bus voltage");
  }
  const double v_oc = open_circuit_voltage(params, soc.q);
  PcmStep out;
  out.v_b = (v_bus * v_bus - p_cmd * params.r_b - v_bus * v_oc) / v_bus;
  out.i_b = (v_bus - out.v_b - v_oc) / params.r_b;
  const double q = soc.q - (dt / params.capacity) * out.i_b;
  out.soc.q = std::clamp(q, 0.0, 1.0);
  out.clamped = out.soc.q != q;
  return out;
}

double soc_sensitivity(double t_s, double capacity, double v) { return t_s / (capacity * v); }

double soc_discrete_update(double q, double p_b, double t_s, double capacity, double v) {
  return q - soc_sensitivity(t_s, capacity, v) * p_b;
}

double effective_zeta(const DegradationParams& p) {
  return p.zeta1 *
         std::exp((-p.zeta2 + p.temperature * p.c_rate) / (p.gas_constant * p.temperature));
}

DegradationState update_degradation(const DegradationState& deg, double i_b, double dt) {
  DegradationState out = deg;
  if (i_b != 0.0) {
    out.throughput += std::pow(std::abs(i_b), deg.params.rho) * dt;
  }
  out.q_loss = effective_zeta(deg.params) * out.throughput;
  return out;
}

double capacity_loss_percent(const DegradationState& deg, double capacity) {
  return (capacity - deg.q_loss) / capacity * 100.0;
}

FlywheelStep step_flywheel(const FlywheelParams& params, const FlywheelState& state,
                           double tau_cmd, double dt) {
  if (std::abs(tau_cmd) > params.tau_max) {
    throw std::invalid_argument("flywheel '" + params.name + "': torque command out of range");
  }
  FlywheelStep out;
  out.state.omega = std::clamp(state.omega + tau_cmd / params.inertia * dt, 0.0, params.omega_max);
  out.p_f = tau_cmd * out.state.omega;
  out.soc_f = out.state.omega * out.state.omega / (params.omega_max * params.omega_max);
  return out;
}

double flywheel_energy(const FlywheelParams& params, const FlywheelState& state) {
  return 0.5 * params.inertia * state.omega * state.omega;
}

StaticLoad static_load(const LoadParams& params, double p_load, double v_bus) {
  StaticLoad out;
  out.v_l = (v_bus * v_bus - p_load * params.r_l) / v_bus;
  out.i_l = (v_bus - out.v_l) / params.r_l;
  return out;
}

LoadState step_plm(const LoadParams& params, const LoadState& state, double p_ref, double v_bus,
                   double dt) {
  const double i_ref = p_ref / v_bus;
  const dlc::PiOutput pi =
      dlc::pi_step({params.k_p, params.k_i, state.integral, std::nullopt}, i_ref - state.i_l, dt);
  const double v_tilde = params.r_l * i_ref + pi.u;
  LoadState out;
  out.integral = pi.state.integral;
  out.i_l = state.i_l + dt * (-params.r_l * state.i_l + v_tilde) / params.l_l;
  if (!std::isfinite(out.i_l)) throw SimulationFault("load: integration diverged");
  return out;
}

}  // namespace shipem::plant
