#pragma once

#include <optional>

#include <Eigen/Core>

namespace shipem::dlc {

struct PiState {
  double k_p = 0.0;
  double k_i = 0.0;
  double integral = 0.0;
  // Symmetric anti-windup bound on the integral; none when empty.
  std::optional<double> windup_limit;
};

struct PiOutput {
  double u = 0.0;
  PiState state;
};

/// u = k_p*e + k_i*integral', integral' = integral + e*dt (clamped when bounded).
PiOutput pi_step(const PiState& state, double error, double dt);

/// Parameter-learning voltage controller for a DC generator feeding a shunt
/// capacitor. theta_hat estimates (r_g, l_g).
struct AdaptiveState {
  Eigen::Vector2d theta_hat = Eigen::Vector2d::Zero();
  double eta = 0.0;  // filtered error
  double e = 0.0;    // voltage error v_c - v_ref
  double k = 10.0;
  double alpha = 5.0;
};

struct AdaptiveMeasurement {
  double i_g = 0.0;    // A
  double i_ref = 0.0;  // A, current drawn from the capacitor node
  double v_c = 0.0;    // V
  double v_ref = 0.0;  // V
};

struct AdaptiveOutput {
  double v_g = 0.0;  // commanded source voltage
  AdaptiveState state;
};

/// One forward-Euler step of the adaptive law. The error derivative is
/// reconstructed from the capacitor current balance, c_g*de/dt = i_g - i_ref.
AdaptiveOutput adaptive_dcgen_step(const AdaptiveState& state, const AdaptiveMeasurement& meas,
                                   double c_g, double dt);

/// Regressor row Y = [-i_g, alpha*(i_g - i_ref)].
Eigen::RowVector2d adaptive_regressor(const AdaptiveMeasurement& meas, double alpha);

/// dq reference current drawing active power p and reactive power q from a
/// grid at voltage v_dq. Throws std::invalid_argument when v_dq is zero.
Eigen::Vector2d dq_current_reference(double p, double q, const Eigen::Vector2d& v_dq);

}  // namespace shipem::dlc
