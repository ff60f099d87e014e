#include "shipem/dlc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace shipem::dlc {

PiOutput pi_step(const PiState& state, double error, double dt) {
  PiOutput out;
  out.state = state;
  double integral = state.integral + error * dt;
  if (state.windup_limit) {
    const double lim = std::abs(*state.windup_limit);
    integral = std::clamp(integral, -lim, lim);
  }
  out.state.integral = integral;
  out.u = state.k_p * error + state.k_i * integral;
  return out;
}

Eigen::RowVector2d adaptive_regressor(const AdaptiveMeasurement& meas, double alpha) {
  return {-meas.i_g, alpha * (meas.i_g - meas.i_ref)};
}

AdaptiveOutput adaptive_dcgen_step(const AdaptiveState& state, const AdaptiveMeasurement& meas,
                                   double c_g, double dt) {
  AdaptiveOutput out;
  out.state = state;
  const double e = meas.v_c - meas.v_ref;
  const double e_dot = (meas.i_g - meas.i_ref) / c_g;
  const double eta = e_dot + state.alpha * e;
  const Eigen::RowVector2d y = adaptive_regressor(meas, state.alpha);

  out.v_g = meas.v_c - y.dot(state.theta_hat) - state.k * eta;
  out.state.theta_hat = state.theta_hat + y.transpose() * eta * dt;
  out.state.e = e;
  out.state.eta = eta;
  return out;
}

Eigen::Vector2d dq_current_reference(double p, double q, const Eigen::Vector2d& v_dq) {
  const double norm2 = v_dq.squaredNorm();
  if (!(norm2 > 0.0)) {
    throw std::invalid_argument("dq_current_reference: grid voltage is zero");
  }
  Eigen::Matrix2d m;
  m << v_dq.x(), -v_dq.y(), v_dq.y(), v_dq.x();
  return m * Eigen::Vector2d(p, q) / norm2;
}

}  // namespace shipem::dlc
