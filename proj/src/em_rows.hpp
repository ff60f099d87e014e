#pragma once

// Row assembly shared by the centralized and nodal EM problems. Powers are in
// MW and SoC in percent (cfg.em.soc_cost_scale) inside every problem.

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "shipem/domain.hpp"
#include "shipem/qp.hpp"

namespace shipem::em::detail {

class RowBuilder {
 public:
  explicit RowBuilder(Eigen::Index n) : n_(n) {}

  void add(std::vector<std::pair<Eigen::Index, double>> coeffs, double lo, double hi) {
    rows_.push_back(std::move(coeffs));
    l_.push_back(lo);
    u_.push_back(hi);
  }

  Eigen::Index rows() const { return static_cast<Eigen::Index>(rows_.size()); }

  void finish(qp::QpProblem& prob) const {
    const Eigen::Index m = rows();
    prob.A = Eigen::MatrixXd::Zero(m, n_);
    prob.l.resize(m);
    prob.u.resize(m);
    for (Eigen::Index r = 0; r < m; ++r) {
      for (const auto& [col, v] : rows_[r]) prob.A(r, col) += v;
      prob.l[r] = l_[r];
      prob.u[r] = u_[r];
    }
  }

 private:
  Eigen::Index n_;
  std::vector<std::vector<std::pair<Eigen::Index, double>>> rows_;
  std::vector<double> l_;
  std::vector<double> u_;
};

inline double to_mw(double w) { return w / kWattsPerMegawatt; }

// Box and ramp rows for one device occupying columns first..first+h-1. The
// first step merges its box with the ramp window around the previous command.
inline void add_power_rows(RowBuilder& rb, Eigen::Index first, int h, double p_min, double p_max,
                           double ramp, double p_prev) {
  double lo = std::max(p_min, p_prev - ramp);
  double hi = std::min(p_max, p_prev + ramp);
  if (lo > hi) lo = hi = (p_prev - ramp > p_max) ? p_max : p_min;
  rb.add({{first, 1.0}}, lo, hi);
  for (int k = 1; k < h; ++k) {
    rb.add({{first + k, 1.0}}, p_min, p_max);
    rb.add({{first + k, 1.0}, {first + k - 1, -1.0}}, -ramp, ramp);
  }
}

// q_{k+1} = q_k - kappa p_k with q_1 anchored to the measurement, plus the SoC box.
inline void add_soc_rows(RowBuilder& rb, Eigen::Index p_first, Eigen::Index q_first, int h,
                         double kappa, double q_meas, double q_min, double q_max) {
  rb.add({{q_first, 1.0}, {p_first, kappa}}, q_meas, q_meas);
  for (int k = 1; k < h; ++k) {
    rb.add({{q_first + k, 1.0}, {q_first + k - 1, -1.0}, {p_first + k, kappa}}, 0.0, 0.0);
  }
  for (int k = 0; k < h; ++k) rb.add({{q_first + k, 1.0}}, q_min, q_max);
}

// Solver round-off below a nanowatt is reported as exactly zero.
inline double from_mw(double mw) {
  const double w = mw * kWattsPerMegawatt;
  return std::abs(w) < 1e-9 ? 0.0 : w;
}

// Keeps P positive definite when a weight is zero.
inline constexpr double kRegularization = 1e-9;

inline double weight_or_reg(double w) { return w > 0.0 ? w : kRegularization; }

}  // namespace shipem::em::detail
