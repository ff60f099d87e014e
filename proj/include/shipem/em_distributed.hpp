#pragma once

#include <memory>
#include <vector>

#include <Eigen/Core>

#include "shipem/domain.hpp"
#include "shipem/em_central.hpp"
#include "shipem/qp.hpp"

namespace shipem::em {

/// Price of the power-balance rows. lambda is per MW of imbalance.
struct DualState {
  Eigen::VectorXd lambda;
  int iteration = 0;
  double residual = 0.0;  // W
};

/// lambda' = lambda + alpha*(node_sum - p_f)/1e6 with node_sum and p_f in W.
/// The residual becomes ||node_sum - p_f||_inf in W.
DualState dual_update(const DualState& state, const Eigen::VectorXd& node_sum, double p_f,
                      double alpha);

struct PcmNodeResult {
  HorizonProfile p_b;  // W
  HorizonProfile soc;
};

/// argmin (beta/2)||p - p_rated||^2 + lambda'p over the box and ramp rows,
/// powers in MW inside. Throws ConfigError when the rows are infeasible.
HorizonProfile solve_pgm_node(const GenParams& params, const Eigen::VectorXd& lambda,
                              double p_prev);

/// argmin (gamma_p/2)||p||^2 + (gamma_q/2)||q - q0||^2 + lambda'p subject to
/// the SoC chain, SoC box, power box and ramp rows. kappa is the SoC change
/// per W over one step. The SoC term is weighted in the scale soc_scale.
PcmNodeResult solve_pcm_node(const BattParams& params, const Eigen::VectorXd& lambda,
                             double p_prev, double q_meas, double kappa,
                             double soc_scale = 100.0);

/// Dual-ascent coordinator over one QP per generator and battery. Node
/// solvers, and the price, carry over from tick to tick.
class DistributedMpc {
 public:
  explicit DistributedMpc(ScenarioConfig cfg);
  ~DistributedMpc();
  DistributedMpc(DistributedMpc&&) noexcept;
  DistributedMpc& operator=(DistributedMpc&&) noexcept;

  /// Runs dual ascent until the balance residual is within eps_tol or
  /// max_iters is reached. Non-convergence is flagged, not thrown.
  Allocation solve(const Measurements& meas);

  /// Price from the last solve (per MW).
  const Eigen::VectorXd& lambda() const { return lambda_; }
  /// Forces the next solve to start from lambda = 0.
  void reset_price();
  void set_warm_start(bool on) { warm_start_ = on; }

  const ScenarioConfig& config() const { return cfg_; }

 private:
  struct Node;

  ScenarioConfig cfg_;
  std::vector<std::unique_ptr<Node>> nodes_;
  Eigen::VectorXd lambda_;
  bool have_price_ = false;
  bool warm_start_ = true;
};

/// One-shot distributed solve starting from lambda = 0.
Allocation coordinate(const ScenarioConfig& cfg, const Measurements& meas);

}  // namespace shipem::em
