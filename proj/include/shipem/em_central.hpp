#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "shipem/domain.hpp"
#include "shipem/qp.hpp"

namespace shipem::em {

struct Measurements {
  std::vector<double> p_g_prev;  // W, per generator
  std::vector<double> p_b_prev;  // W, per battery
  std::vector<double> q;         // SoC, per battery
  double p_load = 0.0;           // W, held over the horizon

  /// Measurements of a fleet at its configured initial operating point.
  static Measurements initial(const ScenarioConfig& cfg, double p_load);
};

struct Allocation {
  std::vector<HorizonProfile> p_g;  // W
  std::vector<HorizonProfile> p_b;  // W
  std::vector<HorizonProfile> soc;  // q_1..q_h
  qp::QpStatus status = qp::QpStatus::optimal;
  int iterations = 0;               // QP iterations (centralized) or dual iterations
  double balance_residual = 0.0;    // W, max_k |sum p_k - p_load|
  bool fallback = false;            // balance rows were relaxed
  bool converged = true;
  std::vector<double> residual_history;  // W, distributed mode only

  std::vector<double> gen_commands() const;
  std::vector<double> batt_commands() const;
};

struct Weights {
  double beta = 1.0;
  double gamma_p = 0.0;
  double gamma_q = 0.0;

  bool operator==(const Weights&) const = default;
};

/// Scenario 1: no battery heuristic; 2: battery power penalty; 3: SoC penalty.
Weights scenario_weights(int scenario);

/// Copy of cfg with the weights applied to every generator and battery.
ScenarioConfig with_weights(ScenarioConfig cfg, const Weights& w);

/// Column layout of the centralized decision vector.
struct CentralLayout {
  int n_gen = 0;
  int n_batt = 0;
  int horizon = 0;

  Eigen::Index gen(int i, int k) const { return i * horizon + k; }
  Eigen::Index batt(int j, int k) const { return (n_gen + j) * horizon + k; }
  Eigen::Index soc(int j, int k) const { return (n_gen + n_batt + j) * horizon + k; }
  Eigen::Index size() const { return (n_gen + 2 * n_batt) * horizon; }
};

CentralLayout central_layout(const ScenarioConfig& cfg);

/// SoC change per MW over one MPC step, in the optimization's SoC scale.
double scaled_kappa(const ScenarioConfig& cfg, const BattParams& b);

/// Builds the centralized MPC problem. Rows: h balance equalities, then per
/// generator box/ramp rows, then per battery box/ramp rows, SoC chain
/// equalities and SoC box rows. Throws std::invalid_argument when meas does
/// not match the fleet.
qp::QpProblem build_central_qp(const ScenarioConfig& cfg, const Measurements& meas);

/// Maps a solution vector of the centralized problem back to SI units. The
/// SoC profile is recomputed from the battery powers through the SoC chain.
Allocation decode_central(const ScenarioConfig& cfg, const Measurements& meas,
                          const Eigen::VectorXd& x);

/// Receding-horizon controller that keeps its QP solver between ticks.
class CentralMpc {
 public:
  explicit CentralMpc(ScenarioConfig cfg, qp::QpSettings settings = {});
  ~CentralMpc();
  CentralMpc(CentralMpc&&) noexcept;
  CentralMpc& operator=(CentralMpc&&) noexcept;

  Allocation solve(const Measurements& meas);

  const ScenarioConfig& config() const { return cfg_; }

 private:
  Allocation solve_fallback(const Measurements& meas);

  ScenarioConfig cfg_;
  qp::QpSettings settings_;
  std::unique_ptr<qp::QpSolver> solver_;
  std::unique_ptr<qp::QpSolver> fallback_;
};

Allocation solve_central_mpc(const ScenarioConfig& cfg, const Measurements& meas);

}  // namespace shipem::em
