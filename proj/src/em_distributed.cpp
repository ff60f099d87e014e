#include "shipem/em_distributed.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <stdexcept>

#include "em_rows.hpp"
#include "shipem/plant.hpp"

namespace shipem::em {

using detail::to_mw;

namespace {

// Divergence guard: stop when the best residual has not improved for this
// many iterations, or the price blows up.
constexpr int kStallIterations = 50;
constexpr double kPriceLimit = 1e12;

qp::QpSettings node_settings() {
  qp::QpSettings s;
  s.eps_abs = 1e-9;
  s.eps_rel = 1e-9;
  return s;
}

qp::QpProblem pgm_node_qp(const GenParams& g, const Eigen::VectorXd& lambda, double p_prev) {
  const int h = static_cast<int>(lambda.size());
  qp::QpProblem prob;
  prob.P = Eigen::MatrixXd::Identity(h, h) * detail::weight_or_reg(g.beta);
  prob.q = lambda.array() - g.beta * to_mw(g.p_rated);
  detail::RowBuilder rb(h);
  detail::add_power_rows(rb, 0, h, to_mw(g.p_min), to_mw(g.p_max), to_mw(g.ramp), to_mw(p_prev));
  rb.finish(prob);
  return prob;
}

// Columns: p (MW) for k = 0..h-1, then q (scaled) for k = 1..h.
qp::QpProblem pcm_node_qp(const BattParams& b, const Eigen::VectorXd& lambda, double p_prev,
                          double q_meas, double kappa, double scale) {
  const int h = static_cast<int>(lambda.size());
  qp::QpProblem prob;
  prob.P = Eigen::MatrixXd::Zero(2 * h, 2 * h);
  prob.P.diagonal().head(h).setConstant(detail::weight_or_reg(b.gamma_p));
  prob.P.diagonal().tail(h).setConstant(detail::weight_or_reg(b.gamma_q));
  prob.q.resize(2 * h);
  prob.q.head(h) = lambda;
  prob.q.tail(h).setConstant(-b.gamma_q * scale * b.q0);
  detail::RowBuilder rb(2 * h);
  detail::add_power_rows(rb, 0, h, to_mw(b.p_min), to_mw(b.p_max), to_mw(b.ramp), to_mw(p_prev));
  detail::add_soc_rows(rb, 0, h, h, scale * kappa * kWattsPerMegawatt, scale * q_meas,
                       scale * b.q_min, scale * b.q_max);
  rb.finish(prob);
  return prob;
}

HorizonProfile power_profile(const Eigen::VectorXd& x, int h) {
  HorizonProfile p(h);
  for (int k = 0; k < h; ++k) p[k] = detail::from_mw(x[k]);
  return p;
}

HorizonProfile soc_profile(const HorizonProfile& p, double q_meas, double kappa) {
  HorizonProfile q(p.size());
  double qk = q_meas;
  for (std::size_t k = 0; k < p.size(); ++k) {
    qk -= kappa * p[k];
    q[k] = qk;
  }
  return q;
}

void require_solved(const qp::QpSolution& sol, const std::string& who) {
  if (sol.status == qp::QpStatus::infeasible) {
    throw ConfigError(who + ": box and ramp limits admit no feasible profile");
  }
}

}  // namespace

DualState dual_update(const DualState& state, const Eigen::VectorXd& node_sum, double p_f,
                      double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("dual_update: alpha must be positive");
  if (node_sum.size() != state.lambda.size()) {
    throw std::invalid_argument("dual_update: node sum and price lengths differ");
  }
  DualState out;
  const Eigen::VectorXd gap = node_sum.array() - p_f;
  out.lambda = state.lambda + alpha * gap / kWattsPerMegawatt;
  out.iteration = state.iteration + 1;
  out.residual = gap.size() ? gap.lpNorm<Eigen::Infinity>() : 0.0;
  return out;
}

HorizonProfile solve_pgm_node(const GenParams& params, const Eigen::VectorXd& lambda,
                              double p_prev) {
  if (!lambda.allFinite()) throw std::invalid_argument("solve_pgm_node: price is not finite");
  const auto sol = qp::solve_qp(pgm_node_qp(params, lambda, p_prev), node_settings());
  require_solved(sol, "generator '" + params.name + "'");
  return power_profile(sol.x, static_cast<int>(lambda.size()));
}

PcmNodeResult solve_pcm_node(const BattParams& params, const Eigen::VectorXd& lambda,
                             double p_prev, double q_meas, double kappa, double soc_scale) {
  if (!lambda.allFinite()) throw std::invalid_argument("solve_pcm_node: price is not finite");
  if (!(kappa > 0.0)) throw std::invalid_argument("solve_pcm_node: kappa must be positive");
  const auto sol =
      qp::solve_qp(pcm_node_qp(params, lambda, p_prev, q_meas, kappa, soc_scale), node_settings());
  require_solved(sol, "battery '" + params.name + "'");
  PcmNodeResult out;
  out.p_b = power_profile(sol.x, static_cast<int>(lambda.size()));
  out.soc = soc_profile(out.p_b, q_meas, kappa);
  return out;
}

struct DistributedMpc::Node {
  bool is_gen = true;
  int index = 0;
  std::unique_ptr<qp::QpSolver> solver;
  HorizonProfile p;
};

DistributedMpc::DistributedMpc(ScenarioConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.n_gen() + cfg_.n_batt() == 0) {
    throw ConfigError("distributed EM needs at least one node");
  }
  for (std::size_t i = 0; i < cfg_.n_gen(); ++i) {
    auto node = std::make_unique<Node>();
    node->is_gen = true;
    node->index = static_cast<int>(i);
    nodes_.push_back(std::move(node));
  }
  for (std::size_t j = 0; j < cfg_.n_batt(); ++j) {
    auto node = std::make_unique<Node>();
    node->is_gen = false;
    node->index = static_cast<int>(j);
    nodes_.push_back(std::move(node));
  }
  lambda_ = Eigen::VectorXd::Zero(cfg_.horizon);
}

DistributedMpc::~DistributedMpc() = default;
DistributedMpc::DistributedMpc(DistributedMpc&&) noexcept = default;
DistributedMpc& DistributedMpc::operator=(DistributedMpc&&) noexcept = default;

void DistributedMpc::reset_price() {
  lambda_.setZero();
  have_price_ = false;
}

Allocation DistributedMpc::solve(const Measurements& meas) {
  if (meas.p_g_prev.size() != cfg_.n_gen() || meas.p_b_prev.size() != cfg_.n_batt() ||
      meas.q.size() != cfg_.n_batt()) {
    throw std::invalid_argument("measurements do not match the device fleet");
  }
  const int h = cfg_.horizon;
  const double scale = cfg_.em.soc_cost_scale;

  // The previous tick's price, advanced one step along the horizon.
  DualState dual;
  dual.lambda = Eigen::VectorXd::Zero(h);
  if (warm_start_ && have_price_) {
    for (int k = 0; k + 1 < h; ++k) dual.lambda[k] = lambda_[k + 1];
    dual.lambda[h - 1] = lambda_[h - 1];
  }

  auto solve_node = [&](Node& node, const Eigen::VectorXd& lambda) {
    qp::QpProblem prob;
    if (node.is_gen) {
      prob = pgm_node_qp(cfg_.fleet.generators[node.index], lambda, meas.p_g_prev[node.index]);
    } else {
      const BattParams& b = cfg_.fleet.batteries[node.index];
      prob = pcm_node_qp(b, lambda, meas.p_b_prev[node.index], meas.q[node.index],
                         plant::soc_sensitivity(cfg_.t_s, b.capacity, cfg_.v_bus), scale);
    }
    if (!node.solver) {
      node.solver = std::make_unique<qp::QpSolver>(std::move(prob), node_settings());
    } else {
      node.solver->update_linear_cost(prob.q);
      node.solver->update_bounds(prob.l, prob.u);
    }
    const qp::QpSolution sol = node.solver->solve();
    require_solved(sol, node.is_gen ? "generator '" + cfg_.fleet.generators[node.index].name + "'"
                                    : "battery '" + cfg_.fleet.batteries[node.index].name + "'");
    node.p = power_profile(sol.x, h);
  };

  const int workers = std::max(1, cfg_.em.workers);
  auto solve_all = [&](const Eigen::VectorXd& lambda) {
    if (workers == 1 || nodes_.size() == 1) {
      for (auto& node : nodes_) solve_node(*node, lambda);
      return;
    }
    std::vector<std::future<void>> jobs;
    const std::size_t chunk = (nodes_.size() + workers - 1) / workers;
    for (std::size_t start = 0; start < nodes_.size(); start += chunk) {
      const std::size_t stop = std::min(nodes_.size(), start + chunk);
      jobs.push_back(std::async(std::launch::async, [&, start, stop] {
        for (std::size_t i = start; i < stop; ++i) solve_node(*nodes_[i], lambda);
      }));
    }
    for (auto& j : jobs) j.get();
  };

  Allocation best;
  double best_residual = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_lambda = dual.lambda;
  int since_best = 0;
  std::vector<double> history;
  bool converged = false;
  int iter = 0;

  while (iter < cfg_.em.max_iters) {
    solve_all(dual.lambda);
    ++iter;
    Eigen::VectorXd node_sum = Eigen::VectorXd::Zero(h);
    for (const auto& node : nodes_) {
      for (int k = 0; k < h; ++k) node_sum[k] += node->p[k];
    }
    const double residual = (node_sum.array() - meas.p_load).abs().maxCoeff();
    history.push_back(residual);

    if (residual < best_residual) {
      best_residual = residual;
      best_lambda = dual.lambda;
      best.p_g.clear();
      best.p_b.clear();
      for (const auto& node : nodes_) (node->is_gen ? best.p_g : best.p_b).push_back(node->p);
      since_best = 0;
    } else if (++since_best >= kStallIterations) {
      break;
    }
    if (residual <= cfg_.em.eps_tol) {
      converged = true;
      break;
    }
    dual = dual_update(dual, node_sum, meas.p_load, cfg_.em.alpha);
    if (!dual.lambda.allFinite() || dual.lambda.cwiseAbs().maxCoeff() > kPriceLimit) break;
  }

  best.soc.clear();
  for (std::size_t j = 0; j < best.p_b.size(); ++j) {
    const BattParams& b = cfg_.fleet.batteries[j];
    best.soc.push_back(
        soc_profile(best.p_b[j], meas.q[j], plant::soc_sensitivity(cfg_.t_s, b.capacity, cfg_.v_bus)));
  }
  best.iterations = iter;
  best.balance_residual = best_residual;
  best.converged = converged;
  best.status = converged ? qp::QpStatus::optimal : qp::QpStatus::max_iters;
  best.residual_history = std::move(history);

  lambda_ = best_lambda;
  have_price_ = true;
  return best;
}

Allocation coordinate(const ScenarioConfig& cfg, const Measurements& meas) {
  DistributedMpc mpc(cfg);
  return mpc.solve(meas);
}

}  // namespace shipem::em
