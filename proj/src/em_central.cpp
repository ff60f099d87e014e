#include "shipem/em_central.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "em_rows.hpp"
#include "shipem/plant.hpp"

namespace shipem::em {

using detail::to_mw;

namespace {

// Slack on the balance rows costs this much per MW when the tick is infeasible.
constexpr double kSlackPenalty = 1e6;

void check_measurements(const ScenarioConfig& cfg, const Measurements& meas) {
  if (meas.p_g_prev.size() != cfg.n_gen() || meas.p_b_prev.size() != cfg.n_batt() ||
      meas.q.size() != cfg.n_batt()) {
    throw std::invalid_argument("measurements do not match the device fleet");
  }
}

double max_balance_error(const Allocation& a, double p_load) {
  double worst = 0.0;
  const std::size_t h = a.p_g.empty() ? (a.p_b.empty() ? 0 : a.p_b[0].size()) : a.p_g[0].size();
  for (std::size_t k = 0; k < h; ++k) {
    double sum = 0.0;
    for (const auto& g : a.p_g) sum += g[k];
    for (const auto& b : a.p_b) sum += b[k];
    worst = std::max(worst, std::abs(sum - p_load));
  }
  return worst;
}

}  // namespace

Measurements Measurements::initial(const ScenarioConfig& cfg, double p_load) {
  Measurements m;
  for (const auto& g : cfg.fleet.generators) m.p_g_prev.push_back(g.p_initial);
  for (const auto& b : cfg.fleet.batteries) {
    m.p_b_prev.push_back(b.p_initial);
    m.q.push_back(b.q0);
  }
  m.p_load = p_load;
  return m;
}

std::vector<double> Allocation::gen_commands() const {
  std::vector<double> out;
  for (const auto& g : p_g) out.push_back(g.front());
  return out;
}

std::vector<double> Allocation::batt_commands() const {
  std::vector<double> out;
  for (const auto& b : p_b) out.push_back(b.front());
  return out;
}

Weights scenario_weights(int scenario) {
  switch (scenario) {
    case 1: return {1.0, 0.0, 0.0};
    case 2: return {1.0, 1000.0, 0.0};
    case 3: return {1.0, 0.0, 1000.0};
    default: throw std::invalid_argument("unknown scenario id " + std::to_string(scenario));
  }
}

ScenarioConfig with_weights(ScenarioConfig cfg, const Weights& w) {
  for (auto& g : cfg.fleet.generators) g.beta = w.beta;
  for (auto& b : cfg.fleet.batteries) {
    b.gamma_p = w.gamma_p;
    b.gamma_q = w.gamma_q;
  }
  return cfg;
}

CentralLayout central_layout(const ScenarioConfig& cfg) {
  return {static_cast<int>(cfg.n_gen()), static_cast<int>(cfg.n_batt()), cfg.horizon};
}

double scaled_kappa(const ScenarioConfig& cfg, const BattParams& b) {
  return cfg.em.soc_cost_scale * kWattsPerMegawatt *
         plant::soc_sensitivity(cfg.t_s, b.capacity, cfg.v_bus);
}

qp::QpProblem build_central_qp(const ScenarioConfig& cfg, const Measurements& meas) {
  check_measurements(cfg, meas);
  const CentralLayout lay = central_layout(cfg);
  const int h = lay.horizon;
  const double s = cfg.em.soc_cost_scale;
  const auto n = lay.size();

  qp::QpProblem prob;
  prob.P = Eigen::MatrixXd::Zero(n, n);
  prob.q = Eigen::VectorXd::Zero(n);
  detail::RowBuilder rb(n);

  const double p_load = to_mw(meas.p_load);
  for (int k = 0; k < h; ++k) {
    std::vector<std::pair<Eigen::Index, double>> row;
    for (int i = 0; i < lay.n_gen; ++i) row.push_back({lay.gen(i, k), 1.0});
    for (int j = 0; j < lay.n_batt; ++j) row.push_back({lay.batt(j, k), 1.0});
    rb.add(std::move(row), p_load, p_load);
  }

  for (int i = 0; i < lay.n_gen; ++i) {
    const GenParams& g = cfg.fleet.generators[i];
    const double w = detail::weight_or_reg(g.beta);
    for (int k = 0; k < h; ++k) {
      prob.P(lay.gen(i, k), lay.gen(i, k)) = w;
      prob.q[lay.gen(i, k)] = -g.beta * to_mw(g.p_rated);
    }
    detail::add_power_rows(rb, lay.gen(i, 0), h, to_mw(g.p_min), to_mw(g.p_max), to_mw(g.ramp),
                           to_mw(meas.p_g_prev[i]));
  }

  for (int j = 0; j < lay.n_batt; ++j) {
    const BattParams& b = cfg.fleet.batteries[j];
    const double wp = detail::weight_or_reg(b.gamma_p);
    const double wq = detail::weight_or_reg(b.gamma_q);
    for (int k = 0; k < h; ++k) {
      prob.P(lay.batt(j, k), lay.batt(j, k)) = wp;
      prob.P(lay.soc(j, k), lay.soc(j, k)) = wq;
      prob.q[lay.soc(j, k)] = -b.gamma_q * s * b.q0;
    }
    detail::add_power_rows(rb, lay.batt(j, 0), h, to_mw(b.p_min), to_mw(b.p_max), to_mw(b.ramp),
                           to_mw(meas.p_b_prev[j]));
    detail::add_soc_rows(rb, lay.batt(j, 0), lay.soc(j, 0), h, scaled_kappa(cfg, b),
                         s * meas.q[j], s * b.q_min, s * b.q_max);
  }

  rb.finish(prob);
  return prob;
}

Allocation decode_central(const ScenarioConfig& cfg, const Measurements& meas,
                          const Eigen::VectorXd& x) {
  const CentralLayout lay = central_layout(cfg);
  const int h = lay.horizon;
  Allocation a;
  for (int i = 0; i < lay.n_gen; ++i) {
    HorizonProfile p(h);
    for (int k = 0; k < h; ++k) p[k] = detail::from_mw(x[lay.gen(i, k)]);
    a.p_g.push_back(std::move(p));
  }
  for (int j = 0; j < lay.n_batt; ++j) {
    const BattParams& b = cfg.fleet.batteries[j];
    HorizonProfile p(h);
    HorizonProfile q(h);
    double qk = meas.q[j];
    for (int k = 0; k < h; ++k) {
      p[k] = detail::from_mw(x[lay.batt(j, k)]);
      qk = plant::soc_discrete_update(qk, p[k], cfg.t_s, b.capacity, cfg.v_bus);
      q[k] = qk;
    }
    a.p_b.push_back(std::move(p));
    a.soc.push_back(std::move(q));
  }
  a.balance_residual = max_balance_error(a, meas.p_load);
  return a;
}

CentralMpc::CentralMpc(ScenarioConfig cfg, qp::QpSettings settings)
    : cfg_(std::move(cfg)), settings_(settings) {}

CentralMpc::~CentralMpc() = default;
CentralMpc::CentralMpc(CentralMpc&&) noexcept = default;
CentralMpc& CentralMpc::operator=(CentralMpc&&) noexcept = default;

Allocation CentralMpc::solve(const Measurements& meas) {
  qp::QpProblem prob = build_central_qp(cfg_, meas);
  if (!solver_) {
    solver_ = std::make_unique<qp::QpSolver>(std::move(prob), settings_);
  } else {
    solver_->update_linear_cost(prob.q);
    solver_->update_bounds(prob.l, prob.u);
  }
  const qp::QpSolution sol = solver_->solve();
  if (sol.status != qp::QpStatus::optimal) {
    Allocation a = solve_fallback(meas);
    a.status = sol.status;
    return a;
  }
  Allocation a = decode_central(cfg_, meas, sol.x);
  a.status = sol.status;
  a.iterations = sol.iterations;
  return a;
}

Allocation CentralMpc::solve_fallback(const Measurements& meas) {
  const qp::QpProblem base = build_central_qp(cfg_, meas);
  const int h = cfg_.horizon;
  const Eigen::Index n0 = base.n();
  const Eigen::Index m0 = base.m();
  const Eigen::Index n = n0 + 2 * h;

  // Extra columns: sigma+ then sigma- per step; balance row k becomes
  // sum p + sigma+_k - sigma-_k = p_load.
  qp::QpProblem prob;
  prob.P = Eigen::MatrixXd::Zero(n, n);
  prob.P.topLeftCorner(n0, n0) = base.P;
  prob.P.bottomRightCorner(2 * h, 2 * h).diagonal().setConstant(detail::kRegularization);
  prob.q = Eigen::VectorXd::Constant(n, kSlackPenalty);
  prob.q.head(n0) = base.q;
  prob.A = Eigen::MatrixXd::Zero(m0 + 2 * h, n);
  prob.A.topLeftCorner(m0, n0) = base.A;
  prob.l = Eigen::VectorXd::Zero(m0 + 2 * h);
  prob.u = Eigen::VectorXd::Constant(m0 + 2 * h, std::numeric_limits<double>::infinity());
  prob.l.head(m0) = base.l;
  prob.u.head(m0) = base.u;
  for (int k = 0; k < h; ++k) {
    prob.A(k, n0 + k) = 1.0;
    prob.A(k, n0 + h + k) = -1.0;
    prob.A(m0 + k, n0 + k) = 1.0;
    prob.A(m0 + h + k, n0 + h + k) = 1.0;
  }

  if (!fallback_) {
    qp::QpSettings s = settings_;
    s.max_iters = std::max(s.max_iters, 200000);
    fallback_ = std::make_unique<qp::QpSolver>(std::move(prob), s);
  } else {
    fallback_->update_linear_cost(prob.q);
    fallback_->update_bounds(prob.l, prob.u);
  }
  const qp::QpSolution sol = fallback_->solve();
  if (sol.status == qp::QpStatus::infeasible) {
    throw SimulationFault("EM fallback problem is infeasible; device limits are inconsistent");
  }
  Allocation a = decode_central(cfg_, meas, sol.x.head(n0));
  a.iterations = sol.iterations;
  a.fallback = true;
  return a;
}

Allocation solve_central_mpc(const ScenarioConfig& cfg, const Measurements& meas) {
  CentralMpc mpc(cfg);
  return mpc.solve(meas);
}

}  // namespace shipem::em
