#include "shipem/qp.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <Eigen/LU>

namespace shipem::qp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double inf_norm(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

struct Residuals {
  double prim = 0.0;
  double dual = 0.0;
  double eps_prim = 0.0;
  double eps_dual = 0.0;
};

Residuals unscaled_residuals(const QpProblem& p, const Eigen::VectorXd& x, const Eigen::VectorXd& z,
                             const Eigen::VectorXd& y, double eps_abs, double eps_rel) {
  Residuals r;
  const Eigen::VectorXd ax = p.A * x;
  const Eigen::VectorXd px = p.P * x;
  const Eigen::VectorXd aty = p.A.transpose() * y;
  r.prim = inf_norm(ax - z);
  r.dual = inf_norm(px + p.q + aty);
  r.eps_prim = eps_abs + eps_rel * std::max(inf_norm(ax), inf_norm(z));
  r.eps_dual = eps_abs + eps_rel * std::max({inf_norm(px), inf_norm(aty), inf_norm(p.q)});
  return r;
}

}  // namespace

const char* to_string(QpStatus status) {
  switch (status) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::max_iters: return "max_iters";
    case QpStatus::infeasible: return "infeasible";
  }
  return "unknown";
}

void check_problem(const QpProblem& p) {
  const auto n = p.q.size();
  const auto m = p.l.size();
  if (p.P.rows() != n || p.P.cols() != n) throw std::invalid_argument("qp: P must be n x n");
  if (p.A.rows() != m || p.A.cols() != n) throw std::invalid_argument("qp: A must be m x n");
  if (p.u.size() != m) throw std::invalid_argument("qp: l and u differ in length");
  for (Eigen::Index i = 0; i < m; ++i) {
    if (std::isnan(p.l[i]) || std::isnan(p.u[i]) || p.l[i] > p.u[i]) {
      throw std::invalid_argument("qp: bounds must satisfy l <= u (row " + std::to_string(i) + ")");
    }
  }
  const double asym = n == 0 ? 0.0 : (p.P - p.P.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * std::max(1.0, p.P.cwiseAbs().maxCoeff())) {
    throw std::invalid_argument("qp: P is not symmetric");
  }
}

Eigen::VectorXd project_box(const Eigen::VectorXd& x, const Eigen::VectorXd& l,
                            const Eigen::VectorXd& u) {
  return x.cwiseMax(l).cwiseMin(u);
}

QpSolver::QpSolver(QpProblem problem, QpSettings settings)
    : problem_(std::move(problem)), settings_(settings) {
  check_problem(problem_);
  if (!(settings_.rho > 0.0) || !(settings_.sigma > 0.0)) {
    throw std::invalid_argument("qp: rho and sigma must be positive");
  }
  const auto m = problem_.m();
  row_scale_ = Eigen::VectorXd::Ones(m);
  if (settings_.scale_rows) {
    for (Eigen::Index i = 0; i < m; ++i) {
      const double nrm = problem_.A.row(i).norm();
      if (nrm > 0.0) row_scale_[i] = 1.0 / nrm;
    }
  }
  a_scaled_ = row_scale_.asDiagonal() * problem_.A;
  rho_ = settings_.rho;
  factorize();
  reset();
}

void QpSolver::set_rho_vector() {
  const auto m = problem_.m();
  rho_vec_.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double l = problem_.l[i];
    const double u = problem_.u[i];
    if (l == -kInf && u == kInf) {
      rho_vec_[i] = 1e-6;
    } else if (l == u) {
      rho_vec_[i] = 1e3 * rho_;
    } else {
      rho_vec_[i] = rho_;
    }
  }
}

void QpSolver::factorize() {
  set_rho_vector();
  Eigen::MatrixXd k = problem_.P;
  k.diagonal().array() += settings_.sigma;
  k.noalias() += a_scaled_.transpose() * rho_vec_.asDiagonal() * a_scaled_;
  kkt_.compute(k);
  if (kkt_.info() != Eigen::Success) {
    throw std::invalid_argument("qp: P + sigma I + A'RA is not positive definite");
  }
}

void QpSolver::reset() {
  x_ = Eigen::VectorXd::Zero(problem_.n());
  z_ = Eigen::VectorXd::Zero(problem_.m());
  y_ = Eigen::VectorXd::Zero(problem_.m());
}

void QpSolver::update_linear_cost(const Eigen::VectorXd& q) {
  if (q.size() != problem_.n()) throw std::invalid_argument("qp: q has the wrong length");
  problem_.q = q;
}

void QpSolver::update_bounds(const Eigen::VectorXd& l, const Eigen::VectorXd& u) {
  if (l.size() != problem_.m() || u.size() != problem_.m()) {
    throw std::invalid_argument("qp: bounds have the wrong length");
  }
  // Equality pattern decides rho per row, so a change forces a refactorization.
  bool pattern_changed = false;
  for (Eigen::Index i = 0; i < l.size(); ++i) {
    if (std::isnan(l[i]) || std::isnan(u[i]) || l[i] > u[i]) {
      throw std::invalid_argument("qp: bounds must satisfy l <= u (row " + std::to_string(i) + ")");
    }
    const bool was_eq = problem_.l[i] == problem_.u[i];
    const bool is_eq = l[i] == u[i];
    const bool was_free = problem_.l[i] == -kInf && problem_.u[i] == kInf;
    const bool is_free = l[i] == -kInf && u[i] == kInf;
    if (was_eq != is_eq || was_free != is_free) pattern_changed = true;
  }
  problem_.l = l;
  problem_.u = u;
  if (pattern_changed) factorize();
}

QpSolution QpSolver::solve() {
  const QpProblem& p = problem_;
  const auto n = p.n();
  const auto m = p.m();
  const double alpha = settings_.relaxation;
  const double sigma = settings_.sigma;
  const Eigen::VectorXd l_s = row_scale_.cwiseProduct(p.l);
  const Eigen::VectorXd u_s = row_scale_.cwiseProduct(p.u);
  const Eigen::VectorXd d_inv = row_scale_.cwiseInverse();

  QpSolution sol;
  if (settings_.record_history) sol.residual_history.reserve(256);

  Eigen::VectorXd x_tilde(n), z_tilde(m), rhs(n), z_prev(m), y_prev(m), dy(m);
  double best = kInf;
  Eigen::VectorXd best_x = x_, best_z = z_, best_y = y_;
  Residuals best_res;

  for (int k = 1; k <= settings_.max_iters; ++k) {
    rhs = sigma * x_ - p.q;
    rhs.noalias() += a_scaled_.transpose() * (rho_vec_.cwiseProduct(z_) - y_);
    x_tilde = kkt_.solve(rhs);
    z_tilde.noalias() = a_scaled_ * x_tilde;

    z_prev = z_;
    y_prev = y_;
    x_ = alpha * x_tilde + (1.0 - alpha) * x_;
    const Eigen::VectorXd z_relaxed = alpha * z_tilde + (1.0 - alpha) * z_prev;
    z_ = project_box(z_relaxed + y_.cwiseQuotient(rho_vec_), l_s, u_s);
    y_ = y_ + rho_vec_.cwiseProduct(z_relaxed - z_);

    const Eigen::VectorXd z_u = d_inv.cwiseProduct(z_);
    const Eigen::VectorXd y_u = row_scale_.cwiseProduct(y_);
    const Residuals r = unscaled_residuals(p, x_, z_u, y_u, settings_.eps_abs, settings_.eps_rel);
    const double combined = std::max(r.prim, r.dual);
    if (settings_.record_history) sol.residual_history.push_back(combined);
    sol.iterations = k;

    if (!std::isfinite(combined)) break;
    if (combined < best) {
      best = combined;
      best_x = x_;
      best_z = z_u;
      best_y = y_u;
      best_res = r;
    }

    if (r.prim <= r.eps_prim && r.dual <= r.eps_dual) {
      sol.x = x_;
      sol.z = z_u;
      sol.y = y_u;
      sol.status = QpStatus::optimal;
      sol.primal_res = r.prim;
      sol.dual_res = r.dual;
      if (settings_.polish) try_polish(sol);
      return sol;
    }

    if (settings_.adaptive_rho && m > 0 && k % settings_.adaptive_rho_interval == 0) {
      const double prim_norm = r.prim / std::max(r.eps_prim - settings_.eps_abs, 1e-12);
      const double dual_norm = r.dual / std::max(r.eps_dual - settings_.eps_abs, 1e-12);
      const double ratio = std::sqrt(prim_norm / std::max(dual_norm, 1e-300));
      if (std::isfinite(ratio) && (ratio > 5.0 || ratio < 0.2)) {
        const double rho_new = std::clamp(rho_ * ratio, 1e-6, 1e6);
        if (rho_new != rho_) {
          rho_ = rho_new;
          factorize();
        }
      }
    }

    if (k >= settings_.infeasibility_after && m > 0) {
      dy = y_ - y_prev;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (u_s[i] == kInf && dy[i] > 0.0) dy[i] = 0.0;
        if (l_s[i] == -kInf && dy[i] < 0.0) dy[i] = 0.0;
      }
      const double dy_norm = inf_norm(dy);
      if (dy_norm > settings_.eps_infeasible) {
        const double at_dy = inf_norm(a_scaled_.transpose() * dy);
        double support = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) {
          if (dy[i] > 0.0) support += u_s[i] * dy[i];
          if (dy[i] < 0.0) support += l_s[i] * dy[i];
        }
        if (at_dy <= settings_.eps_infeasible * dy_norm &&
            support < -settings_.eps_infeasible * dy_norm) {
          sol.x = x_;
          sol.z = z_u;
          sol.y = y_u;
          sol.status = QpStatus::infeasible;
          sol.primal_res = r.prim;
          sol.dual_res = r.dual;
          return sol;
        }
      }
    }
  }

  sol.x = best_x;
  sol.z = best_z;
  sol.y = best_y;
  sol.status = QpStatus::max_iters;
  sol.primal_res = best_res.prim;
  sol.dual_res = best_res.dual;
  return sol;
}

bool QpSolver::try_polish(QpSolution& sol) const {
  const QpProblem& p = problem_;
  const auto n = p.n();
  const auto m = p.m();
  const double tol = settings_.eps_abs;

  // side[i]: 0 inactive, -1 at the lower bound, +1 at the upper bound, 2 equality.
  std::vector<int> side(m, 0);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (p.l[i] == p.u[i]) {
      side[i] = 2;
    } else if (p.l[i] > -kInf && sol.z[i] - p.l[i] < -sol.y[i]) {
      side[i] = -1;
    } else if (p.u[i] < kInf && p.u[i] - sol.z[i] < sol.y[i]) {
      side[i] = 1;
    }
  }

  // The ADMM guess can hold a few rows on the wrong side of the active set;
  // drop rows whose multiplier has the wrong sign, add violated rows, re-solve.
  constexpr int kRounds = 8;
  for (int round = 0; round < kRounds; ++round) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (side[i] != 0) rows.push_back(i);
    }
    const auto na = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + na, n + na);
    Eigen::VectorXd rhs(n + na);
    kkt.topLeftCorner(n, n) = p.P;
    rhs.head(n) = -p.q;
    for (Eigen::Index j = 0; j < na; ++j) {
      const Eigen::Index i = rows[j];
      kkt.block(n + j, 0, 1, n) = p.A.row(i);
      kkt.block(0, n + j, n, 1) = p.A.row(i).transpose();
      rhs[n + j] = side[i] == -1 ? p.l[i] : p.u[i];
    }
    constexpr double delta = 1e-9;
    Eigen::MatrixXd kkt_reg = kkt;
    kkt_reg.topLeftCorner(n, n).diagonal().array() += delta;
    kkt_reg.bottomRightCorner(na, na).diagonal().array() -= delta;
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(kkt_reg);
    Eigen::VectorXd s = lu.solve(rhs);
    for (int it = 0; it < 3; ++it) s += lu.solve(rhs - kkt * s);
    if (!s.allFinite()) return false;

    QpSolution cand = sol;
    cand.x = s.head(n);
    cand.z = p.A * cand.x;
    cand.y = Eigen::VectorXd::Zero(m);
    bool changed = false;
    for (Eigen::Index j = 0; j < na; ++j) {
      const Eigen::Index i = rows[j];
      const double yj = s[n + j];
      if ((side[i] == -1 && yj > 0.0) || (side[i] == 1 && yj < 0.0)) {
        side[i] = 0;
        changed = true;
      }
      cand.y[i] = yj;
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      if (side[i] != 0) continue;
      if (cand.z[i] < p.l[i] - tol) {
        side[i] = -1;
        changed = true;
      } else if (cand.z[i] > p.u[i] + tol) {
        side[i] = 1;
        changed = true;
      }
    }
    if (changed) continue;

    const Eigen::VectorXd z_proj = project_box(cand.z, p.l, p.u);
    const Residuals r =
        unscaled_residuals(p, cand.x, z_proj, cand.y, settings_.eps_abs, settings_.eps_rel);
    if (r.prim > std::max(sol.primal_res, tol) || r.dual > std::max(sol.dual_res, tol)) {
      return false;
    }
    cand.z = z_proj;
    cand.primal_res = r.prim;
    cand.dual_res = r.dual;
    cand.polished = true;
    sol = std::move(cand);
    return true;
  }
  return false;
}

QpSolution solve_qp(const QpProblem& problem, const QpSettings& settings) {
  QpSolver solver(problem, settings);
  return solver.solve();
}

KktResiduals kkt_residuals(const QpProblem& p, const QpSolution& s) {
  if (s.x.size() != p.n() || s.y.size() != p.m()) {
    throw std::invalid_argument("kkt_residuals: solution dimensions do not match the problem");
  }
  KktResiduals r;
  r.stationarity = inf_norm(p.P * s.x + p.q + p.A.transpose() * s.y);
  const Eigen::VectorXd ax = p.A * s.x;
  for (Eigen::Index i = 0; i < p.m(); ++i) {
    r.feasibility = std::max({r.feasibility, p.l[i] - ax[i], ax[i] - p.u[i]});
    const double yi = s.y[i];
    double slack = 0.0;
    if (yi > 0.0) {
      slack = p.u[i] == kInf ? kInf : std::abs(p.u[i] - ax[i]);
    } else if (yi < 0.0) {
      slack = p.l[i] == -kInf ? kInf : std::abs(ax[i] - p.l[i]);
    }
    if (yi != 0.0) r.comp_slack = std::max(r.comp_slack, std::abs(yi) * slack);
  }
  return r;
}

std::string dump_problem(const QpProblem& p) {
  std::ostringstream os;
  os << std::setprecision(17);
  auto num = [&os](double v) {
    if (v == kInf) {
      os << "inf";
    } else if (v == -kInf) {
      os << "-inf";
    } else {
      os << v;
    }
  };
  auto matrix = [&](const char* tag, const Eigen::MatrixXd& mat) {
    os << tag << '\n';
    for (Eigen::Index i = 0; i < mat.rows(); ++i) {
      for (Eigen::Index j = 0; j < mat.cols(); ++j) {
        if (j) os << ' ';
        num(mat(i, j));
      }
      os << '\n';
    }
  };
  auto vector = [&](const char* tag, const Eigen::VectorXd& v) {
    os << tag << '\n';
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (i) os << ' ';
      num(v[i]);
    }
    os << '\n';
  };
  os << "qp " << p.n() << ' ' << p.m() << '\n';
  matrix("P", p.P);
  vector("q", p.q);
  matrix("A", p.A);
  vector("l", p.l);
  vector("u", p.u);
  return os.str();
}

}  // namespace shipem::qp
