#pragma once

#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace shipem::qp {

/// min 1/2 x'Px + q'x  s.t.  l <= Ax <= u.  Equality rows have l == u;
/// one-sided rows use +/-infinity.
struct QpProblem {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  Eigen::MatrixXd A;
  Eigen::VectorXd l;
  Eigen::VectorXd u;

  Eigen::Index n() const { return q.size(); }
  Eigen::Index m() const { return l.size(); }
};

struct QpSettings {
  double rho = 1.0;
  double sigma = 1e-6;
  double relaxation = 1.6;
  double eps_abs = 1e-6;
  double eps_rel = 1e-6;
  double eps_infeasible = 1e-6;
  int max_iters = 20000;
  // Certificates are only checked once this many iterations have run.
  int infeasibility_after = 50;
  bool scale_rows = true;
  // Rebalances rho from the primal/dual residual ratio every
  // adaptive_rho_interval iterations; each change refactorizes.
  bool adaptive_rho = true;
  int adaptive_rho_interval = 25;
  bool polish = true;
  bool record_history = false;
};

enum class QpStatus { optimal, max_iters, infeasible };

const char* to_string(QpStatus status);

struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd z;  // constraint values A x
  Eigen::VectorXd y;  // duals; y_i > 0 on an active upper bound, < 0 on a lower one
  QpStatus status = QpStatus::max_iters;
  int iterations = 0;
  double primal_res = 0.0;
  double dual_res = 0.0;
  bool polished = false;
  // max(primal, dual) after every iteration when record_history is set.
  std::vector<double> residual_history;
};

/// ADMM solver bound to one problem structure. The KKT factorization is
/// computed at construction; q, l and u may be updated between solves and
/// each solve starts from the previous iterate.
class QpSolver {
 public:
  explicit QpSolver(QpProblem problem, QpSettings settings = {});

  void update_linear_cost(const Eigen::VectorXd& q);
  void update_bounds(const Eigen::VectorXd& l, const Eigen::VectorXd& u);
  /// Discards the stored iterate so the next solve starts from zero.
  void reset();

  QpSolution solve();

  const QpProblem& problem() const { return problem_; }
  const QpSettings& settings() const { return settings_; }

 private:
  void factorize();
  void set_rho_vector();
  bool try_polish(QpSolution& sol) const;

  QpProblem problem_;
  QpSettings settings_;

  Eigen::VectorXd row_scale_;  // D, rows of the scaled A are D*A
  Eigen::MatrixXd a_scaled_;
  double rho_ = 1.0;
  Eigen::VectorXd rho_vec_;
  Eigen::LLT<Eigen::MatrixXd> kkt_;

  // ADMM iterate in scaled space.
  Eigen::VectorXd x_;
  Eigen::VectorXd z_;
  Eigen::VectorXd y_;
};

QpSolution solve_qp(const QpProblem& problem, const QpSettings& settings = {});

struct KktResiduals {
  double stationarity = 0.0;  // ||Px + q + A'y||_inf
  double feasibility = 0.0;   // max bound violation of Ax
  double comp_slack = 0.0;    // largest |y_i| * slack to the bound its sign selects
};

/// Residuals of the KKT conditions computed from (x, y) alone.
KktResiduals kkt_residuals(const QpProblem& problem, const QpSolution& solution);

/// Componentwise median(l, x, u).
Eigen::VectorXd project_box(const Eigen::VectorXd& x, const Eigen::VectorXd& l,
                            const Eigen::VectorXd& u);

/// Line-oriented text dump: a header line "qp n m", then "P", "q", "A", "l", "u"
/// sections, one matrix row per line, full precision, "inf"/"-inf" for open bounds.
std::string dump_problem(const QpProblem& problem);

/// Checks dimensions, l <= u, and symmetry of P. Throws std::invalid_argument.
void check_problem(const QpProblem& problem);

}  // namespace shipem::qp
