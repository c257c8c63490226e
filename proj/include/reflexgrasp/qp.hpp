#pragma once

#include <optional>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace reflex {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// minimize 0.5 x'Hx + g'x  subject to  lb <= Ax <= ub.
/// Infinite bounds are allowed; an equality row has lb == ub.
struct QpProblem {
  MatrixXd H;
  VectorXd g;
  MatrixXd A;
  VectorXd lb, ub;

  int n() const { return static_cast<int>(g.size()); }
  int m() const { return static_cast<int>(A.rows()); }
  double objective(const VectorXd& x) const { return 0.5 * x.dot(H * x) + g.dot(x); }
};

enum class QpStatus { Solved, MaxIters, Infeasible };

const char* to_string(QpStatus s);

struct QpSolution {
  VectorXd x;
  VectorXd y;  // multipliers of lb <= Ax <= ub; negative on active lower bounds
  QpStatus status = QpStatus::MaxIters;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  bool polished = false;
};

struct QpSettings {
  double tol = 1e-6;  // absolute, on unscaled residuals
  int max_iters = 4000;
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  double regularization = 1e-9;  // added to H
  int scaling_iters = 10;
  bool adaptive_rho = true;
  int check_interval = 25;
  bool polish = true;
  double infeasibility_tol = 1e-7;
};

/// Operator-splitting QP solver for small dense problems. Holds workspace
/// buffers, so use one instance per thread.
class QpSolver {
 public:
  explicit QpSolver(QpSettings settings = {}) : settings_(settings) {}

  const QpSettings& settings() const { return settings_; }
  QpSettings& settings() { return settings_; }

  QpSolution solve(const QpProblem& p, const std::optional<VectorXd>& warm_x = std::nullopt,
                   const std::optional<VectorXd>& warm_y = std::nullopt);

 private:
  void scale(const QpProblem& p);
  void set_rho(double rho);
  bool try_polish(const QpProblem& p, const VectorXd& x, const VectorXd& z, const VectorXd& y, QpSolution* out);

  QpSettings settings_;
  // Scaled problem data: Hs = c D H D, gs = c D g, As = E A D, ls = E l, us = E u.
  MatrixXd Hs_, As_;
  VectorXd gs_, ls_, us_;
  VectorXd D_, E_;
  double c_ = 1.0;
  double rho_ = 0.1;
  VectorXd rho_vec_;
  Eigen::LLT<MatrixXd> llt_;
};

/// One-shot convenience wrapper.
QpSolution solve_qp(const QpProblem& p, const std::optional<VectorXd>& warm_start = std::nullopt,
                    double tol = 1e-6, int max_iters = 4000);

/// Largest bound violation of Ax against [lb, ub].
double constraint_violation(const QpProblem& p, const VectorXd& x);

}  // namespace reflex
