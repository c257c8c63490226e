#include "reflexgrasp/qp.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/LU>

#include "reflexgrasp/errors.hpp"

namespace reflex {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kBigBound = 1e20;  // bounds beyond this are treated as absent
constexpr double kRhoMin = 1e-6, kRhoMax = 1e6;
constexpr double kEqualityRhoScale = 1e3;

double inf_norm(const VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

bool lower_free(double l) { return l <= -kBigBound; }
bool upper_free(double u) { return u >= kBigBound; }

}  // namespace

const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::Solved: return "Solved";
    case QpStatus::MaxIters: return "MaxIters";
    case QpStatus::Infeasible: return "Infeasible";
  }
  return "Unknown";
}

double constraint_violation(const QpProblem& p, const VectorXd& x) {
  if (p.m() == 0) return 0.0;
  const VectorXd ax = p.A * x;
  double v = 0.0;
  for (int i = 0; i < p.m(); ++i) v = std::max({v, p.lb[i] - ax[i], ax[i] - p.ub[i]});
  return v;
}

// Ruiz equilibration of the KKT matrix [H A'; A 0] followed by a cost scaling.
void QpSolver::scale(const QpProblem& p) {
  const int n = p.n(), m = p.m();
  Hs_ = p.H;
  Hs_.diagonal().array() += settings_.regularization;
  gs_ = p.g;
  As_ = p.A;
  D_ = VectorXd::Ones(n);
  E_ = VectorXd::Ones(m);
  c_ = 1.0;
  auto safe = [](double v) { return v < 1e-4 ? 1.0 : (v > 1e4 ? 1e4 : v); };
  for (int it = 0; it < settings_.scaling_iters; ++it) {
    VectorXd dn(n), em(m);
    for (int j = 0; j < n; ++j) {
      double col = Hs_.col(j).lpNorm<Eigen::Infinity>();
      if (m) col = std::max(col, As_.col(j).lpNorm<Eigen::Infinity>());
      dn[j] = 1.0 / std::sqrt(safe(col));
    }
    for (int i = 0; i < m; ++i) em[i] = 1.0 / std::sqrt(safe(As_.row(i).lpNorm<Eigen::Infinity>()));
    Hs_ = dn.asDiagonal() * Hs_ * dn.asDiagonal();
    As_ = em.asDiagonal() * As_ * dn.asDiagonal();
    gs_ = dn.asDiagonal() * gs_;
    D_ = D_.cwiseProduct(dn);
    E_ = E_.cwiseProduct(em);
    const double mean_col = n ? Hs_.colwise().lpNorm<Eigen::Infinity>().mean() : 1.0;
    const double gamma = 1.0 / safe(std::max(mean_col, inf_norm(gs_)));
    Hs_ *= gamma;
    gs_ *= gamma;
    c_ *= gamma;
  }
  ls_.resize(m);
  us_.resize(m);
  for (int i = 0; i < m; ++i) {
    ls_[i] = lower_free(p.lb[i]) ? -kInf : E_[i] * p.lb[i];
    us_[i] = upper_free(p.ub[i]) ? kInf : E_[i] * p.ub[i];
  }
}

void QpSolver::set_rho(double rho) {
  rho_ = std::clamp(rho, kRhoMin, kRhoMax);
  const int m = static_cast<int>(ls_.size());
  rho_vec_.resize(m);
  for (int i = 0; i < m; ++i) {
    if (std::isinf(ls_[i]) && std::isinf(us_[i])) {
      rho_vec_[i] = kRhoMin;
    } else if (us_[i] - ls_[i] < 1e-10) {
      rho_vec_[i] = kEqualityRhoScale * rho_;
    } else {
      rho_vec_[i] = rho_;
    }
  }
  MatrixXd K = Hs_;
  K.diagonal().array() += settings_.sigma;
  if (m) K.noalias() += As_.transpose() * rho_vec_.asDiagonal() * As_;
  llt_.compute(K);
}

// Guesses the active set from the ADMM iterate, solves the equality-constrained
// KKT system on the original data and accepts the result only if it passes a
// full optimality check at the requested tolerance.
bool QpSolver::try_polish(const QpProblem& p, const VectorXd& x, const VectorXd& z, const VectorXd& y,
                          QpSolution* out) {
  (void)x;
  const int n = p.n(), m = p.m();
  std::vector<int> active;
  std::vector<int> side;  // -1 lower, +1 upper, 0 equality
  for (int i = 0; i < m; ++i) {
    const bool eq = !lower_free(p.lb[i]) && !upper_free(p.ub[i]) && p.ub[i] - p.lb[i] < 1e-10;
    if (eq) {
      active.push_back(i);
      side.push_back(0);
    } else if (!lower_free(p.lb[i]) && z[i] - p.lb[i] < -y[i]) {
      active.push_back(i);
      side.push_back(-1);
    } else if (!upper_free(p.ub[i]) && p.ub[i] - z[i] < y[i]) {
      active.push_back(i);
      side.push_back(1);
    }
  }
  const int k = static_cast<int>(active.size());
  MatrixXd Aa(k, n);
  VectorXd ba(k);
  for (int r = 0; r < k; ++r) {
    Aa.row(r) = p.A.row(active[r]);
    ba[r] = side[r] > 0 ? p.ub[active[r]] : p.lb[active[r]];
  }
  const double delta = 1e-9;
  MatrixXd K = MatrixXd::Zero(n + k, n + k);
  K.topLeftCorner(n, n) = p.H;
  K.topLeftCorner(n, n).diagonal().array() += settings_.regularization;
  K.topRightCorner(n, k) = Aa.transpose();
  K.bottomLeftCorner(k, n) = Aa;
  MatrixXd Kreg = K;
  Kreg.topLeftCorner(n, n).diagonal().array() += delta;
  Kreg.bottomRightCorner(k, k).diagonal().array() -= delta;
  const Eigen::PartialPivLU<MatrixXd> lu(Kreg);
  VectorXd rhs(n + k);
  rhs << -p.g, ba;
  VectorXd sol = lu.solve(rhs);
  for (int it = 0; it < 5; ++it) sol += lu.solve(rhs - K * sol);
  if (!sol.allFinite()) return false;

  const VectorXd xp = sol.head(n);
  VectorXd yp = VectorXd::Zero(m);
  for (int r = 0; r < k; ++r) yp[active[r]] = sol[n + r];

  const double tol = settings_.tol;
  for (int r = 0; r < k; ++r) {
    if (side[r] < 0 && yp[active[r]] > tol) return false;
    if (side[r] > 0 && yp[active[r]] < -tol) return false;
  }
  const double prim = constraint_violation(p, xp);
  VectorXd dual_vec = p.H * xp + p.g + settings_.regularization * xp;
  if (m) dual_vec.noalias() += p.A.transpose() * yp;
  const double dual = inf_norm(dual_vec);
  if (prim > tol || dual > tol) return false;

  out->x = xp;
  out->y = yp;
  out->primal_residual = std::max(prim, 0.0);
  out->dual_residual = dual;
  out->status = QpStatus::Solved;
  out->polished = true;
  return true;
}

QpSolution QpSolver::solve(const QpProblem& p, const std::optional<VectorXd>& warm_x,
                           const std::optional<VectorXd>& warm_y) {
  const int n = p.n(), m = p.m();
  if (p.H.rows() != n || p.H.cols() != n || p.A.cols() != n || p.lb.size() != m || p.ub.size() != m) {
    throw Error(ErrorKind::InvalidArgument, "QP dimensions are inconsistent");
  }
  if ((p.H - p.H.transpose()).lpNorm<Eigen::Infinity>() > 1e-10 * std::max(1.0, p.H.lpNorm<Eigen::Infinity>())) {
    throw Error(ErrorKind::InvalidArgument, "QP Hessian is not symmetric");
  }
  for (int i = 0; i < m; ++i) {
    if (!(p.lb[i] <= p.ub[i])) throw Error(ErrorKind::InvalidArgument, "QP bounds have lb > ub");
  }

  scale(p);
  set_rho(settings_.rho);

  // Iterates live in the scaled space: x = D^-1 x_orig, z = E z_orig, y = c E^-1 y_orig.
  VectorXd x = VectorXd::Zero(n), z = VectorXd::Zero(m), y = VectorXd::Zero(m);
  const bool warm = warm_x.has_value();
  if (warm) {
    if (warm_x->size() != n) throw Error(ErrorKind::InvalidArgument, "warm start has the wrong dimension");
    x = warm_x->cwiseQuotient(D_);
    z = (As_ * x).cwiseMax(ls_).cwiseMin(us_);
    if (warm_y && warm_y->size() == m) y = c_ * warm_y->cwiseQuotient(E_);
  }

  QpSolution out;
  out.status = QpStatus::MaxIters;
  auto unscaled = [&](QpSolution* s) {
    s->x = D_.cwiseProduct(x);
    s->y = E_.cwiseProduct(y) / c_;
    const VectorXd ax = p.A * s->x;
    const VectorXd zo = z.cwiseQuotient(E_);
    s->primal_residual = m ? inf_norm(ax - zo) : 0.0;
    VectorXd dv = p.H * s->x + p.g + settings_.regularization * s->x;
    if (m) dv.noalias() += p.A.transpose() * s->y;
    s->dual_residual = inf_norm(dv);
  };

  if (warm && settings_.polish) {
    unscaled(&out);
    if (try_polish(p, out.x, p.A * out.x, out.y, &out)) {
      out.iterations = 0;
      return out;
    }
  }

  VectorXd x_tilde(n), z_tilde(m), z_prev(m), y_prev(m), rhs(n);
  for (int k = 1; k <= settings_.max_iters; ++k) {
    y_prev = y;
    z_prev = z;
    rhs = settings_.sigma * x - gs_;
    if (m) rhs.noalias() += As_.transpose() * (rho_vec_.cwiseProduct(z) - y);
    x_tilde = llt_.solve(rhs);
    z_tilde = As_ * x_tilde;
    x = settings_.alpha * x_tilde + (1.0 - settings_.alpha) * x;
    const VectorXd z_relaxed = settings_.alpha * z_tilde + (1.0 - settings_.alpha) * z_prev;
    z = (z_relaxed + y.cwiseQuotient(rho_vec_)).cwiseMax(ls_).cwiseMin(us_);
    y += rho_vec_.cwiseProduct(z_relaxed - z);

    const bool check = k == 1 || k % settings_.check_interval == 0 || k == settings_.max_iters;
    if (!check) continue;

    out.iterations = k;
    unscaled(&out);
    if (out.primal_residual <= settings_.tol && out.dual_residual <= settings_.tol) {
      out.status = QpStatus::Solved;
      if (settings_.polish) {
        QpSolution polished = out;
        if (try_polish(p, out.x, (As_ * x).cwiseQuotient(E_), out.y, &polished)) return polished;
      }
      return out;
    }
    if (settings_.polish && (k > 1 || warm)) {
      const VectorXd zo = z.cwiseQuotient(E_);
      if (try_polish(p, out.x, zo, out.y, &out)) {
        out.iterations = k;
        return out;
      }
    }

    // Primal infeasibility certificate: dy with A'dy ~ 0 and u'dy+ + l'dy- < 0.
    if (m) {
      const VectorXd dy = E_.cwiseProduct(y - y_prev);
      const double dy_norm = inf_norm(dy);
      if (dy_norm > 1e-12) {
        const double eps = settings_.infeasibility_tol * dy_norm;
        const bool stationary = inf_norm(D_.cwiseInverse().cwiseProduct(As_.transpose() * (y - y_prev))) <= eps;
        double support = 0.0;
        bool bounded = true;
        for (int i = 0; i < m; ++i) {
          const double d = dy[i];
          if (d > eps) {
            if (upper_free(p.ub[i])) bounded = false;
            else support += p.ub[i] * d;
          } else if (d < -eps) {
            if (lower_free(p.lb[i])) bounded = false;
            else support += p.lb[i] * d;
          }
        }
        if (stationary && bounded && support < -eps) {
          out.status = QpStatus::Infeasible;
          return out;
        }
      }
    }

    if (settings_.adaptive_rho && m) {
      const VectorXd ax = As_ * x;
      const double prim_s = inf_norm(ax - z) / std::max({inf_norm(ax), inf_norm(z), 1e-10});
      const VectorXd hx = Hs_ * x;
      const VectorXd aty = As_.transpose() * y;
      const double dual_s =
          inf_norm(hx + gs_ + aty) / std::max({inf_norm(hx), inf_norm(aty), inf_norm(gs_), 1e-10});
      const double ratio = std::sqrt(prim_s / std::max(dual_s, 1e-12));
      if (ratio > 5.0 || ratio < 0.2) set_rho(rho_ * ratio);
    }
  }
  return out;
}

QpSolution solve_qp(const QpProblem& p, const std::optional<VectorXd>& warm_start, double tol, int max_iters) {
  QpSettings s;
  s.tol = tol;
  s.max_iters = max_iters;
  QpSolver solver(s);
  return solver.solve(p, warm_start);
}

}  // namespace reflex
