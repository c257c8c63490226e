#include "oracles.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/LU>

namespace reflex::oracle {

using Eigen::Matrix3d;
using Eigen::Matrix4d;
using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

VectorXd fd_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& x, double h) {
  VectorXd g(x.size());
  VectorXd xp = x, xm = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
    xp[i] = xm[i] = x[i];
  }
  return g;
}

MatrixXd fd_jacobian(const std::function<VectorXd(const VectorXd&)>& f, const VectorXd& x, double h) {
  const VectorXd f0 = f(x);
  MatrixXd J(f0.size(), x.size());
  VectorXd xp = x, xm = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    J.col(i) = (f(xp) - f(xm)) / (2.0 * h);
    xp[i] = xm[i] = x[i];
  }
  return J;
}

double reference_angle(const Vector3d& a, const Vector3d& b) {
  double c = a.dot(b) / (a.norm() * b.norm());
  if (c > 1.0) c = 1.0;
  if (c < -1.0) c = -1.0;
  return std::acos(c);
}

namespace {

double signed_pow(double base, double e) { return std::copysign(std::pow(std::abs(base), e), base); }

}  // namespace

std::vector<Vector3d> parametric_boundary(const Surface& s, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double pi = std::numbers::pi;
  std::vector<Vector3d> pts;
  pts.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Vector3d local;
    if (const auto* e = std::get_if<Ellipsoid>(&s.shape())) {
      const double z = 2.0 * u01(rng) - 1.0;
      const double t = 2.0 * pi * u01(rng);
      const double r = std::sqrt(1.0 - z * z);
      local = {e->a1 * r * std::cos(t), e->a2 * r * std::sin(t), e->a3 * z};
    } else if (const auto* q = std::get_if<Superquadric>(&s.shape())) {
      const double eta = pi * (u01(rng) - 0.5);
      const double w = 2.0 * pi * u01(rng) - pi;
      local = {q->a1 * signed_pow(std::cos(eta), q->e1) * signed_pow(std::cos(w), q->e2),
               q->a2 * signed_pow(std::cos(eta), q->e1) * signed_pow(std::sin(w), q->e2),
               q->a3 * signed_pow(std::sin(eta), q->e1)};
    } else if (const auto* t = std::get_if<Torus>(&s.shape())) {
      const double a = 2.0 * pi * u01(rng);
      const double b = 2.0 * pi * u01(rng);
      local = {(t->R + t->r * std::cos(b)) * std::cos(a), (t->R + t->r * std::cos(b)) * std::sin(a),
               t->r * std::sin(b)};
    } else if (const auto* bx = std::get_if<Box>(&s.shape())) {
      const Vector3d h(bx->hx, bx->hy, bx->hz);
      const int face = static_cast<int>(u01(rng) * 6.0) % 6;
      const int axis = face / 2;
      for (int k = 0; k < 3; ++k) local[k] = (2.0 * u01(rng) - 1.0) * h[k];
      local[axis] = (face % 2 ? -1.0 : 1.0) * h[axis];
    } else {
      const auto& c = std::get<Cylinder>(s.shape());
      const double a = 2.0 * pi * u01(rng);
      if (u01(rng) < 0.5) {
        local = {c.radius * std::cos(a), c.radius * std::sin(a), (2.0 * u01(rng) - 1.0) * c.half_height};
      } else {
        const double r = c.radius * std::sqrt(u01(rng));
        local = {r * std::cos(a), r * std::sin(a), (u01(rng) < 0.5 ? -1.0 : 1.0) * c.half_height};
      }
    }
    pts.push_back(s.pose().to_world(local));
  }
  return pts;
}

OracleQp enumerate_active_sets(const QpProblem& p, double feas_tol) {
  const int n = p.n(), m = p.m();
  OracleQp best;
  best.objective = std::numeric_limits<double>::infinity();
  // Each row is inactive (0), at its lower bound (1) or at its upper bound (2).
  long total = 1;
  for (int i = 0; i < m; ++i) total *= 3;
  std::vector<int> state(static_cast<std::size_t>(m));
  for (long code = 0; code < total; ++code) {
    long c = code;
    std::vector<int> rows;
    std::vector<double> rhs;
    bool skip = false;
    for (int i = 0; i < m; ++i) {
      state[static_cast<std::size_t>(i)] = static_cast<int>(c % 3);
      c /= 3;
      const int st = state[static_cast<std::size_t>(i)];
      if (st == 1) {
        if (!std::isfinite(p.lb[i])) skip = true;
        rows.push_back(i);
        rhs.push_back(p.lb[i]);
      } else if (st == 2) {
        if (!std::isfinite(p.ub[i]) || p.ub[i] == p.lb[i]) skip = true;
        rows.push_back(i);
        rhs.push_back(p.ub[i]);
      }
    }
    if (skip || static_cast<int>(rows.size()) > n) continue;
    const int k = static_cast<int>(rows.size());
    MatrixXd K = MatrixXd::Zero(n + k, n + k);
    K.topLeftCorner(n, n) = p.H;
    VectorXd b(n + k);
    b.head(n) = -p.g;
    for (int r = 0; r < k; ++r) {
      K.block(n + r, 0, 1, n) = p.A.row(rows[static_cast<std::size_t>(r)]);
      K.block(0, n + r, n, 1) = p.A.row(rows[static_cast<std::size_t>(r)]).transpose();
      b[n + r] = rhs[static_cast<std::size_t>(r)];
    }
    const Eigen::FullPivLU<MatrixXd> lu(K);
    if (!lu.isInvertible()) continue;
    const VectorXd sol = lu.solve(b);
    const VectorXd x = sol.head(n);
    const VectorXd ax = p.A * x;
    bool ok = true;
    for (int i = 0; i < m && ok; ++i) ok = ax[i] >= p.lb[i] - feas_tol && ax[i] <= p.ub[i] + feas_tol;
    if (!ok) continue;
    const double obj = p.objective(x);
    if (obj < best.objective) {
      best.feasible = true;
      best.objective = obj;
      best.x = x;
    }
  }
  return best;
}

QpProblem random_qp(std::mt19937_64& rng, int n, int p, bool psd_only) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  QpProblem q;
  const int rank = psd_only ? std::max(1, n - 1) : n + 2;
  MatrixXd L(n, rank);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < rank; ++j) L(i, j) = nd(rng);
  q.H = L * L.transpose();
  if (!psd_only) q.H.diagonal().array() += 0.1;
  q.g.resize(n);
  for (int i = 0; i < n; ++i) q.g[i] = 3.0 * nd(rng);
  q.A.resize(p, n);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < n; ++j) q.A(i, j) = nd(rng);
  // Bounds bracket A x0 for a random x0, so the feasible set is nonempty. With
  // a singular H the boxed rows keep the problem bounded.
  VectorXd x0(n);
  for (int i = 0; i < n; ++i) x0[i] = nd(rng);
  const VectorXd ax0 = q.A * x0;
  q.lb.resize(p);
  q.ub.resize(p);
  const double inf = std::numeric_limits<double>::infinity();
  for (int i = 0; i < p; ++i) {
    const double r = u01(rng);
    const double lo = ax0[i] - 0.1 - u01(rng);
    const double hi = ax0[i] + 0.1 + u01(rng);
    if (psd_only || r < 0.5) {
      q.lb[i] = lo;
      q.ub[i] = hi;
    } else if (r < 0.7) {
      q.lb[i] = lo;
      q.ub[i] = inf;
    } else if (r < 0.9) {
      q.lb[i] = -inf;
      q.ub[i] = hi;
    } else {
      q.lb[i] = q.ub[i] = ax0[i];
    }
  }
  return q;
}

namespace {

Matrix3d hat(const Vector3d& w) {
  Matrix3d m;
  m << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return m;
}

// exp of the twist (w, v) scaled by theta, closed form.
Matrix4d twist_exp(const Vector3d& w, const Vector3d& v, double theta) {
  Matrix4d T = Matrix4d::Identity();
  if (w.norm() < 1e-12) {
    T.block<3, 1>(0, 3) = v * theta;
    return T;
  }
  const Matrix3d W = hat(w);
  const Matrix3d R = Matrix3d::Identity() + std::sin(theta) * W + (1.0 - std::cos(theta)) * W * W;
  const Matrix3d G = Matrix3d::Identity() * theta + (1.0 - std::cos(theta)) * W + (theta - std::sin(theta)) * W * W;
  T.block<3, 3>(0, 0) = R;
  T.block<3, 1>(0, 3) = G * v;
  return T;
}

}  // namespace

std::vector<Vector3d> poe_tip_positions(const RobotModel& m, const VectorXd& q) {
  // Zero-configuration joint frames by plain matrix products of the origins.
  const int n = m.dof();
  std::vector<Matrix4d> zero(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Matrix4d o = m.joints[i].origin.matrix();
    zero[static_cast<std::size_t>(i)] = m.joints[i].parent < 0 ? o : Matrix4d(zero[static_cast<std::size_t>(m.joints[i].parent)] * o);
  }
  std::vector<Vector3d> tips;
  for (const Fingertip& t : m.fingertips) {
    std::vector<int> chain;
    for (int j = t.joint; j >= 0; j = m.joints[j].parent) chain.insert(chain.begin(), j);
    Matrix4d T = Matrix4d::Identity();
    for (int j : chain) {
      const Matrix4d& Z = zero[static_cast<std::size_t>(j)];
      const Vector3d axis = Z.block<3, 3>(0, 0) * m.joints[j].axis;
      const Vector3d point = Z.block<3, 1>(0, 3);
      if (m.joints[j].type == JointType::Revolute) {
        T = T * twist_exp(axis, -axis.cross(point), q[j]);
      } else {
        T = T * twist_exp(Vector3d::Zero(), axis, q[j]);
      }
    }
    const Eigen::Vector4d local(t.offset.x(), t.offset.y(), t.offset.z(), 1.0);
    const Eigen::Vector4d world = T * zero[static_cast<std::size_t>(t.joint)] * local;
    tips.push_back(world.head<3>());
  }
  return tips;
}

Vector3d rotation_log(const Matrix3d& R) {
  const double c = std::clamp((R.trace() - 1.0) / 2.0, -1.0, 1.0);
  const double theta = std::acos(c);
  const Vector3d v(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  if (theta < 1e-9) return 0.5 * v;
  return theta / (2.0 * std::sin(theta)) * v;
}

}  // namespace reflex::oracle
