#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "reflexgrasp/kinematics.hpp"
#include "reflexgrasp/qp.hpp"
#include "reflexgrasp/tracking.hpp"

using namespace reflex;
using Eigen::Vector2d;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Three-joint arm (yaw, pitch, pitch) with one fingertip; its 3x3 linear
// Jacobian is invertible away from the stretched and folded poses.
RobotModel three_joint_arm(double upper0 = 3.0) {
  RobotModel m;
  Joint j0;
  j0.name = "yaw";
  j0.lower = -3.0;
  j0.upper = upper0;
  j0.velocity = 10.0;
  Joint j1 = j0;
  j1.name = "shoulder";
  j1.parent = 0;
  j1.upper = 3.0;
  j1.axis = Vector3d::UnitY();
  j1.origin = Isometry3d(Eigen::Translation3d(0, 0, 0.3));
  Joint j2 = j1;
  j2.name = "elbow";
  j2.parent = 1;
  j2.origin = Isometry3d(Eigen::Translation3d(0.4, 0, 0));
  m.joints = {j0, j1, j2};
  Fingertip t;
  t.name = "tip";
  t.joint = 2;
  t.offset = Vector3d(0.3, 0, 0);
  m.fingertips = {t};
  m.home = Vector3d(0.1, 0.3, 0.9);
  m.validate();
  return m;
}

}  // namespace

TEST_CASE("unconstrained least squares") {
  QpProblem p;
  p.H = MatrixXd::Identity(3, 3);
  const Vector3d b(1, -2, 0.5);
  p.g = -b;
  p.A.resize(0, 3);
  p.lb.resize(0);
  p.ub.resize(0);
  const QpSolution s = solve_qp(p);
  CHECK(s.status == QpStatus::Solved);
  CHECK((s.x - b).norm() < 1e-8);
}

TEST_CASE("active upper bound") {
  QpProblem p;
  p.H = MatrixXd::Constant(1, 1, 2.0);
  p.g = VectorXd::Constant(1, -4.0);
  p.A = MatrixXd::Ones(1, 1);
  p.lb = VectorXd::Constant(1, -kInf);
  p.ub = VectorXd::Ones(1);
  const QpSolution s = solve_qp(p);
  CHECK(s.status == QpStatus::Solved);
  CHECK(s.x[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(s.y[0] > 0.0);
}

TEST_CASE("random problems match active-set enumeration") {
  std::mt19937_64 rng(99);
  int compared = 0;
  for (int k = 0; k < 300; ++k) {
    const int n = 1 + static_cast<int>(rng() % 6);
    const int m = 1 + static_cast<int>(rng() % 8);
    const bool psd = k % 3 == 0;
    const QpProblem p = oracle::random_qp(rng, n, m, psd);
    const auto ref = oracle::enumerate_active_sets(p);
    if (!ref.feasible) continue;
    const QpSolution s = solve_qp(p);
    ++compared;
    CAPTURE(k);
    CHECK(s.status == QpStatus::Solved);
    CHECK(std::abs(p.objective(s.x) - ref.objective) <= 1e-6 * std::max(1.0, std::abs(ref.objective)));
    CHECK(constraint_violation(p, s.x) <= 1e-5);
  }
  CHECK(compared >= 250);
}

TEST_CASE("warm start returns the same optimum") {
  std::mt19937_64 rng(100);
  for (int k = 0; k < 50; ++k) {
    const QpProblem p = oracle::random_qp(rng, 5, 7);
    const QpSolution cold = solve_qp(p);
    QpSolver solver;
    const QpSolution warm = solver.solve(p, cold.x, cold.y);
    CHECK(warm.status == QpStatus::Solved);
    CHECK(std::abs(p.objective(warm.x) - p.objective(cold.x)) < 1e-7);
    CHECK(warm.iterations <= cold.iterations);
  }
}

TEST_CASE("contradictory bounds are reported infeasible") {
  QpProblem p;
  p.H = MatrixXd::Identity(2, 2);
  p.g = VectorXd::Zero(2);
  p.A.resize(2, 2);
  p.A << 1, 1, 1, 1;
  p.lb = Vector2d(-kInf, 1.0);
  p.ub = Vector2d(0.0, kInf);
  CHECK(solve_qp(p).status == QpStatus::Infeasible);
}

TEST_CASE("tracking objective without orientation terms") {
  const RobotModel m = default_robot();
  const KinematicState ks = forward_kinematics(m, m.home);
  const CollisionValues cv = collision_values(m, ks);
  std::vector<FingertipCommand> cmds(2);
  cmds[0].linear = Vector3d(0.01, 0, 0);
  cmds[0].angular = Vector3d(0, 0, 1);
  cmds[1].linear = Vector3d(0, -0.02, 0.01);
  TrackingParams tp;
  const QpProblem p = assemble_tracking_qp(ks, cmds, m, cv, tp);
  MatrixXd H = tp.joint_damping * MatrixXd::Identity(m.dof(), m.dof());
  VectorXd g = VectorXd::Zero(m.dof());
  for (int i = 0; i < 2; ++i) {
    H += ks.tips[i].Jx.transpose() * ks.tips[i].Jx;
    g -= ks.tips[i].Jx.transpose() * cmds[i].linear;
  }
  CHECK((p.H - H).norm() < 1e-12);
  CHECK((p.g - g).norm() < 1e-12);

  cmds[0].alpha = 1;
  const QpProblem q = assemble_tracking_qp(ks, cmds, m, cv, tp);
  const MatrixXd JR = ks.tips[0].JR;
  CHECK((q.H - H - tp.orientation_weight * JR.transpose() * JR).norm() < 1e-12);
}

TEST_CASE("exactly achievable fingertip velocity") {
  const RobotModel m = three_joint_arm();
  const KinematicState ks = forward_kinematics(m, m.home);
  REQUIRE(std::abs(ks.tips[0].Jx.determinant()) > 1e-3);
  std::vector<FingertipCommand> cmds(1);
  cmds[0].linear = Vector3d(0.02, -0.01, 0.015);
  TrackingParams tp;
  tp.joint_damping = 0.0;
  const QpProblem p = assemble_tracking_qp(ks, cmds, m, collision_values(m, ks), tp);
  const QpSolution s = solve_qp(p);
  CHECK(s.status == QpStatus::Solved);
  CHECK((ks.tips[0].Jx * s.x - cmds[0].linear).norm() < 1e-8);
}

TEST_CASE("position limit holds over the horizon") {
  const RobotModel m = three_joint_arm(0.5);
  VectorXd q = m.home;
  q[0] = 0.5;
  const KinematicState ks = forward_kinematics(m, q);
  std::vector<FingertipCommand> cmds(1);
  // Tip velocity produced by turning the yaw joint further positive.
  cmds[0].linear = 0.5 * ks.tips[0].Jx.col(0);
  TrackingParams tp;
  const QpProblem p = assemble_tracking_qp(ks, cmds, m, collision_values(m, ks), tp);
  const QpSolution s = solve_qp(p);
  CHECK(s.status == QpStatus::Solved);
  CHECK(q[0] + s.x[0] * tp.horizon <= m.joints[0].upper + 1e-8);
  CHECK(s.x[0] <= 1e-6);
}

TEST_CASE("collision rows keep zero feasible") {
  const RobotModel m = default_robot();
  const KinematicState ks = forward_kinematics(m, m.home);
  CollisionValues cv = collision_values(m, ks);
  cv.gamma[0] = 0.001;  // inside the margin
  std::vector<FingertipCommand> cmds(2);
  const QpProblem p = assemble_tracking_qp(ks, cmds, m, cv, TrackingParams{});
  CHECK(constraint_violation(p, VectorXd::Zero(m.dof())) == 0.0);
}
