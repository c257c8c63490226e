#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "reflexgrasp/controller.hpp"
#include "reflexgrasp/errors.hpp"
#include "reflexgrasp/sim.hpp"

using namespace reflex;
using std::numbers::pi;

namespace {

ContactState touching(const Vector3d& c, const Vector3d& n) { return {true, c, n.normalized(), 1.0}; }
ContactState free_tip() { return {}; }

// Contacts on the y axis with pressing normals tilted about x by `tilt`.
std::vector<ContactState> pair_reading(double tilt) {
  return {touching(Vector3d(0, -0.03, 0), Vector3d(0, std::cos(tilt), std::sin(tilt))),
          touching(Vector3d(0, 0.03, 0), Vector3d(0, -std::cos(tilt), std::sin(tilt)))};
}

ControllerState in_mode(Mode m) {
  ControllerState s = ControllerState::initial(2);
  s.mode = m;
  return s;
}

Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  return Eigen::Quaterniond(nd(rng), nd(rng), nd(rng), nd(rng)).normalized().toRotationMatrix();
}

double theta_of(const Matrix3d& R, const Vector3d& r, const Vector3d& x, const Vector3d& c) {
  return std::acos(std::clamp((R * r).normalized().dot((c - x).normalized()), -1.0, 1.0));
}

}  // namespace

TEST_CASE("mode transitions quoted for the closing and adjusting modes") {
  ControllerParams p;
  CHECK(step_mode(in_mode(Mode::Closing), {free_tip(), free_tip()}, p).mode == Mode::Closing);
  const auto lost = std::vector<ContactState>{pair_reading(0.0)[0], free_tip()};
  CHECK(step_mode(in_mode(Mode::Adjusting), lost, p).mode == Mode::Closing);
  CHECK(step_mode(in_mode(Mode::Closing), pair_reading(0.4), p).mode == Mode::Adjusting);
}

TEST_CASE("stable needs the hold count") {
  ControllerParams p;
  const auto good = pair_reading(0.005);  // f = 0.01 rad
  p.stable_hold_samples = 1;
  CHECK(step_mode(in_mode(Mode::Adjusting), good, p).mode == Mode::Stable);

  p.stable_hold_samples = 5;
  ControllerState s = in_mode(Mode::Adjusting);
  for (int k = 1; k < 5; ++k) {
    s = step_mode(s, good, p);
    CHECK(s.mode == Mode::Adjusting);
    CHECK(s.stable_count == k);
  }
  s = step_mode(s, good, p);
  CHECK(s.mode == Mode::Stable);
  // Stable is terminal whatever the fingertips report.
  CHECK(step_mode(s, {free_tip(), free_tip()}, p).mode == Mode::Stable);
}

TEST_CASE("an unstable sample resets the hold count") {
  ControllerParams p;
  ControllerState s = in_mode(Mode::Adjusting);
  s = step_mode(s, pair_reading(0.005), p);
  s = step_mode(s, pair_reading(0.005), p);
  CHECK(s.stable_count == 2);
  s = step_mode(s, pair_reading(0.4), p);
  CHECK(s.stable_count == 0);
  CHECK(s.mode == Mode::Adjusting);
}

TEST_CASE("vanilla stops at the first all-contact sample") {
  ControllerParams p;
  p.variant = ControllerVariant::Vanilla;
  CHECK(step_mode(in_mode(Mode::Closing), pair_reading(0.6), p).mode == Mode::Stable);
  CHECK(step_mode(in_mode(Mode::Closing), {pair_reading(0.0)[0], free_tip()}, p).mode == Mode::Closing);
}

TEST_CASE("closing heads for the centroid until a tip touches") {
  ControllerParams p;
  p.V_c = 0.1;
  const ControllerState s = ControllerState::initial(2);
  const auto cmd = closing_velocities(s, {Vector3d(1, 0, 0), Vector3d(-1, 0, 0)}, p);
  CHECK((cmd[0].linear - Vector3d(-0.1, 0, 0)).norm() < 1e-12);
  CHECK((cmd[1].linear - Vector3d(0.1, 0, 0)).norm() < 1e-12);
  CHECK(cmd[0].alpha == 0);
  CHECK(cmd[0].angular.norm() == 0.0);
  CHECK_THROWS_AS(closing_velocities(s, {Vector3d(1, 0, 0), Vector3d(1, 0, 0)}, p), Error);
}

TEST_CASE("a touching tip keeps its latched normal") {
  ControllerParams p;
  p.V_c = 0.1;
  ControllerState s = ControllerState::initial(2);
  s = step_mode(s, {touching(Vector3d(1, 0, 0), Vector3d(0, -1, 0)), free_tip()}, p);
  CHECK(s.mode == Mode::Closing);
  REQUIRE(s.latched_normals[0].has_value());
  // Later readings with a different normal do not move the latch.
  s = step_mode(s, {touching(Vector3d(1, 0, 0), Vector3d(-1, 0, 0)), free_tip()}, p);
  for (const Vector3d& other : {Vector3d(-1, 0, 0), Vector3d(5, 7, -2)}) {
    const auto cmd = closing_velocities(s, {Vector3d(1, 0, 0), other}, p);
    CHECK((cmd[0].linear - Vector3d(0, -0.1, 0)).norm() < 1e-12);
  }
  // Leaving Closing clears the latches.
  s = step_mode(s, pair_reading(0.4), p);
  CHECK(s.mode == Mode::Adjusting);
  CHECK(!s.latched_normals[0].has_value());
}

TEST_CASE("closing with three tips is symmetric") {
  ControllerParams p;
  const ControllerState s = ControllerState::initial(3);
  std::vector<Vector3d> x;
  for (int k = 0; k < 3; ++k) x.emplace_back(std::cos(2 * pi * k / 3), std::sin(2 * pi * k / 3), 0.2);
  const auto cmd = closing_velocities(s, x, p);
  const Vector3d centroid(0, 0, 0.2);
  for (int k = 0; k < 3; ++k) {
    CHECK(cmd[k].linear.norm() == doctest::Approx(p.V_c));
    CHECK(cmd[k].linear.normalized().dot((centroid - x[k]).normalized()) == doctest::Approx(1.0));
  }
  CHECK((cmd[0].linear + cmd[1].linear + cmd[2].linear).norm() < 1e-12);
}

TEST_CASE("adjustment is tangent plus the normal bleed") {
  const RobotModel m = default_robot();
  const KinematicState ks = forward_kinematics(m, m.home);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0.0, 0.3);
  for (double vn : {0.0, 0.002}) {
    ControllerParams p;
    p.V_n = vn;
    for (int k = 0; k < 50; ++k) {
      ControllerState s = in_mode(Mode::Adjusting);
      // Contacts on the inner side of each tip, normals scattered around the
      // closing axis.
      const Vector3d n1 = (Vector3d(0, -1, 0) + Vector3d(nd(rng), nd(rng), nd(rng))).normalized();
      const Vector3d n2 = (Vector3d(0, 1, 0) + Vector3d(nd(rng), nd(rng), nd(rng))).normalized();
      s.last_sensor = {touching(ks.tips[0].x + 0.012 * n1, n1), touching(ks.tips[1].x + 0.012 * n2, n2)};
      for (DescentMethod method : {DescentMethod::PGD, DescentMethod::CFGD}) {
        p.method = method;
        const auto cmd = adjustment_velocities(s, ks, m, p);
        CHECK(cmd[0].linear.dot(n1) == doctest::Approx(-vn).epsilon(1e-9));
        CHECK(cmd[1].linear.dot(n2) == doctest::Approx(-vn).epsilon(1e-9));
        CHECK(std::abs(cmd[0].linear.dot(n1) + vn) < 1e-9);
      }
    }
  }
}

TEST_CASE("orientation term gated by the cone half-angle") {
  const RobotModel m = default_robot();
  const KinematicState ks = forward_kinematics(m, m.home);
  ControllerParams p;
  ControllerState s = in_mode(Mode::Adjusting);
  std::vector<ContactState> reading(2);
  for (int i = 0; i < 2; ++i) {
    const Vector3d u = ks.tips[i].R * m.fingertips[i].reference_direction;
    const Vector3d axis = u.unitOrthogonal();
    const Vector3d dir = Eigen::AngleAxisd(p.delta / 2, axis) * u;
    reading[i] = touching(ks.tips[i].x + 0.012 * dir, dir);
  }
  s.last_sensor = reading;
  auto cmd = adjustment_velocities(s, ks, m, p);
  CHECK(cmd[0].alpha == 0);
  CHECK(cmd[1].alpha == 0);

  const Vector3d u = ks.tips[0].R * m.fingertips[0].reference_direction;
  const Vector3d dir = Eigen::AngleAxisd(1.5 * p.delta, u.unitOrthogonal()) * u;
  s.last_sensor[0] = touching(ks.tips[0].x + 0.012 * dir, dir);
  cmd = adjustment_velocities(s, ks, m, p);
  CHECK(cmd[0].alpha == 1);
}

TEST_CASE("rotate_to_cone closed cases") {
  ControllerParams p;
  p.W = 1.0;
  const Matrix3d I = Matrix3d::Identity();
  ConeCommand c = rotate_to_cone(Vector3d::Zero(), I, Vector3d(1, 0, 0), Vector3d(0.5, 0, 0), p);
  CHECK(c.theta == doctest::Approx(0.0));
  CHECK(c.angular.norm() == 0.0);
  c = rotate_to_cone(Vector3d::Zero(), I, Vector3d(1, 0, 0), Vector3d(0, 0.5, 0), p);
  CHECK(c.theta == doctest::Approx(pi / 2));
  CHECK((c.angular - Vector3d(0, 0, 1)).norm() < 1e-12);
  CHECK_THROWS_AS(rotate_to_cone(Vector3d::Zero(), I, Vector3d(1, 0, 0), Vector3d(-1, 0, 0), p), Error);
}

TEST_CASE("the cone command is the negative angle gradient over rotations") {
  ControllerParams p;
  p.W = 0.7;
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  for (int k = 0; k < 100; ++k) {
    const Matrix3d R = random_rotation(rng);
    const Vector3d r = Vector3d(nd(rng), nd(rng), nd(rng)).normalized();
    const Vector3d x(nd(rng), nd(rng), nd(rng));
    const Vector3d c = x + 0.02 * Vector3d(nd(rng), nd(rng), nd(rng)).normalized();
    const ConeCommand cc = rotate_to_cone(x, R, r, c, p);
    if (cc.theta < 0.05 || cc.theta > pi - 0.05) continue;
    // Gradient of theta under left perturbations exp([e]) R.
    Vector3d grad;
    const double h = 1e-6;
    for (int a = 0; a < 3; ++a) {
      const Matrix3d Rp = Eigen::AngleAxisd(h, Vector3d::Unit(a)).toRotationMatrix() * R;
      const Matrix3d Rm = Eigen::AngleAxisd(-h, Vector3d::Unit(a)).toRotationMatrix() * R;
      grad[a] = (theta_of(Rp, r, x, c) - theta_of(Rm, r, x, c)) / (2 * h);
    }
    CHECK((cc.angular + p.W * grad / grad.norm()).norm() < 1e-6);
    // First-order decrease along the command.
    const double dt = 1e-4;
    const Matrix3d Rn = Eigen::AngleAxisd(cc.angular.norm() * dt, cc.angular.normalized()).toRotationMatrix() * R;
    CHECK(theta_of(Rn, r, x, c) < cc.theta);
  }
}

TEST_CASE("reach velocity") {
  CHECK(reach_velocity(Vector3d(1, 0, 0), Vector3d(-1, 0, 0), Vector3d::Zero()).norm() == 0.0);
  CHECK((reach_velocity(Vector3d(1, 0, 0), Vector3d(-1, 0, 0), Vector3d(0.1, 0, 0)) - Vector3d(0.1, 0, 0)).norm() <
        1e-15);
  // Both points follow the field; the midpoint error halves in ln 2.
  Vector3d x1(0.3, 0.1, 0), x2(-0.1, -0.2, 0.4);
  const Vector3d target(0.05, 0.02, -0.1);
  const double e0 = (0.5 * (x1 + x2) - target).norm();
  const double dt = 1e-5;
  for (double t = 0; t < std::log(2.0); t += dt) {
    const Vector3d v = reach_velocity(x1, x2, target);
    x1 += dt * v;
    x2 += dt * v;
  }
  CHECK((0.5 * (x1 + x2) - target).norm() == doctest::Approx(0.5 * e0).epsilon(1e-3));
}

TEST_CASE("control tick with free fingertips moves them toward each other") {
  const RobotModel m = default_robot();
  ReflexController ctrl(m, ControllerParams{});
  const TickResult tr = ctrl.tick(m.home, {free_tip(), free_tip()});
  CHECK(tr.solved_qp);
  CHECK(tr.qp_status == QpStatus::Solved);
  CHECK(ctrl.state().mode == Mode::Closing);
  const KinematicState ks = forward_kinematics(m, m.home);
  const Vector3d centroid = 0.5 * (ks.tips[0].x + ks.tips[1].x);
  for (int i = 0; i < 2; ++i) {
    const Vector3d v = ks.tips[i].Jx * tr.qd;
    const double cosang = v.normalized().dot((centroid - ks.tips[i].x).normalized());
    CHECK(cosang > std::cos(5.0 * pi / 180.0));
  }
}

TEST_CASE("control tick in Stable commands exactly zero") {
  const RobotModel m = default_robot();
  ControllerParams p;
  p.variant = ControllerVariant::Vanilla;
  ReflexController ctrl(m, p);
  const KinematicState ks = forward_kinematics(m, m.home);
  const Vector3d n1(0, -1, 0), n2(0, 1, 0);
  const std::vector<ContactState> both{touching(ks.tips[0].x + 0.012 * n1, n1),
                                       touching(ks.tips[1].x + 0.012 * n2, n2)};
  const TickResult tr = ctrl.tick(m.home, both);
  CHECK(ctrl.state().mode == Mode::Stable);
  CHECK(!tr.solved_qp);
  CHECK(tr.qd.size() == m.dof());
  CHECK(tr.qd.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("one touching tip keeps closing with its latched normal") {
  const RobotModel m = default_robot();
  ReflexController ctrl(m, ControllerParams{});
  const KinematicState ks = forward_kinematics(m, m.home);
  const Vector3d n(0, -1, 0);
  ctrl.tick(m.home, {touching(ks.tips[0].x + 0.012 * n, n), free_tip()});
  CHECK(ctrl.state().mode == Mode::Closing);
  REQUIRE(ctrl.state().latched_normals[0].has_value());
  CHECK((*ctrl.state().latched_normals[0] - n).norm() < 1e-12);
  CHECK(!ctrl.state().latched_normals[1].has_value());
}

TEST_CASE("controller params json") {
  const ControllerParams def;
  const ControllerParams back = controller_params_from_json(to_json(def));
  CHECK(back.V_c == def.V_c);
  CHECK(back.delta == def.delta);
  CHECK(back.method == def.method);
  CHECK_THROWS_AS(controller_params_from_json({{"V_x", 1.0}}), Error);
  CHECK_THROWS_AS(controller_params_from_json({{"V_c", -1.0}}), Error);
  CHECK_THROWS_AS(controller_params_from_json({{"sensor_rate_hz", 200.0}, {"control_rate_hz", 300.0}}), Error);
}
