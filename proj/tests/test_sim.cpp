#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "reflexgrasp/campaign.hpp"
#include "reflexgrasp/csv.hpp"
#include "reflexgrasp/errors.hpp"
#include "reflexgrasp/sim.hpp"

using namespace reflex;
using std::numbers::pi;

namespace {

const RobotModel& robot() {
  static const RobotModel m = default_robot();
  return m;
}

// Sphere of radius 0.025 resting on the table between the fingers.
Surface centred_sphere() { return Surface(Ellipsoid{0.025, 0.025, 0.025}, Pose::yaw(0.0, Vector3d(0, 0, 0.025))); }

VectorXd preclosure(const Surface& object, const Vector3d& target, const ControllerParams& p = {}) {
  const ReachResult rr = reach(robot(), object, robot().home, target, p, 3.0);
  REQUIRE(rr.converged);
  return rr.q;
}

}  // namespace

TEST_CASE("contact detection along the centre line") {
  const Surface sphere(Ellipsoid{1, 1, 1});
  const auto c = detect_contact(Vector3d(1.05, 0, 0), 0.06, sphere);
  REQUIRE(c.has_value());
  CHECK((c->c - Vector3d(0.99, 0, 0)).norm() < 1e-9);
  CHECK((c->n - Vector3d(-1, 0, 0)).norm() < 1e-9);
  CHECK(!detect_contact(Vector3d(1.2, 0, 0), 0.06, sphere).has_value());
}

TEST_CASE("grazing a box face off centre") {
  const Surface box(Box{1, 1, 1}, Pose::yaw(0.3, Vector3d(0.2, 0, 0)));
  const double rho = 0.05;
  const Vector3d local(0.3, -0.4, 1.0 + rho - 5e-5);
  const Vector3d x = box.pose().to_world(local);
  const auto c = detect_contact(x, rho, box);
  REQUIRE(c.has_value());
  CHECK((c->n - Vector3d(0, 0, -1)).norm() < 1e-6);
  CHECK(((c->c - x).norm() - rho) < 1e-12);
}

TEST_CASE("Euler integration of a held velocity") {
  const Surface far(Box{0.01, 0.01, 0.01}, Pose::yaw(0.0, Vector3d(2, 2, 2)));
  Simulator sim(robot(), far, robot().home, ControllerParams{}, SimParams{});
  sim.integrate(VectorXd::Zero(robot().dof()));
  CHECK(sim.world().q == robot().home);
  VectorXd qd = VectorXd::Zero(robot().dof());
  qd[0] = 0.05;
  qd[3] = -0.02;
  qd[9] = 0.1;
  for (int k = 0; k < 1000; ++k) sim.integrate(qd);
  CHECK((sim.world().q - (robot().home + qd)).norm() < 1e-12);
  CHECK(sim.world().integration_steps == 1001);
  CHECK(sim.world().time == doctest::Approx(1.001));
}

TEST_CASE("closing on a centred sphere reaches contact and adjusts") {
  const Surface object = centred_sphere();
  const VectorXd q0 = preclosure(object, Vector3d(0, 0, 0.025));
  SimParams sp;
  sp.max_time = 3.0;
  Simulator sim(robot(), object, q0, ControllerParams{}, sp);
  const RunResult rr = sim.run();
  bool both = false, adjusted = false;
  for (const auto& row : rr.trace) {
    both = both || (row.contact[0] && row.contact[1]);
    adjusted = adjusted || row.mode == Mode::Adjusting;
  }
  CHECK(both);
  CHECK(adjusted);
  CHECK(rr.trace.front().mode == Mode::Closing);
  CHECK(rr.outcome == RunOutcome::Stable);
  REQUIRE(rr.final_stability.has_value());
  CHECK(rr.final_stability->mean_angle_deg() < 10.0);
  // Quasi-static world: the object never moves.
  CHECK(sim.world().object.pose().translation == object.pose().translation);
  CHECK(sim.world().object.pose().rotation.coeffs() == object.pose().rotation.coeffs());
}

TEST_CASE("sensor readings sit on the tip sphere") {
  const Surface object(Box{0.03, 0.025, 0.04}, Pose::yaw(0.2, Vector3d(0, 0, 0.04)));
  const VectorXd q0 = preclosure(object, Vector3d(0, 0, 0.04));
  SimParams sp;
  sp.noise_sigma = 0.0005;
  sp.max_time = 1.5;
  Simulator sim(robot(), object, q0, ControllerParams{}, sp);
  int readings = 0;
  for (int k = 0; k < 1500; ++k) {
    // Readings are taken at the configuration before the step integrates.
    const KinematicState ks = forward_kinematics(robot(), sim.world().q);
    sim.step();
    if (k % 5 != 0) continue;
    for (std::size_t i = 0; i < 2; ++i) {
      const ContactState& s = sim.controller().state().last_sensor[i];
      if (!s.in_contact) continue;
      ++readings;
      const Vector3d r = s.c - ks.tips[i].x;
      CHECK(std::abs(r.norm() - robot().fingertips[i].radius) < 1e-12);
      CHECK(r.normalized().dot(s.n) == doctest::Approx(1.0));
    }
    if (sim.controller().state().mode == Mode::Stable) break;
  }
  CHECK(readings > 0);
}

TEST_CASE("no tunnelling at the closing speed") {
  for (double vc : {0.05, 0.1}) {
    ControllerParams p;
    p.V_c = vc;
    for (double width : {0.03, 0.07}) {
      const Scenario sc = base_scenario(ShapeKind::Box, width);
      const VectorXd q0 = preclosure(sc.object, sc.target, p);
      SimParams sp;
      sp.max_time = 2.0;
      sp.stop_on_stable = false;
      const RunResult rr = Simulator(robot(), sc.object, q0, p, sp).run();
      CAPTURE(vc);
      CHECK(rr.max_penetration <= 2.0 * vc / sp.integration_rate);
    }
  }
}

TEST_CASE("identical seeds give identical traces") {
  const Surface object(Ellipsoid{0.03, 0.025, 0.03}, Pose::yaw(0.4, Vector3d(0, 0, 0.03)));
  const VectorXd q0 = preclosure(object, Vector3d(0, 0, 0.035));
  SimParams sp;
  sp.noise_sigma = 0.0005;
  sp.dropout_rate = 0.02;
  sp.seed = 5;
  const std::string a = trace_csv(Simulator(robot(), object, q0, ControllerParams{}, sp).run().trace);
  const std::string b = trace_csv(Simulator(robot(), object, q0, ControllerParams{}, sp).run().trace);
  CHECK(a == b);
  sp.seed = 6;
  CHECK(trace_csv(Simulator(robot(), object, q0, ControllerParams{}, sp).run().trace) != a);
}

TEST_CASE("trace csv columns") {
  const Surface object = centred_sphere();
  const VectorXd q0 = preclosure(object, Vector3d(0, 0, 0.025));
  SimParams sp;
  sp.max_time = 0.05;
  const RunResult rr = Simulator(robot(), object, q0, ControllerParams{}, sp).run();
  const auto table = parse_csv(trace_csv(rr.trace));
  CHECK(table[0] == std::vector<std::string>{"time_s", "mode", "phi1_rad", "phi2_rad", "f_rad", "tip1_contact",
                                             "tip2_contact", "theta1_rad", "theta2_rad", "qp_status", "qp_iters"});
  CHECK(table.size() == rr.trace.size() + 1);
  CHECK(table[0] == trace_columns());
}

TEST_CASE("dropouts during adjustment revert to closing") {
  const Surface object(Box{0.03, 0.025, 0.04}, Pose::yaw(0.35, Vector3d(0, 0, 0.04)));
  const VectorXd q0 = preclosure(object, Vector3d(0, 0, 0.04));
  SimParams sp;
  sp.dropout_rate = 0.1;
  sp.max_time = 3.0;
  const RunResult rr = Simulator(robot(), object, q0, ControllerParams{}, sp).run();
  int during = 0;
  for (const auto& d : rr.dropouts) {
    if (d.before != Mode::Adjusting) continue;
    ++during;
    CHECK(d.after == Mode::Closing);
  }
  CHECK(during > 0);
}

TEST_CASE("rates must divide the integration rate") {
  ControllerParams p;
  p.sensor_rate = 300.0;
  p.control_rate = 300.0;
  CHECK_THROWS_AS(Simulator(robot(), centred_sphere(), robot().home, p, SimParams{}), Error);
}

TEST_CASE("threaded mode reaches the same outcomes") {
  int stable = 0, runs = 0;
  for (ShapeKind fam : {ShapeKind::Box, ShapeKind::Cylinder, ShapeKind::Ellipsoid}) {
    for (double width : {0.04, 0.06}) {
      const Scenario sc = base_scenario(fam, width);
      const VectorXd q0 = preclosure(sc.object, sc.target);
      SimParams sp;
      sp.threaded = true;
      const RunResult rr = Simulator(robot(), sc.object, q0, ControllerParams{}, sp).run();
      ++runs;
      if (rr.outcome == RunOutcome::Stable && rr.final_stability->mean_angle_deg() < 10.0) ++stable;
      CHECK(rr.final_world->sensor_samples * 5 >= rr.final_world->integration_steps);
    }
  }
  CHECK(stable >= runs - 1);
}

TEST_CASE("perturbations") {
  std::mt19937_64 rng(1);
  const Scenario box = base_scenario(ShapeKind::Box, 0.05);
  const Scenario same = apply_perturbation(box, Perturbation::BoxYaw, 0.0, rng);
  CHECK(same.object.pose().rotation.isApprox(Eigen::Quaterniond::Identity()));

  const Scenario cyl = base_scenario(ShapeKind::Cylinder, 0.05);
  const Scenario shifted = apply_perturbation(cyl, Perturbation::CylinderOffset, 0.02, rng);
  CHECK((shifted.target - cyl.target - 0.02 * cyl.horizontal_axis).norm() < 1e-15);

  const Scenario ell = base_scenario(ShapeKind::Ellipsoid, 0.05);
  const Scenario raised = apply_perturbation(ell, Perturbation::EllipsoidOffset, 0.01, rng);
  CHECK((raised.target - ell.target - Vector3d(0, 0, 0.01)).norm() < 1e-15);

  const double bound = 30.0 * pi / 180.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 a(seed), b(seed);
    const Scenario pa = apply_perturbation(box, Perturbation::BoxYaw, bound, a);
    const Scenario pb = apply_perturbation(box, Perturbation::BoxYaw, bound, b);
    const double yaw = Eigen::AngleAxisd(pa.object.pose().rotation).angle();
    CHECK(yaw <= bound + 1e-12);
    CHECK(pa.object.pose().rotation.coeffs() == pb.object.pose().rotation.coeffs());
  }
}

TEST_CASE("non-penetrating projection") {
  Eigen::RowVectorXd r1(3), r2(3);
  r1 << 1, 0, 0;
  r2 << 0, 1, 0;
  const VectorXd v = project_nonpenetrating(Vector3d(1, -1, 2), {r1, r2});
  CHECK((v - Vector3d(0, -1, 2)).norm() < 1e-12);
  CHECK(project_nonpenetrating(Vector3d::Zero(), {r1}).norm() == 0.0);
}
