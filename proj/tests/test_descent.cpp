#include <cmath>
#include <numbers>

#include "doctest.h"
#include "reflexgrasp/csv.hpp"
#include "reflexgrasp/descent.hpp"
#include "reflexgrasp/errors.hpp"

using namespace reflex;

namespace {

std::vector<Vector3d> fibonacci_sphere(int n) {
  std::vector<Vector3d> out;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / n;
    const double r = std::sqrt(1.0 - z * z);
    out.emplace_back(r * std::cos(golden * i), r * std::sin(golden * i), z);
  }
  return out;
}

SurfacePoint at(const Surface& s, const Vector3d& p) { return project(s, p); }

}  // namespace

TEST_CASE("CFGD converges on the sphere from every grid pair") {
  const Surface sphere(Ellipsoid{1, 1, 1});
  const DescentConfig cfg = DescentConfig::for_surface(sphere, DescentMethod::CFGD);
  const auto grid = fibonacci_sphere(20);
  int runs = 0;
  for (const auto& a : grid) {
    for (const auto& b : grid) {
      if ((a - b).norm() < 1e-9) continue;
      const DescentOutcome out = run_descent(sphere, at(sphere, a), at(sphere, b), cfg);
      ++runs;
      CAPTURE(a.transpose());
      CAPTURE(b.transpose());
      CHECK(out.status == DescentStatus::Converged);
      CHECK(out.final.f < cfg.converge_tol);
    }
  }
  CHECK(runs == 380);
}

TEST_CASE("antipodal start converges immediately") {
  const Surface sphere(Ellipsoid{1, 1, 1});
  const DescentConfig cfg = DescentConfig::for_surface(sphere, DescentMethod::PGD);
  const DescentOutcome out = run_descent(sphere, at(sphere, Vector3d(0, 0, 2)), at(sphere, Vector3d(0, 0, -2)), cfg);
  CHECK(out.status == DescentStatus::Converged);
  CHECK(out.iters == 0);
}

TEST_CASE("both normals perpendicular to the contact line is a right-angle failure") {
  const Surface box(Box{1, 1, 1});
  for (DescentMethod m : {DescentMethod::PGD, DescentMethod::CFGD}) {
    const DescentConfig cfg = DescentConfig::for_surface(box, m);
    const DescentOutcome out =
        run_descent(box, at(box, Vector3d(-0.5, 0, 1.5)), at(box, Vector3d(0.5, 0, 1.5)), cfg);
    CHECK(out.status == DescentStatus::RightAngleFailure);
    CHECK(out.final.phi1 == doctest::Approx(std::numbers::pi / 2));
  }
}

TEST_CASE("descent trajectories stay on the boundary") {
  const Surface torus(Torus{1.5, 0.4});
  DescentConfig cfg = DescentConfig::for_surface(torus, DescentMethod::CFGD);
  cfg.record_trajectory = true;
  const DescentOutcome out = run_descent(torus, sample_surface(torus, 1), sample_surface(torus, 2), cfg);
  REQUIRE(!out.trajectory.empty());
  for (const auto& tp : out.trajectory) {
    CHECK(boundary_residual(torus, tp.c1) <= kSurfaceTolerance);
    CHECK(boundary_residual(torus, tp.c2) <= kSurfaceTolerance);
  }
}

TEST_CASE("table1 is deterministic and independent of the thread count") {
  Table1Config cfg;
  cfg.n_trials = 1;
  cfg.seed = 7;
  const std::string a = table1_csv(run_table1(cfg));
  const std::string b = table1_csv(run_table1(cfg));
  CHECK(a == b);
  cfg.n_trials = 12;
  const std::string serial = table1_csv(run_table1(cfg));
  cfg.threads = 3;
  CHECK(table1_csv(run_table1(cfg)) == serial);
}

TEST_CASE("table1 csv layout") {
  Table1Config cfg;
  cfg.n_trials = 2;
  const auto table = parse_csv(table1_csv(run_table1(cfg)));
  REQUIRE(table.size() == 1 + 3 * 2 * 2);
  CHECK(table[0] == std::vector<std::string>{"shape_kind", "shape_params", "method", "status", "final_f_rad", "iters",
                                             "seed"});
  // PGD and CFGD rows of one trial share the seed and the shape.
  CHECK(table[1][6] == table[2][6]);
  CHECK(table[1][1] == table[2][1]);
  CHECK(table[1][2] == "pgd");
  CHECK(table[2][2] == "cfgd");
}

TEST_CASE("table1 config json") {
  const Table1Config def;
  const Table1Config back = table1_from_json(to_json(def));
  CHECK(back.n_trials == def.n_trials);
  CHECK(back.seed == def.seed);
  CHECK(back.converge_tol == doctest::Approx(def.converge_tol));
  CHECK(back.ranges.torus_major.hi == def.ranges.torus_major.hi);
  CHECK_THROWS_AS(table1_from_json({{"n_trial", 3}}), Error);
  CHECK_THROWS_AS(table1_from_json({{"n_trials", 0}}), Error);
  CHECK_THROWS_AS(table1_from_json({{"families", {"box"}}}), Error);
  try {
    table1_from_json({{"ranges", {{"torus_major", {2.0, 1.0}}}}});
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    CHECK(std::string(e.what()).find("ranges.torus_major") != std::string::npos);
  }
}
