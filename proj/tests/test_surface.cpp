#include <cmath>
#include <limits>

#include "doctest.h"
#include "oracles.hpp"
#include "reflexgrasp/errors.hpp"
#include "reflexgrasp/surface.hpp"

using namespace reflex;

namespace {

const Surface kSphere(Ellipsoid{1, 1, 1});
const Surface kTorus(Torus{2.0, 0.5});

}  // namespace

TEST_CASE("implicit value on, inside and outside") {
  CHECK(implicit_value(kSphere, Vector3d(1, 0, 0)) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(implicit_value(kTorus, Vector3d(2.5, 0, 0))) < 1e-12);
  CHECK(implicit_value(kSphere, Vector3d(0, 0, 0)) < 0.0);
  CHECK(implicit_value(kSphere, Vector3d(0, 2, 0)) > 0.0);
}

TEST_CASE("outward normals") {
  CHECK((outward_normal(kSphere, Vector3d(1, 0, 0)) - Vector3d(1, 0, 0)).norm() < 1e-12);
  CHECK((outward_normal(kTorus, Vector3d(2.5, 0, 0)) - Vector3d(1, 0, 0)).norm() < 1e-12);
  const Surface sq(Superquadric{1, 1, 1, 1, 1});
  CHECK((outward_normal(sq, Vector3d(0, 0, 1)) - Vector3d(0, 0, 1)).norm() < 1e-12);
}

TEST_CASE("projection closed cases") {
  CHECK((project(kSphere, Vector3d(2, 0, 0)).position - Vector3d(1, 0, 0)).norm() < 1e-9);
  CHECK((project(kTorus, Vector3d(3, 0, 0)).position - Vector3d(2.5, 0, 0)).norm() < 1e-9);
  const Surface sq(Superquadric{1, 2, 1, 1, 1});
  CHECK((project(sq, Vector3d(0, 5, 0)).position - Vector3d(0, 2, 0)).norm() < 1e-6);
}

TEST_CASE("projection agrees with dense parametric sampling") {
  const Surface shapes[] = {
      Surface(Superquadric{1, 2, 1, 1, 1}),
      Surface(Superquadric{1.2, 0.8, 1.5, 0.6, 1.4}),
      Surface(Ellipsoid{0.7, 1.3, 0.9}, Pose::yaw(0.4, Vector3d(0.1, -0.2, 0.3))),
      Surface(Torus{1.5, 0.4}),
      Surface(Box{0.5, 0.8, 0.3}),
      Surface(Cylinder{0.4, 0.7}),
  };
  const Vector3d queries[] = {Vector3d(0, 5, 0), Vector3d(1.7, 0.9, -1.1), Vector3d(-0.2, 0.1, 2.4)};
  for (const Surface& s : shapes) {
    const auto cloud = oracle::parametric_boundary(s, 100000, 17);
    for (const Vector3d& p : queries) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& b : cloud) best = std::min(best, (b - p).norm());
      const SurfacePoint sp = project(s, p);
      const std::string kind = to_string(s.kind());
      CAPTURE(kind);
      CAPTURE(p.transpose());
      CAPTURE(best);
      // Samples never beat the true minimum; near edges they can trail it.
      const double d = (sp.position - p).norm();
      CHECK(d <= best + 1e-9);
      CHECK(best - d < 5e-3);
      CHECK(boundary_residual(s, sp.position) <= kSurfaceTolerance);
    }
  }
}

TEST_CASE("box projection matches clamping outside") {
  const Box b{0.5, 0.8, 0.3};
  const Surface box(b);
  const Vector3d queries[] = {Vector3d(1.7, 0.9, -1.1), Vector3d(0.2, 2.0, 0.1), Vector3d(-3, -3, 3)};
  for (const Vector3d& p : queries) {
    const Vector3d c = p.cwiseMax(Vector3d(-b.hx, -b.hy, -b.hz)).cwiseMin(Vector3d(b.hx, b.hy, b.hz));
    CHECK((project(box, p).position - c).norm() < 1e-9);
  }
}

TEST_CASE("sampled points lie on the boundary") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    CHECK(std::abs(sample_surface(kSphere, seed).position.norm() - 1.0) < 1e-9);
  }
  const Surface box(Box{1, 1, 1});
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    const Vector3d p = sample_surface(box, seed).position;
    REQUIRE(std::abs(p.cwiseAbs().maxCoeff() - 1.0) < 1e-9);
  }
}

TEST_CASE("sampling is deterministic per seed and varies across seeds") {
  CHECK(sample_surface(kTorus, 3).position == sample_surface(kTorus, 3).position);
  CHECK((sample_surface(kTorus, 3).position - sample_surface(kTorus, 4).position).norm() > 1e-6);
}

TEST_CASE("surface points carry unit normals") {
  const Surface shapes[] = {kSphere, kTorus, Surface(Superquadric{1, 0.6, 1.4, 0.4, 1.8}), Surface(Box{1, 2, 3}),
                            Surface(Cylinder{0.5, 1.0})};
  for (const Surface& s : shapes) {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      const SurfacePoint sp = sample_surface(s, seed);
      CHECK(std::abs(sp.outward_normal.norm() - 1.0) < 1e-12);
      CHECK(boundary_residual(s, sp.position) <= kSurfaceTolerance);
    }
  }
}

TEST_CASE("invalid shapes are rejected") {
  CHECK_THROWS_AS(Surface(Torus{0.5, 0.5}), Error);
  CHECK_THROWS_AS(Surface(Ellipsoid{1, 0, 1}), Error);
  CHECK_THROWS_AS(Surface(Superquadric{1, 1, 1, 0.05, 1}), Error);
  CHECK_THROWS_AS(Surface(Superquadric{1, 1, 1, 1, 2.5}), Error);
  CHECK_NOTHROW(Surface(Superquadric{1, 1, 1, 2.0, 2.0}));
}

TEST_CASE("torus axis has no normal") {
  CHECK_THROWS_AS(outward_normal(kTorus, Vector3d(0, 0, 0)), Error);
}
