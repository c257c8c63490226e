#include "reflexgrasp/surface.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "reflexgrasp/errors.hpp"

namespace reflex {

using Eigen::Matrix3d;

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double sign_of(double v) { return v < 0.0 ? -1.0 : 1.0; }

// ---------------------------------------------------------------------------
// Star-shaped surfaces G(x) = 1 where G is positively homogeneous of degree k.
// Ellipsoids and superquadrics both fit this form, which gives an exact
// radial retraction x -> x * G(x)^(-1/k) onto the boundary.

struct StarShape {
  virtual ~StarShape() = default;
  virtual double value(const Vector3d& x) const = 0;  // G(x)
  virtual Vector3d gradient(const Vector3d& x) const = 0;
  virtual Matrix3d hessian(const Vector3d& x) const = 0;
  virtual double degree() const = 0;
  virtual double size() const = 0;
};

struct EllipsoidStar final : StarShape {
  Vector3d inv_sq;
  double scale;
  explicit EllipsoidStar(const Ellipsoid& e)
      : inv_sq(1.0 / (e.a1 * e.a1), 1.0 / (e.a2 * e.a2), 1.0 / (e.a3 * e.a3)),
        scale(std::max({e.a1, e.a2, e.a3})) {}
  double value(const Vector3d& x) const override { return x.cwiseProduct(x).dot(inv_sq); }
  Vector3d gradient(const Vector3d& x) const override { return 2.0 * x.cwiseProduct(inv_sq); }
  Matrix3d hessian(const Vector3d&) const override { return (2.0 * inv_sq).asDiagonal(); }
  double degree() const override { return 2.0; }
  double size() const override { return scale; }
};

struct SuperquadricStar final : StarShape {
  Superquadric sq;
  double scale;
  explicit SuperquadricStar(const Superquadric& s) : sq(s), scale(std::max({s.a1, s.a2, s.a3})) {}

  double value(const Vector3d& x) const override {
    const double p2 = 2.0 / sq.e2;
    const double p1 = 2.0 / sq.e1;
    const double a = std::pow(std::abs(x.x() / sq.a1), p2) + std::pow(std::abs(x.y() / sq.a2), p2);
    return std::pow(a, sq.e2 / sq.e1) + std::pow(std::abs(x.z() / sq.a3), p1);
  }

  Vector3d gradient(const Vector3d& x) const override {
    const double p2 = 2.0 / sq.e2;
    const double p1 = 2.0 / sq.e1;
    const double ax = std::abs(x.x() / sq.a1);
    const double ay = std::abs(x.y() / sq.a2);
    const double az = std::abs(x.z() / sq.a3);
    const double a = std::pow(ax, p2) + std::pow(ay, p2);
    Vector3d g = Vector3d::Zero();
    if (a > 1e-300) {
      const double outer = (sq.e2 / sq.e1) * std::pow(a, sq.e2 / sq.e1 - 1.0) * p2;
      if (ax > 0.0) g.x() = outer * std::pow(ax, p2 - 1.0) * sign_of(x.x()) / sq.a1;
      if (ay > 0.0) g.y() = outer * std::pow(ay, p2 - 1.0) * sign_of(x.y()) / sq.a2;
    }
    if (az > 0.0) g.z() = p1 * std::pow(az, p1 - 1.0) * sign_of(x.z()) / sq.a3;
    return g;
  }

  Matrix3d hessian(const Vector3d& x) const override {
    const double h = 1e-6 * scale;
    Matrix3d hess;
    for (int j = 0; j < 3; ++j) {
      Vector3d e = Vector3d::Zero();
      e[j] = h;
      hess.col(j) = (gradient(x + e) - gradient(x - e)) / (2.0 * h);
    }
    return 0.5 * (hess + hess.transpose());
  }

  double degree() const override { return 2.0 / sq.e1; }
  double size() const override { return scale; }
};

Vector3d retract(const StarShape& star, const Vector3d& y) {
  const double g = star.value(y);
  if (!(g > 0.0) || !std::isfinite(g)) {
    throw Error(ErrorKind::ProjectionDiverged, "radial retraction through the shape center");
  }
  return y * std::pow(g, -1.0 / star.degree());
}

// Closest point on {G = 1} by a Newton iteration on the KKT system of
// min 0.5|x - p|^2 s.t. G(x) = 1, restricted to the tangent plane and
// retracted radially back onto the boundary after each step. Falls back to
// the plain tangential (gradient-flow) step when the reduced Hessian is not
// positive definite, and backtracks on the distance.
Vector3d project_star(const StarShape& star, const Vector3d& p) {
  const double size = star.size();
  Vector3d x;
  if (p.norm() < 1e-12 * size) {
    x = retract(star, Vector3d::UnitX());
  } else {
    x = retract(star, p);
  }

  auto tangential = [&](const Vector3d& at, Vector3d* normal) {
    const Vector3d g = star.gradient(at);
    const Vector3d n = g.normalized();
    const Vector3d d = p - at;
    if (normal) *normal = n;
    return Vector3d(d - d.dot(n) * n);
  };

  const double scale = std::max(size, p.norm());
  double tnorm = std::numeric_limits<double>::infinity();
  for (int it = 0; it < kMaxProjectionIters; ++it) {
    Vector3d n;
    const Vector3d t = tangential(x, &n);
    tnorm = t.norm();
    if (tnorm <= 1e-13 * scale) break;

    const Vector3d g = star.gradient(x);
    const Vector3d d = p - x;
    const double lambda = d.dot(g) / g.squaredNorm();
    const Matrix3d m = Matrix3d::Identity() + lambda * star.hessian(x);

    // Orthonormal tangent basis.
    Vector3d t1 = n.unitOrthogonal();
    Vector3d t2 = n.cross(t1);
    Eigen::Matrix<double, 3, 2> basis;
    basis << t1, t2;
    const Eigen::Matrix2d reduced = basis.transpose() * m * basis;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(reduced);
    Vector3d step;
    if (eig.eigenvalues().minCoeff() > 0.05) {
      step = basis * reduced.ldlt().solve(basis.transpose() * t);
    } else {
      step = t;
    }

    const double dist = d.norm();
    bool accepted = false;
    double s = 1.0;
    for (int ls = 0; ls < 40; ++ls, s *= 0.5) {
      Vector3d candidate;
      try {
        candidate = retract(star, x + s * step);
      } catch (const Error&) {
        continue;
      }
      const double cand_dist = (p - candidate).norm();
      if (cand_dist < dist ||
          (cand_dist <= dist + 1e-15 * scale && tangential(candidate, nullptr).norm() < tnorm)) {
        x = candidate;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }

  tnorm = tangential(x, nullptr).norm();
  if (!(tnorm <= 1e-6 * scale)) {
    throw Error(ErrorKind::ProjectionDiverged,
                "tangential residual " + std::to_string(tnorm) + " after projection");
  }
  return x;
}

// ---------------------------------------------------------------------------
// Local-frame evaluation per shape kind.

struct LocalPoint {
  Vector3d position;
  Vector3d normal;
};

double torus_value(const Torus& t, const Vector3d& x) {
  const double rho = std::hypot(x.x(), x.y());
  return (rho - t.R) * (rho - t.R) + x.z() * x.z() - t.r * t.r;
}

Vector3d torus_gradient(const Torus& t, const Vector3d& x) {
  const double rho = std::hypot(x.x(), x.y());
  Vector3d g(0.0, 0.0, 2.0 * x.z());
  if (rho > 1e-300) {
    const double radial = 2.0 * (rho - t.R) / rho;
    g.x() = radial * x.x();
    g.y() = radial * x.y();
  }
  return g;
}

LocalPoint torus_project(const Torus& t, const Vector3d& p) {
  const double rho = std::hypot(p.x(), p.y());
  Vector3d radial = rho > 1e-12 * (t.R + t.r) ? Vector3d(p.x() / rho, p.y() / rho, 0.0)
                                               : Vector3d::UnitX();
  const Vector3d core = t.R * radial;
  Vector3d d = p - core;
  if (d.norm() < 1e-15 * (t.R + t.r)) d = radial;
  const Vector3d n = d.normalized();
  return {core + t.r * n, n};
}

double box_value(const Box& b, const Vector3d& x) {
  const Vector3d q = x.cwiseAbs() - Vector3d(b.hx, b.hy, b.hz);
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

// Face rule: first axis whose distance term is (within tol) the largest.
int box_active_face(const Vector3d& q, double tol) {
  const double m = q.maxCoeff();
  for (int k = 0; k < 3; ++k) {
    if (q[k] >= m - tol) return k;
  }
  return 0;
}

Vector3d box_gradient(const Box& b, const Vector3d& x, double tol) {
  const Vector3d h(b.hx, b.hy, b.hz);
  const Vector3d q = x.cwiseAbs() - h;
  const Vector3d outside = q.cwiseMax(0.0);
  if (outside.norm() > tol) {
    Vector3d g;
    for (int k = 0; k < 3; ++k) g[k] = sign_of(x[k]) * outside[k];
    return g.normalized();
  }
  const int k = box_active_face(q, tol);
  Vector3d g = Vector3d::Zero();
  g[k] = sign_of(x[k]);
  return g;
}

LocalPoint box_project(const Box& b, const Vector3d& p, double tol) {
  const Vector3d h(b.hx, b.hy, b.hz);
  const Vector3d q = p.cwiseAbs() - h;
  Vector3d pos;
  if ((q.array() > 0.0).any()) {
    pos = p.cwiseMax(-h).cwiseMin(h);
  } else {
    const int k = box_active_face(q, 0.0);
    pos = p;
    pos[k] = sign_of(p[k]) * h[k];
  }
  return {pos, box_gradient(b, pos, tol)};
}

double cylinder_value(const Cylinder& c, const Vector3d& x) {
  const double rho = std::hypot(x.x(), x.y());
  const Eigen::Vector2d d(rho - c.radius, std::abs(x.z()) - c.half_height);
  return d.cwiseMax(0.0).norm() + std::min(d.maxCoeff(), 0.0);
}

Vector3d cylinder_gradient(const Cylinder& c, const Vector3d& x, double tol) {
  const double rho = std::hypot(x.x(), x.y());
  const Vector3d radial = rho > 1e-300 ? Vector3d(x.x() / rho, x.y() / rho, 0.0) : Vector3d::UnitX();
  const Eigen::Vector2d d(rho - c.radius, std::abs(x.z()) - c.half_height);
  const Eigen::Vector2d outside = d.cwiseMax(0.0);
  if (outside.norm() > tol) {
    return (outside[0] * radial + outside[1] * sign_of(x.z()) * Vector3d::UnitZ()).normalized();
  }
  if (d[0] >= d[1] - tol) return radial;
  return sign_of(x.z()) * Vector3d::UnitZ();
}

LocalPoint cylinder_project(const Cylinder& c, const Vector3d& p, double tol) {
  const double rho = std::hypot(p.x(), p.y());
  const Vector3d radial = rho > 1e-300 ? Vector3d(p.x() / rho, p.y() / rho, 0.0) : Vector3d::UnitX();
  const Eigen::Vector2d d(rho - c.radius, std::abs(p.z()) - c.half_height);
  Vector3d pos;
  if (d[0] > 0.0 || d[1] > 0.0) {
    pos = std::min(rho, c.radius) * radial;
    pos.z() = std::clamp(p.z(), -c.half_height, c.half_height);
  } else if (d[0] >= d[1]) {
    pos = c.radius * radial;
    pos.z() = p.z();
  } else {
    pos = p;
    pos.z() = sign_of(p.z()) * c.half_height;
  }
  return {pos, cylinder_gradient(c, pos, tol)};
}

double local_value(const Shape& shape, const Vector3d& x) {
  return std::visit(
      overloaded{
          [&](const Ellipsoid& e) { return EllipsoidStar(e).value(x) - 1.0; },
          [&](const Superquadric& s) { return SuperquadricStar(s).value(x) - 1.0; },
          [&](const Torus& t) { return torus_value(t, x); },
          [&](const Box& b) { return box_value(b, x); },
          [&](const Cylinder& c) { return cylinder_value(c, x); },
      },
      shape);
}

Vector3d local_gradient(const Shape& shape, const Vector3d& x, double tol) {
  return std::visit(
      overloaded{
          [&](const Ellipsoid& e) { return EllipsoidStar(e).gradient(x); },
          [&](const Superquadric& s) { return SuperquadricStar(s).gradient(x); },
          [&](const Torus& t) { return torus_gradient(t, x); },
          [&](const Box& b) { return box_gradient(b, x, tol); },
          [&](const Cylinder& c) { return cylinder_gradient(c, x, tol); },
      },
      shape);
}

LocalPoint local_project(const Shape& shape, const Vector3d& p, double tol) {
  return std::visit(
      overloaded{
          [&](const Ellipsoid& e) {
            const EllipsoidStar star(e);
            const Vector3d x = project_star(star, p);
            return LocalPoint{x, star.gradient(x).normalized()};
          },
          [&](const Superquadric& s) {
            const SuperquadricStar star(s);
            const Vector3d x = project_star(star, p);
            return LocalPoint{x, star.gradient(x).normalized()};
          },
          [&](const Torus& t) { return torus_project(t, p); },
          [&](const Box& b) { return box_project(b, p, tol); },
          [&](const Cylinder& c) { return cylinder_project(c, p, tol); },
      },
      shape);
}

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw Error(ErrorKind::InvalidArgument, std::string(name) + " must be strictly positive");
  }
}

}  // namespace

Pose Pose::yaw(double angle, const Vector3d& translation) {
  Pose pose;
  pose.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(angle, Vector3d::UnitZ()));
  pose.translation = translation;
  return pose;
}

const char* to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Ellipsoid: return "ellipsoid";
    case ShapeKind::Superquadric: return "superquadric";
    case ShapeKind::Torus: return "torus";
    case ShapeKind::Box: return "box";
    case ShapeKind::Cylinder: return "cylinder";
  }
  return "unknown";
}

Surface::Surface(Shape shape, Pose pose) : shape_(std::move(shape)), pose_(std::move(pose)) {
  pose_.rotation.normalize();
  std::visit(overloaded{
                 [](const Ellipsoid& e) {
                   require_positive(e.a1, "a1");
                   require_positive(e.a2, "a2");
                   require_positive(e.a3, "a3");
                 },
                 [](const Superquadric& s) {
                   require_positive(s.a1, "a1");
                   require_positive(s.a2, "a2");
                   require_positive(s.a3, "a3");
                   for (double e : {s.e1, s.e2}) {
                     if (!(e > 0.1 && e <= 2.0)) {
                       throw Error(ErrorKind::InvalidArgument,
                                   "superquadric exponents must lie in (0.1, 2.0]");
                     }
                   }
                 },
                 [](const Torus& t) {
                   require_positive(t.r, "r");
                   if (!(t.R > t.r)) throw Error(ErrorKind::InvalidArgument, "torus requires R > r > 0");
                 },
                 [](const Box& b) {
                   require_positive(b.hx, "hx");
                   require_positive(b.hy, "hy");
                   require_positive(b.hz, "hz");
                 },
                 [](const Cylinder& c) {
                   require_positive(c.radius, "radius");
                   require_positive(c.half_height, "half_height");
                 },
             },
             shape_);
}

ShapeKind Surface::kind() const { return static_cast<ShapeKind>(shape_.index()); }

double Surface::characteristic_size() const {
  return std::visit(overloaded{
                        [](const Ellipsoid& e) { return std::max({e.a1, e.a2, e.a3}); },
                        [](const Superquadric& s) { return std::max({s.a1, s.a2, s.a3}); },
                        [](const Torus& t) { return t.R + t.r; },
                        [](const Box& b) { return std::max({b.hx, b.hy, b.hz}); },
                        [](const Cylinder& c) { return std::max(c.radius, c.half_height); },
                    },
                    shape_);
}

double Surface::bounding_radius() const {
  return std::visit(overloaded{
                        [](const Ellipsoid& e) { return std::max({e.a1, e.a2, e.a3}); },
                        [](const Superquadric& s) { return Vector3d(s.a1, s.a2, s.a3).norm(); },
                        [](const Torus& t) { return t.R + t.r; },
                        [](const Box& b) { return Vector3d(b.hx, b.hy, b.hz).norm(); },
                        [](const Cylinder& c) { return std::hypot(c.radius, c.half_height); },
                    },
                    shape_);
}

double implicit_value(const Surface& s, const Vector3d& p) {
  return local_value(s.shape(), s.pose().to_local(p));
}

Vector3d implicit_gradient(const Surface& s, const Vector3d& p) {
  const double tol = kSurfaceTolerance * s.characteristic_size();
  return s.pose().dir_to_world(local_gradient(s.shape(), s.pose().to_local(p), tol));
}

Vector3d outward_normal(const Surface& s, const Vector3d& p) {
  const Vector3d g = implicit_gradient(s, p);
  const double gn = g.norm();
  if (gn < 1e-9) throw Error(ErrorKind::DegenerateNormal, "implicit gradient vanishes");
  return g / gn;
}

double boundary_residual(const Surface& s, const Vector3d& p) {
  const double f = implicit_value(s, p);
  const double gn = implicit_gradient(s, p).norm();
  if (gn < 1e-300) return std::abs(f) / s.characteristic_size();
  return std::abs(f) / gn / s.characteristic_size();
}

SurfacePoint project(const Surface& s, const Vector3d& p) {
  const double tol = kSurfaceTolerance * s.characteristic_size();
  const LocalPoint local = local_project(s.shape(), s.pose().to_local(p), tol);
  SurfacePoint out{s.pose().to_world(local.position), s.pose().dir_to_world(local.normal)};
  if (boundary_residual(s, out.position) > kSurfaceTolerance) {
    throw Error(ErrorKind::ProjectionDiverged, "projected point is off the boundary");
  }
  return out;
}

SurfacePoint sample_surface(const Surface& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double radius = 1.1 * s.bounding_radius();
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const Vector3d u(unit(rng), unit(rng), unit(rng));
    if (u.squaredNorm() > 1.0) continue;
    try {
      return project(s, s.pose().to_world(radius * u));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::ProjectionDiverged) throw;
    }
  }
  throw Error(ErrorKind::ProjectionDiverged, "surface sampling exhausted its attempts");
}

}  // namespace reflex
