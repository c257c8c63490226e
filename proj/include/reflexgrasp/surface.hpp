#pragma once

#include <cstdint>
#include <string>
#include <variant>

#include <Eigen/Geometry>

namespace reflex {

using Eigen::Vector3d;

/// Rigid transform of a surface frame expressed in the world frame.
struct Pose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Vector3d translation = Vector3d::Zero();

  Vector3d to_local(const Vector3d& p) const { return rotation.conjugate() * (p - translation); }
  Vector3d to_world(const Vector3d& p) const { return rotation * p + translation; }
  Vector3d dir_to_world(const Vector3d& v) const { return rotation * v; }

  static Pose yaw(double angle, const Vector3d& translation = Vector3d::Zero());
};

struct Ellipsoid {
  double a1, a2, a3;
};

/// Inside-outside form with exponents e1 (latitude) and e2 (longitude).
struct Superquadric {
  double a1, a2, a3;
  double e1, e2;
};

/// Torus around the local z axis.
struct Torus {
  double R, r;
};

struct Box {
  double hx, hy, hz;
};

/// Cylinder with axis along local z.
struct Cylinder {
  double radius, half_height;
};

using Shape = std::variant<Ellipsoid, Superquadric, Torus, Box, Cylinder>;

enum class ShapeKind { Ellipsoid, Superquadric, Torus, Box, Cylinder };

const char* to_string(ShapeKind kind);

/// An implicit-surface object model placed in the world.
///
/// Construction validates the size parameters: everything strictly positive,
/// R > r for tori and superquadric exponents in (0.1, 2.0].
class Surface {
 public:
  explicit Surface(Shape shape, Pose pose = {});

  const Shape& shape() const { return shape_; }
  const Pose& pose() const { return pose_; }
  ShapeKind kind() const;

  /// Largest linear extent scale of the shape, used to normalize tolerances.
  double characteristic_size() const;
  /// Radius of a ball around the surface origin that encloses the shape.
  double bounding_radius() const;

  Surface with_pose(const Pose& pose) const { return Surface(shape_, pose); }

 private:
  Shape shape_;
  Pose pose_;
};

struct SurfacePoint {
  Vector3d position;
  Vector3d outward_normal;
};

constexpr double kSurfaceTolerance = 1e-8;  // relative to characteristic size
constexpr int kMaxProjectionIters = 100;

/// F(p): negative inside, zero on the boundary, positive outside.
double implicit_value(const Surface& s, const Vector3d& p);

/// World-frame gradient of implicit_value. Zero where F is not differentiable
/// along some axis is possible (e.g. torus axis).
Vector3d implicit_gradient(const Surface& s, const Vector3d& p);

/// Outward unit normal. Throws DegenerateNormal when the gradient vanishes.
Vector3d outward_normal(const Surface& s, const Vector3d& p);

/// First-order distance of p to the boundary divided by the characteristic
/// size; the quantity compared against kSurfaceTolerance.
double boundary_residual(const Surface& s, const Vector3d& p);

/// Closest boundary point. Throws ProjectionDiverged if the iteration fails.
SurfacePoint project(const Surface& s, const Vector3d& p);

/// Random boundary point, deterministic in the seed. Points are drawn
/// uniformly in a ball around the shape and projected, so the distribution
/// is not area-uniform.
SurfacePoint sample_surface(const Surface& s, std::uint64_t seed);

}  // namespace reflex
