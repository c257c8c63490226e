#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "reflexgrasp/errors.hpp"

// Two-finger antipodal stability: f = phi1 + phi2 with
//   phi1 = angle(n1, c2 - c1),  phi2 = angle(n2, c1 - c2),
// where n_i are pressing normals (the direction each fingertip pushes into
// the object). f = 0 is the antipodal condition.

namespace reflex {

template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;

inline constexpr double kSeparationEps = 1e-9;
inline constexpr double kAngleTol = 1e-6;

template <typename Scalar>
struct ContactPair {
  Vec3<Scalar> c1, c2;
  Vec3<Scalar> n1, n2;
};

template <typename Scalar>
struct StabilityEval {
  Scalar phi1{0};
  Scalar phi2{0};
  Scalar f{0};

  Scalar mean_angle_deg() const { return Scalar(0.5) * f * Scalar(180) / Scalar(std::numbers::pi); }
};

enum class StabilityAngle { Phi1, Phi2 };
enum class ContactIndex { C1, C2 };

/// What a direction computation does when an angle sits within kAngleTol of
/// 0 or pi, where the arccos gradient is undefined.
enum class SingularPolicy {
  Throw,  // raise AngleSingular
  Zero,   // drop that angle's contribution (0 is in its subdifferential at the apex)
};

template <typename Scalar>
struct DescentDirections {
  Vec3<Scalar> d1, d2;
};

template <typename Derived1, typename Derived2>
typename Derived1::Scalar angle_between(const Eigen::MatrixBase<Derived1>& a,
                                        const Eigen::MatrixBase<Derived2>& b,
                                        double eps = kSeparationEps) {
  using Scalar = typename Derived1::Scalar;
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (!(na > eps) || !(nb > eps)) throw Error(ErrorKind::ZeroVector, "angle of a zero-length vector");
  const Scalar c = std::clamp<Scalar>(a.dot(b) / (na * nb), Scalar(-1), Scalar(1));
  return std::acos(c);
}

template <typename Scalar>
StabilityEval<Scalar> evaluate(const ContactPair<Scalar>& cp) {
  StabilityEval<Scalar> out;
  out.phi1 = angle_between(cp.n1, cp.c2 - cp.c1);
  out.phi2 = angle_between(cp.n2, cp.c1 - cp.c2);
  out.f = out.phi1 + out.phi2;
  return out;
}

namespace detail {

// d/dv angle(n, v) for fixed n: -(n_hat - cos(phi) v_hat) / (sin(phi) |v|).
// Returns false when phi is within tol of 0 or pi.
template <typename Scalar>
bool angle_gradient_wrt_vector(const Vec3<Scalar>& n, const Vec3<Scalar>& v, Vec3<Scalar>* grad) {
  const Scalar vn = v.norm();
  if (!(vn > kSeparationEps) || !(n.norm() > kSeparationEps)) {
    throw Error(ErrorKind::ZeroVector, "angle of a zero-length vector");
  }
  const Vec3<Scalar> nh = n.normalized();
  const Vec3<Scalar> vh = v / vn;
  const Scalar cos_phi = std::clamp<Scalar>(nh.dot(vh), Scalar(-1), Scalar(1));
  const Scalar sin_phi = nh.cross(vh).norm();
  const Scalar phi = std::atan2(sin_phi, cos_phi);
  if (phi < Scalar(kAngleTol) || phi > Scalar(std::numbers::pi - kAngleTol)) return false;
  *grad = -(nh - cos_phi * vh) / (sin_phi * vn);
  return true;
}

template <typename Scalar>
Vec3<Scalar> grad_phi_impl(const ContactPair<Scalar>& cp, StabilityAngle which, ContactIndex wrt,
                           SingularPolicy policy) {
  // phi1 depends on v = c2 - c1, phi2 on v = c1 - c2.
  const bool first = which == StabilityAngle::Phi1;
  const Vec3<Scalar>& n = first ? cp.n1 : cp.n2;
  const Vec3<Scalar> v = first ? Vec3<Scalar>(cp.c2 - cp.c1) : Vec3<Scalar>(cp.c1 - cp.c2);
  Vec3<Scalar> g;
  if (!angle_gradient_wrt_vector(n, v, &g)) {
    if (policy == SingularPolicy::Zero) return Vec3<Scalar>::Zero();
    throw Error(ErrorKind::AngleSingular, first ? "phi1 at 0 or pi" : "phi2 at 0 or pi");
  }
  // dv/dc: phi1 -> +1 wrt c2, -1 wrt c1; phi2 -> +1 wrt c1, -1 wrt c2.
  const bool positive = first ? (wrt == ContactIndex::C2) : (wrt == ContactIndex::C1);
  return positive ? g : Vec3<Scalar>(-g);
}

template <typename Scalar>
Vec3<Scalar> tangent_project(const Vec3<Scalar>& n, const Vec3<Scalar>& v) {
  const Vec3<Scalar> nh = n.normalized();
  return v - nh * nh.dot(v);
}

}  // namespace detail

/// Gradient of phi1 or phi2 with respect to one contact point, normals held
/// fixed. Throws AngleSingular within kAngleTol of 0 or pi.
template <typename Scalar>
Vec3<Scalar> grad_phi(const ContactPair<Scalar>& cp, StabilityAngle which, ContactIndex wrt) {
  return detail::grad_phi_impl(cp, which, wrt, SingularPolicy::Throw);
}

/// Tangent-projected negative gradient of f at each contact (unnormalized).
template <typename Scalar>
DescentDirections<Scalar> pgd_direction(const ContactPair<Scalar>& cp,
                                        SingularPolicy policy = SingularPolicy::Throw) {
  using detail::grad_phi_impl;
  const Vec3<Scalar> g1 = grad_phi_impl(cp, StabilityAngle::Phi1, ContactIndex::C1, policy) +
                          grad_phi_impl(cp, StabilityAngle::Phi2, ContactIndex::C1, policy);
  const Vec3<Scalar> g2 = grad_phi_impl(cp, StabilityAngle::Phi1, ContactIndex::C2, policy) +
                          grad_phi_impl(cp, StabilityAngle::Phi2, ContactIndex::C2, policy);
  return {detail::tangent_project<Scalar>(cp.n1, -g1), detail::tangent_project<Scalar>(cp.n2, -g2)};
}

/// Cross-finger direction: each contact descends the angle measured at the
/// other contact, d1 = -(I - n1 n1^T) grad_c1 phi2, d2 = -(I - n2 n2^T) grad_c2 phi1.
template <typename Scalar>
DescentDirections<Scalar> cfgd_direction(const ContactPair<Scalar>& cp,
                                         SingularPolicy policy = SingularPolicy::Throw) {
  using detail::grad_phi_impl;
  const Vec3<Scalar> g1 = grad_phi_impl(cp, StabilityAngle::Phi2, ContactIndex::C1, policy);
  const Vec3<Scalar> g2 = grad_phi_impl(cp, StabilityAngle::Phi1, ContactIndex::C2, policy);
  return {detail::tangent_project<Scalar>(cp.n1, -g1), detail::tangent_project<Scalar>(cp.n2, -g2)};
}

enum class DescentMethod { PGD, CFGD };

inline const char* to_string(DescentMethod m) { return m == DescentMethod::PGD ? "pgd" : "cfgd"; }

template <typename Scalar>
DescentDirections<Scalar> descent_direction(DescentMethod method, const ContactPair<Scalar>& cp,
                                            SingularPolicy policy = SingularPolicy::Throw) {
  return method == DescentMethod::PGD ? pgd_direction(cp, policy) : cfgd_direction(cp, policy);
}

using ContactPaird = ContactPair<double>;
using StabilityEvald = StabilityEval<double>;

}  // namespace reflex
