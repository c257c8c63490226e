#pragma once

// Independent reference implementations used only by tests and the
// acceptance suite. None of these share code with the library routines they
// check.

#include <functional>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "reflexgrasp/kinematics.hpp"
#include "reflexgrasp/qp.hpp"
#include "reflexgrasp/surface.hpp"

namespace reflex::oracle {

/// Central-difference gradient of a scalar function of a vector.
Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                            double h);

/// Central-difference Jacobian of a vector function.
Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x, double h);

/// Angle straight from the arccos definition, without clamping shortcuts.
double reference_angle(const Eigen::Vector3d& a, const Eigen::Vector3d& b);

/// Boundary points generated from each shape's parametric form, independent
/// of the implicit-function projection.
std::vector<Eigen::Vector3d> parametric_boundary(const Surface& s, int count, std::uint64_t seed);

struct OracleQp {
  bool feasible = false;
  Eigen::VectorXd x;
  double objective = 0.0;
};

/// Enumerates every subset of constraint rows held at one of their bounds,
/// solves each equality-constrained KKT system and keeps the feasible point
/// with the lowest objective. Exponential; intended for n <= 6, p <= 8.
OracleQp enumerate_active_sets(const QpProblem& p, double feas_tol = 1e-9);

/// Random strictly convex or PSD QP with a nonempty feasible set.
QpProblem random_qp(std::mt19937_64& rng, int n, int p, bool psd_only = false);

/// Fingertip positions by the product of exponentials: screw axes are read
/// off the zero configuration and exponentiated in closed form.
std::vector<Eigen::Vector3d> poe_tip_positions(const RobotModel& m, const Eigen::VectorXd& q);

/// Matrix logarithm of a rotation as an axis-angle vector.
Eigen::Vector3d rotation_log(const Eigen::Matrix3d& R);

}  // namespace reflex::oracle
