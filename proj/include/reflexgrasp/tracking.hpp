#pragma once

#include <vector>

#include "reflexgrasp/kinematics.hpp"
#include "reflexgrasp/qp.hpp"

namespace reflex {

/// Desired fingertip twist; alpha gates the orientation term.
struct FingertipCommand {
  Vector3d linear = Vector3d::Zero();
  Vector3d angular = Vector3d::Zero();
  int alpha = 0;
};

struct TrackingParams {
  double horizon = 0.005;             // s
  double eps_gamma = 0.005;           // m
  double orientation_weight = 1.0;    // multiplies alpha_i
  double joint_damping = 1e-4;        // small joint-velocity penalty, keeps H definite
};

/// Builds the joint-velocity QP
///   min sum_i |v_i - Jx_i qd|^2 + alpha_i w |w_i - JR_i qd|^2 + lambda |qd|^2
///   s.t. Gamma + H dGamma qd >= eps, q_min <= q + H qd <= q_max, qd_min <= qd <= qd_max
/// in the 0.5 x'Hx + g'x form (objective halved and constants dropped).
/// eps is clamped to the current minimum of Gamma so qd = 0 stays feasible, and
/// position bounds are widened to contain zero when q sits outside its limits.
QpProblem assemble_tracking_qp(const KinematicState& ks, const std::vector<FingertipCommand>& commands,
                               const RobotModel& model, const CollisionValues& collisions,
                               const TrackingParams& params);

}  // namespace reflex
