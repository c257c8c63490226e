#pragma once

#include <optional>
#include <vector>

#include "reflexgrasp/grasp_stability.hpp"
#include "reflexgrasp/kinematics.hpp"
#include "reflexgrasp/qp.hpp"
#include "reflexgrasp/tracking.hpp"

#include "json.hpp"

namespace reflex {

enum class Mode { Closing, Adjusting, Stable };

const char* to_string(Mode m);

/// Vanilla stops at the first all-contact sample; Reflex runs the adjustment loop.
enum class ControllerVariant { Vanilla, Reflex };

struct ControllerParams {
  double V_c = 0.05;   // closing speed, m/s
  double V_a = 0.03;   // adjustment speed, m/s
  double V_n = 0.0;    // normal bleed, m/s
  double W = 1.0;      // rotational speed, rad/s
  double delta = 25.0 * std::numbers::pi / 180.0;        // contact-cone half-angle
  double f_stable = 20.0 * std::numbers::pi / 180.0;     // mean angle 10 deg
  double horizon = 0.005;
  double eps_gamma = 0.005;
  DescentMethod method = DescentMethod::CFGD;
  ControllerVariant variant = ControllerVariant::Reflex;
  double sensor_rate = 200.0;
  double control_rate = 200.0;
  int stable_hold_samples = 5;
  int solver_hold_ticks = 3;
  double orientation_weight = 1.0;
  double joint_damping = 1e-4;
  double qp_tol = 1e-6;
  int qp_max_iters = 4000;

  /// Throws Error(Config) naming the field that breaks an invariant.
  void validate() const;
  TrackingParams tracking() const;
};

ControllerParams controller_params_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ControllerParams& p);

/// Tactile reading of one fingertip. n is the pressing normal.
struct ContactState {
  bool in_contact = false;
  Vector3d c = Vector3d::Zero();
  Vector3d n = Vector3d::Zero();
  double contact_probability = 0.0;
};

struct ControllerState {
  Mode mode = Mode::Closing;
  std::vector<std::optional<Vector3d>> latched_normals;
  std::vector<ContactState> last_sensor;
  std::optional<StabilityEvald> stability;
  std::vector<double> theta;
  int stable_count = 0;  // consecutive all-contact samples with f < f_stable
  int transitions = 0;

  static ControllerState initial(std::size_t fingertips);
};

/// Mode transition for one sensor sample. Also maintains the stability
/// evaluation, the hold counter and the per-phase normal latches.
ControllerState step_mode(const ControllerState& state, const std::vector<ContactState>& sensor,
                          const ControllerParams& params);

/// Closing field: latched tips push along their latched normal, the others
/// head for the fingertip centroid. Throws CentroidDegenerate.
std::vector<FingertipCommand> closing_velocities(const ControllerState& state, const std::vector<Vector3d>& x,
                                                 const ControllerParams& params);

struct ConeCommand {
  double theta;
  Vector3d angular;
};

/// Angle between the reference contact direction R r_local and c - x, and the
/// rotation command W (u x v)/|u x v| that turns the former toward the latter.
/// Throws ConeAxisAligned for antiparallel directions outside the cone.
ConeCommand rotate_to_cone(const Vector3d& x, const Matrix3d& R, const Vector3d& r_local, const Vector3d& c,
                           const ControllerParams& params);

/// Adjustment field for a two-finger grasp: tangent descent at speed V_a,
/// optional normal bleed, and the cone rotation gated by alpha.
std::vector<FingertipCommand> adjustment_velocities(const ControllerState& state, const KinematicState& ks,
                                                    const RobotModel& model, const ControllerParams& params);

/// Common fingertip velocity that drives the fingertip midpoint toward x_star.
Vector3d reach_velocity(const Vector3d& x1, const Vector3d& x2, const Vector3d& x_star, double gain = 1.0);

struct TickResult {
  VectorXd qd;
  QpStatus qp_status = QpStatus::Solved;
  int qp_iters = 0;
  bool solved_qp = false;  // false in Stable mode
};

/// Single-owner reflexive controller: mode machine, velocity fields and the
/// tracking QP, with the bounded hold-last-command policy on solver failure.
class ReflexController {
 public:
  ReflexController(const RobotModel& model, ControllerParams params);

  const ControllerState& state() const { return state_; }
  const ControllerParams& params() const { return params_; }

  /// One control tick at joint configuration q with the latest sensor sample.
  TickResult tick(const VectorXd& q, const std::vector<ContactState>& sensor);

  /// Tracking QP for arbitrary fingertip commands (used by the reaching phase).
  TickResult track(const KinematicState& ks, const std::vector<FingertipCommand>& commands);

  int qp_solves() const { return qp_solves_; }

 private:
  const RobotModel* model_;
  ControllerParams params_;
  ControllerState state_;
  QpSolver solver_;
  VectorXd last_qd_;
  std::optional<VectorXd> last_y_;
  int failures_ = 0;
  int qp_solves_ = 0;
};

}  // namespace reflex
