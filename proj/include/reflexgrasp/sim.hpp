#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "reflexgrasp/controller.hpp"
#include "reflexgrasp/kinematics.hpp"
#include "reflexgrasp/surface.hpp"

namespace reflex {

constexpr double kContactTol = 1e-4;  // m

struct ContactGeometry {
  Vector3d c;        // on the fingertip sphere
  Vector3d n;        // pressing normal, from the tip centre toward the object
  double distance;   // signed distance from the tip centre to the object surface
};

/// Signed distance from x to the object boundary and the unit direction from x
/// toward the object (toward the closest point when outside, away from it when
/// inside).
struct SurfaceDistance {
  double distance;
  Vector3d direction;
  Vector3d closest;
};
SurfaceDistance surface_distance(const Surface& s, const Vector3d& x);

/// Contact iff the distance from the tip centre to the surface is at most
/// radius + tol. The contact point sits on the tip sphere along the direction
/// to the closest object point.
std::optional<ContactGeometry> detect_contact(const Vector3d& x, double radius, const Surface& s,
                                              double tol = kContactTol);

struct SimParams {
  double integration_rate = 1000.0;
  double max_time = 10.0;
  double contact_tol = kContactTol;
  double noise_sigma = 0.0;   // m, Gaussian on contact points
  double dropout_rate = 0.0;  // per-fingertip probability of a missed contact
  std::uint64_t seed = 1;
  bool stop_on_stable = true;
  bool block_penetration = true;
  bool threaded = false;      // integration and control on separate threads
  int max_control_lag = 1;    // sensor samples the control thread may trail by
};

struct WorldState {
  VectorXd q;
  Surface object;
  double time = 0.0;
  long integration_steps = 0;
  long sensor_samples = 0;
  long control_ticks = 0;
};

struct TraceRow {
  double time;
  Mode mode;
  std::optional<StabilityEvald> stability;
  bool contact[2];
  double theta[2];
  std::optional<QpStatus> qp_status;  // empty when no QP ran that tick
  int qp_iters;
};

std::string trace_csv(const std::vector<TraceRow>& rows);
std::vector<std::string> trace_columns();

enum class RunOutcome { Stable, Timeout, Error };
const char* to_string(RunOutcome o);

struct DropoutEvent {
  Mode before;
  Mode after;
};

struct RunResult {
  RunOutcome outcome = RunOutcome::Timeout;
  std::optional<StabilityEvald> final_stability;
  double time_to_stable = 0.0;
  int control_ticks_to_stable = 0;
  int transitions = 0;
  int qp_solves = 0;
  double max_penetration = 0.0;  // m, over in-contact fingertips
  std::string error;
  std::vector<TraceRow> trace;
  std::vector<DropoutEvent> dropouts;
  std::optional<WorldState> final_world;
};

/// Quasi-static kinematic world around a fixed object.
class Simulator {
 public:
  Simulator(const RobotModel& model, Surface object, VectorXd q0, ControllerParams cparams, SimParams sparams);

  const WorldState& world() const { return world_; }
  const ReflexController& controller() const { return controller_; }

  /// Tactile reading at the current configuration, including noise and dropout.
  std::vector<ContactState> sense();

  /// One integration step; senses and runs the controller on the rate ticks.
  void step();

  /// Runs until Stable (when stop_on_stable) or max_time.
  RunResult run();

  /// One Euler step with the given joint velocity, bypassing sensing and
  /// control. Touching tips are still kept from moving inward.
  void integrate(const VectorXd& qd);

 private:
  void record(const TickResult& tr);
  RunResult run_threaded();

  const RobotModel* model_;
  ControllerParams cparams_;
  SimParams sparams_;
  WorldState world_;
  ReflexController controller_;
  std::mt19937_64 rng_;
  VectorXd qd_held_;
  std::vector<ContactState> last_reading_;
  long sensor_div_, control_div_;
  RunResult result_;
  std::vector<bool> dropped_;
};

/// Joint velocity closest to qd (Euclidean) that does not move any touching
/// fingertip further into the object: dir_i' J_i qd <= 0 for every tip whose
/// centre is within its radius of the surface.
VectorXd project_nonpenetrating(const VectorXd& qd, const std::vector<Eigen::RowVectorXd>& rows);

// -- Scenario construction ----------------------------------------------------

enum class Perturbation { None, BoxYaw, CylinderOffset, EllipsoidOffset };
const char* to_string(Perturbation p);

struct Scenario {
  Surface object;
  Vector3d target;                          // reaching goal for the fingertip midpoint
  Vector3d horizontal_axis = Vector3d::UnitX();  // image-plane horizontal, normal to the closing axis
};

/// None: unchanged. Box: yaw drawn uniformly in [-magnitude, magnitude] rad. Cylinder: target
/// shifted by magnitude along horizontal_axis. Ellipsoid: target shifted by
/// magnitude along the table normal.
Scenario apply_perturbation(const Scenario& base, Perturbation kind, double magnitude, std::mt19937_64& rng);

struct ReachResult {
  VectorXd q;
  bool converged = false;
  double time = 0.0;
  double error = 0.0;
};

/// Drives the fingertip midpoint to the target with the reaching field tracked
/// by the same QP; used to produce pre-closure configurations.
ReachResult reach(const RobotModel& model, const Surface& object, const VectorXd& q0, const Vector3d& target,
                  const ControllerParams& params, double gain, double max_time = 5.0, double tol = 5e-4);

}  // namespace reflex
