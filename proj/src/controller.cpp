#include "reflexgrasp/controller.hpp"

#include <cmath>
#include <set>

#include "reflexgrasp/errors.hpp"

namespace reflex {

using nlohmann::json;

const char* to_string(Mode m) {
  switch (m) {
    case Mode::Closing: return "Closing";
    case Mode::Adjusting: return "Adjusting";
    case Mode::Stable: return "Stable";
  }
  return "Unknown";
}

namespace {

[[noreturn]] void config_error(const std::string& field, const std::string& msg) {
  throw Error(ErrorKind::Config, field + ": " + msg);
}

}  // namespace

void ControllerParams::validate() const {
  if (!(V_c >= 0.0)) config_error("V_c", "must be >= 0");
  if (!(V_a >= 0.0)) config_error("V_a", "must be >= 0");
  if (!(V_n >= 0.0)) config_error("V_n", "must be >= 0");
  if (!(W >= 0.0)) config_error("W", "must be >= 0");
  if (!(delta > 0.0 && delta < std::numbers::pi / 2.0)) config_error("delta_rad", "must lie in (0, pi/2)");
  if (!(f_stable > 0.0)) config_error("f_stable_rad", "must be > 0");
  if (!(horizon > 0.0)) config_error("horizon_s", "must be > 0");
  if (!(sensor_rate > 0.0)) config_error("sensor_rate_hz", "must be > 0");
  if (!(control_rate > 0.0 && control_rate <= sensor_rate)) {
    config_error("control_rate_hz", "must be positive and not exceed sensor_rate_hz");
  }
  if (stable_hold_samples < 1) config_error("stable_hold_samples", "must be >= 1");
  if (solver_hold_ticks < 0) config_error("solver_hold_ticks", "must be >= 0");
  if (!(orientation_weight >= 0.0)) config_error("orientation_weight", "must be >= 0");
  if (!(joint_damping >= 0.0)) config_error("joint_damping", "must be >= 0");
  if (!(qp_tol > 0.0)) config_error("qp_tol", "must be > 0");
  if (qp_max_iters < 1) config_error("qp_max_iters", "must be >= 1");
}

TrackingParams ControllerParams::tracking() const {
  TrackingParams t;
  t.horizon = horizon;
  t.eps_gamma = eps_gamma;
  t.orientation_weight = orientation_weight;
  t.joint_damping = joint_damping;
  return t;
}

ControllerParams controller_params_from_json(const json& j) {
  if (!j.is_object()) config_error("controller", "expected an object");
  ControllerParams p;
  static const std::set<std::string> known = {
      "V_c", "V_a", "V_n", "W", "delta_rad", "f_stable_rad", "horizon_s", "eps_gamma", "method", "variant",
      "sensor_rate_hz", "control_rate_hz", "stable_hold_samples", "solver_hold_ticks", "orientation_weight",
      "joint_damping", "qp_tol", "qp_max_iters"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) config_error("controller." + key, "unknown field");
  }
  auto num = [&](const char* key, double& dst) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) config_error(std::string("controller.") + key, "expected a number");
    dst = j[key].get<double>();
  };
  auto integer = [&](const char* key, int& dst) {
    if (!j.contains(key)) return;
    if (!j[key].is_number_integer()) config_error(std::string("controller.") + key, "expected an integer");
    dst = j[key].get<int>();
  };
  num("V_c", p.V_c);
  num("V_a", p.V_a);
  num("V_n", p.V_n);
  num("W", p.W);
  num("delta_rad", p.delta);
  num("f_stable_rad", p.f_stable);
  num("horizon_s", p.horizon);
  num("eps_gamma", p.eps_gamma);
  num("sensor_rate_hz", p.sensor_rate);
  num("control_rate_hz", p.control_rate);
  integer("stable_hold_samples", p.stable_hold_samples);
  integer("solver_hold_ticks", p.solver_hold_ticks);
  num("orientation_weight", p.orientation_weight);
  num("joint_damping", p.joint_damping);
  num("qp_tol", p.qp_tol);
  integer("qp_max_iters", p.qp_max_iters);
  if (j.contains("method")) {
    const std::string m = j["method"].is_string() ? j["method"].get<std::string>() : "";
    if (m == "pgd") {
      p.method = DescentMethod::PGD;
    } else if (m == "cfgd") {
      p.method = DescentMethod::CFGD;
    } else {
      config_error("controller.method", "expected pgd or cfgd");
    }
  }
  if (j.contains("variant")) {
    const std::string v = j["variant"].is_string() ? j["variant"].get<std::string>() : "";
    if (v == "vanilla") {
      p.variant = ControllerVariant::Vanilla;
    } else if (v == "reflex") {
      p.variant = ControllerVariant::Reflex;
    } else {
      config_error("controller.variant", "expected vanilla or reflex");
    }
  }
  p.validate();
  return p;
}

json to_json(const ControllerParams& p) {
  return {{"V_c", p.V_c},
          {"V_a", p.V_a},
          {"V_n", p.V_n},
          {"W", p.W},
          {"delta_rad", p.delta},
          {"f_stable_rad", p.f_stable},
          {"horizon_s", p.horizon},
          {"eps_gamma", p.eps_gamma},
          {"method", to_string(p.method)},
          {"variant", p.variant == ControllerVariant::Vanilla ? "vanilla" : "reflex"},
          {"sensor_rate_hz", p.sensor_rate},
          {"control_rate_hz", p.control_rate},
          {"stable_hold_samples", p.stable_hold_samples},
          {"solver_hold_ticks", p.solver_hold_ticks},
          {"orientation_weight", p.orientation_weight},
          {"joint_damping", p.joint_damping},
          {"qp_tol", p.qp_tol},
          {"qp_max_iters", p.qp_max_iters}};
}

ControllerState ControllerState::initial(std::size_t fingertips) {
  ControllerState s;
  s.latched_normals.assign(fingertips, std::nullopt);
  s.last_sensor.assign(fingertips, ContactState{});
  s.theta.assign(fingertips, 0.0);
  return s;
}

ControllerState step_mode(const ControllerState& state, const std::vector<ContactState>& sensor,
                          const ControllerParams& params) {
  ControllerState next = state;
  next.last_sensor = sensor;
  if (next.latched_normals.size() != sensor.size()) next.latched_normals.assign(sensor.size(), std::nullopt);
  if (next.theta.size() != sensor.size()) next.theta.assign(sensor.size(), 0.0);
  if (state.mode == Mode::Stable) return next;

  bool all = !sensor.empty();
  for (const auto& s : sensor) all = all && s.in_contact;

  next.stability.reset();
  if (all && sensor.size() == 2) {
    try {
      next.stability = evaluate(ContactPaird{sensor[0].c, sensor[1].c, sensor[0].n, sensor[1].n});
    } catch (const Error&) {
      next.stability.reset();
    }
  }
  const bool stable_now = all && next.stability && next.stability->f < params.f_stable;
  next.stable_count = stable_now ? state.stable_count + 1 : 0;

  Mode mode;
  if (params.variant == ControllerVariant::Vanilla) {
    mode = all ? Mode::Stable : Mode::Closing;
  } else if (!all) {
    mode = Mode::Closing;
  } else if (next.stable_count >= params.stable_hold_samples) {
    mode = Mode::Stable;
  } else {
    mode = Mode::Adjusting;
  }

  if (mode == Mode::Closing) {
    if (state.mode != Mode::Closing) next.latched_normals.assign(sensor.size(), std::nullopt);
    for (std::size_t i = 0; i < sensor.size(); ++i) {
      if (sensor[i].in_contact && !next.latched_normals[i]) next.latched_normals[i] = sensor[i].n;
    }
  } else {
    next.latched_normals.assign(sensor.size(), std::nullopt);
  }
  if (mode != state.mode) ++next.transitions;
  next.mode = mode;
  return next;
}

std::vector<FingertipCommand> closing_velocities(const ControllerState& state, const std::vector<Vector3d>& x,
                                                 const ControllerParams& params) {
  Vector3d centroid = Vector3d::Zero();
  for (const auto& p : x) centroid += p;
  centroid /= static_cast<double>(x.size());
  std::vector<FingertipCommand> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i < state.latched_normals.size() && state.latched_normals[i]) {
      out[i].linear = params.V_c * state.latched_normals[i]->normalized();
      continue;
    }
    const Vector3d d = centroid - x[i];
    if (d.norm() < 1e-9) throw Error(ErrorKind::CentroidDegenerate, "fingertip at the centroid");
    out[i].linear = params.V_c * d.normalized();
  }
  return out;
}

ConeCommand rotate_to_cone(const Vector3d& x, const Matrix3d& R, const Vector3d& r_local, const Vector3d& c,
                           const ControllerParams& params) {
  const Vector3d to_contact = c - x;
  if (!(to_contact.norm() > 1e-9)) throw Error(ErrorKind::ZeroVector, "contact at the fingertip centre");
  const Vector3d u = (R * r_local).normalized();
  const Vector3d v = to_contact.normalized();
  ConeCommand out{angle_between(u, v), Vector3d::Zero()};
  const Vector3d axis = u.cross(v);
  const double s = axis.norm();
  if (s < 1e-9) {
    if (out.theta > params.delta) throw Error(ErrorKind::ConeAxisAligned, "contact opposite the reference direction");
    return out;
  }
  out.angular = params.W * axis / s;
  return out;
}

namespace {

// Deterministic rotation axis for the antiparallel case: u crossed with the
// basis vector it is least aligned with.
Vector3d perpendicular_axis(const Vector3d& u) {
  Eigen::Index k;
  u.cwiseAbs().minCoeff(&k);
  return u.cross(Vector3d::Unit(k)).normalized();
}

}  // namespace

std::vector<FingertipCommand> adjustment_velocities(const ControllerState& state, const KinematicState& ks,
                                                    const RobotModel& model, const ControllerParams& params) {
  if (state.last_sensor.size() != 2 || ks.tips.size() != 2) {
    throw Error(ErrorKind::Unimplemented, "adjustment is implemented for two fingertips");
  }
  const ContactState& s1 = state.last_sensor[0];
  const ContactState& s2 = state.last_sensor[1];
  const ContactPaird cp{s1.c, s2.c, s1.n.normalized(), s2.n.normalized()};
  const auto dirs = descent_direction(params.method, cp, SingularPolicy::Throw);
  const Vector3d d[2] = {dirs.d1, dirs.d2};
  std::vector<FingertipCommand> out(2);
  for (int i = 0; i < 2; ++i) {
    const ContactState& s = state.last_sensor[static_cast<std::size_t>(i)];
    const Vector3d n = s.n.normalized();
    const double dn = d[i].norm();
    out[static_cast<std::size_t>(i)].linear = (dn > 1e-12 ? Vector3d(params.V_a * d[i] / dn) : Vector3d::Zero()) - params.V_n * n;
    const TipKinematics& tk = ks.tips[static_cast<std::size_t>(i)];
    const Vector3d& r_local = model.fingertips[static_cast<std::size_t>(i)].reference_direction;
    ConeCommand cone;
    try {
      cone = rotate_to_cone(tk.x, tk.R, r_local, s.c, params);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::ConeAxisAligned) throw;
      cone.theta = std::numbers::pi;
      cone.angular = params.W * perpendicular_axis(tk.R * r_local);
    }
    out[static_cast<std::size_t>(i)].angular = cone.angular;
    out[static_cast<std::size_t>(i)].alpha = cone.theta > params.delta ? 1 : 0;
  }
  return out;
}

Vector3d reach_velocity(const Vector3d& x1, const Vector3d& x2, const Vector3d& x_star, double gain) {
  return gain * (x_star - 0.5 * (x1 + x2));
}

ReflexController::ReflexController(const RobotModel& model, ControllerParams params)
    : model_(&model), params_(params), state_(ControllerState::initial(model.fingertips.size())) {
  params_.validate();
  QpSettings qs;
  qs.tol = params_.qp_tol;
  qs.max_iters = params_.qp_max_iters;
  solver_ = QpSolver(qs);
  last_qd_ = VectorXd::Zero(model.dof());
}

TickResult ReflexController::track(const KinematicState& ks, const std::vector<FingertipCommand>& commands) {
  const CollisionValues cv = collision_values(*model_, ks);
  const QpProblem p = assemble_tracking_qp(ks, commands, *model_, cv, params_.tracking());
  const QpSolution sol = solver_.solve(p, last_qd_, last_y_);
  ++qp_solves_;
  TickResult r;
  r.qp_status = sol.status;
  r.qp_iters = sol.iterations;
  r.solved_qp = true;
  if (sol.status == QpStatus::Solved) {
    failures_ = 0;
    last_qd_ = sol.x;
    last_y_ = sol.y;
    r.qd = sol.x;
    return r;
  }
  ++failures_;
  last_y_.reset();
  if (failures_ > params_.solver_hold_ticks) last_qd_.setZero();
  r.qd = last_qd_;
  return r;
}

TickResult ReflexController::tick(const VectorXd& q, const std::vector<ContactState>& sensor) {
  state_ = step_mode(state_, sensor, params_);
  if (state_.mode == Mode::Stable) {
    last_qd_.setZero();
    TickResult r;
    r.qd = VectorXd::Zero(model_->dof());
    return r;
  }
  const KinematicState ks = forward_kinematics(*model_, q);
  std::vector<FingertipCommand> commands;
  if (state_.mode == Mode::Closing) {
    std::vector<Vector3d> x;
    for (const auto& t : ks.tips) x.push_back(t.x);
    commands = closing_velocities(state_, x, params_);
  } else {
    try {
      commands = adjustment_velocities(state_, ks, *model_, params_);
    } catch (const Error& e) {
      // An angle at 0 or pi here means the pair is already antipodal.
      if (e.kind() != ErrorKind::AngleSingular) throw;
      commands.assign(ks.tips.size(), FingertipCommand{});
    }
    for (std::size_t i = 0; i < ks.tips.size(); ++i) {
      try {
        state_.theta[i] = angle_between(Vector3d(ks.tips[i].R * model_->fingertips[i].reference_direction),
                                        Vector3d(state_.last_sensor[i].c - ks.tips[i].x));
      } catch (const Error&) {
        state_.theta[i] = 0.0;
      }
    }
  }
  return track(ks, commands);
}

}  // namespace reflex
