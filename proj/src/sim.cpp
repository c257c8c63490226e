#include "reflexgrasp/sim.hpp"

#include <cmath>
#include <condition_variable>
#include <mutex>
#include <thread>

#include "reflexgrasp/csv.hpp"
#include "reflexgrasp/errors.hpp"

namespace reflex {

SurfaceDistance surface_distance(const Surface& s, const Vector3d& x) {
  const SurfacePoint sp = project(s, x);
  const Vector3d diff = sp.position - x;
  const double dist = diff.norm();
  const bool inside = implicit_value(s, x) < 0.0;
  Vector3d dir;
  if (dist > 1e-12) {
    dir = inside ? Vector3d(-diff / dist) : Vector3d(diff / dist);
  } else {
    dir = -sp.outward_normal;
  }
  return {inside ? -dist : dist, dir, sp.position};
}

std::optional<ContactGeometry> detect_contact(const Vector3d& x, double radius, const Surface& s, double tol) {
  const SurfaceDistance sd = surface_distance(s, x);
  if (sd.distance > radius + tol) return std::nullopt;
  return ContactGeometry{x + radius * sd.direction, sd.direction, sd.distance};
}

std::vector<std::string> trace_columns() {
  return {"time_s",       "mode",       "phi1_rad",   "phi2_rad",  "f_rad",   "tip1_contact",
          "tip2_contact", "theta1_rad", "theta2_rad", "qp_status", "qp_iters"};
}

std::string trace_csv(const std::vector<TraceRow>& rows) {
  CsvWriter csv(trace_columns());
  for (const auto& r : rows) {
    auto opt = [&](double StabilityEvald::*field) {
      return r.stability ? format_double((*r.stability).*field) : std::string("nan");
    };
    csv.row({format_double(r.time), to_string(r.mode), opt(&StabilityEvald::phi1), opt(&StabilityEvald::phi2),
             opt(&StabilityEvald::f), r.contact[0] ? "1" : "0", r.contact[1] ? "1" : "0", format_double(r.theta[0]),
             format_double(r.theta[1]), r.qp_status ? to_string(*r.qp_status) : "None", std::to_string(r.qp_iters)});
  }
  return csv.str();
}

const char* to_string(RunOutcome o) {
  switch (o) {
    case RunOutcome::Stable: return "Stable";
    case RunOutcome::Timeout: return "Timeout";
    case RunOutcome::Error: return "Error";
  }
  return "Unknown";
}

VectorXd project_nonpenetrating(const VectorXd& qd, const std::vector<Eigen::RowVectorXd>& rows) {
  std::vector<int> violated;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].dot(qd) > 0.0) violated.push_back(static_cast<int>(i));
  }
  if (violated.empty()) return qd;
  // Enumerate subsets of constraints held at equality; keep the feasible
  // projection with the smallest change.
  const int k = static_cast<int>(rows.size());
  VectorXd best = VectorXd::Zero(qd.size());
  double best_change = (best - qd).squaredNorm();
  for (int mask = 1; mask < (1 << k); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < k; ++i)
      if (mask & (1 << i)) act.push_back(i);
    MatrixXd A(act.size(), qd.size());
    for (std::size_t r = 0; r < act.size(); ++r) A.row(static_cast<Eigen::Index>(r)) = rows[static_cast<std::size_t>(act[r])];
    const MatrixXd G = A * A.transpose();
    const Eigen::LDLT<MatrixXd> ldlt(G);
    if (ldlt.info() != Eigen::Success || G.diagonal().minCoeff() < 1e-14) continue;
    const VectorXd lambda = ldlt.solve(A * qd);
    if ((lambda.array() < -1e-12).any()) continue;
    const VectorXd cand = qd - A.transpose() * lambda;
    bool ok = true;
    for (const auto& r : rows) ok = ok && r.dot(cand) <= 1e-12;
    const double change = (cand - qd).squaredNorm();
    if (ok && change < best_change) {
      best = cand;
      best_change = change;
    }
  }
  return best;
}

namespace {

struct TipDistances {
  std::vector<Eigen::RowVectorXd> blocking_rows;
  double max_penetration = 0.0;
};

TipDistances tip_distances(const RobotModel& model, const KinematicState& ks, const Surface& object) {
  TipDistances out;
  for (std::size_t i = 0; i < ks.tips.size(); ++i) {
    const double radius = model.fingertips[i].radius;
    const SurfaceDistance sd = surface_distance(object, ks.tips[i].x);
    out.max_penetration = std::max(out.max_penetration, radius - sd.distance);
    if (sd.distance <= radius) out.blocking_rows.push_back(sd.direction.transpose() * ks.tips[i].Jx);
  }
  return out;
}

VectorXd clamp_q(const RobotModel& m, const VectorXd& q) { return q.cwiseMax(m.q_min()).cwiseMin(m.q_max()); }

long rate_divisor(double integration_rate, double rate, const char* field) {
  const double ratio = integration_rate / rate;
  const long div = std::lround(ratio);
  if (div < 1 || std::abs(ratio - static_cast<double>(div)) > 1e-9) {
    throw Error(ErrorKind::Config, std::string(field) + ": integration rate must be an integer multiple");
  }
  return div;
}

}  // namespace

Simulator::Simulator(const RobotModel& model, Surface object, VectorXd q0, ControllerParams cparams,
                     SimParams sparams)
    : model_(&model),
      cparams_(cparams),
      sparams_(sparams),
      world_{std::move(q0), std::move(object)},
      controller_(model, cparams),
      rng_(sparams.seed) {
  if (world_.q.size() != model.dof()) throw Error(ErrorKind::InvalidArgument, "q0 has the wrong dimension");
  sensor_div_ = rate_divisor(sparams_.integration_rate, cparams_.sensor_rate, "sensor_rate_hz");
  control_div_ = rate_divisor(sparams_.integration_rate, cparams_.control_rate, "control_rate_hz");
  qd_held_ = VectorXd::Zero(model.dof());
  last_reading_.assign(model.fingertips.size(), ContactState{});
  dropped_.assign(model.fingertips.size(), false);
}

std::vector<ContactState> Simulator::sense() {
  const KinematicState ks = forward_kinematics(*model_, world_.q);
  std::vector<ContactState> reading(ks.tips.size());
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (std::size_t i = 0; i < ks.tips.size(); ++i) {
    dropped_[i] = false;
    const double radius = model_->fingertips[i].radius;
    const auto cg = detect_contact(ks.tips[i].x, radius, world_.object, sparams_.contact_tol);
    // Draws happen unconditionally so the random stream does not depend on
    // the contact pattern.
    const Vector3d jitter(noise(rng_), noise(rng_), noise(rng_));
    const double drop = u01(rng_);
    if (!cg) continue;
    if (sparams_.dropout_rate > 0.0 && drop < sparams_.dropout_rate) {
      dropped_[i] = true;
      continue;
    }
    Vector3d c = cg->c;
    Vector3d n = cg->n;
    if (sparams_.noise_sigma > 0.0) {
      const Vector3d noisy = c + sparams_.noise_sigma * jitter;
      const Vector3d d = noisy - ks.tips[i].x;
      if (d.norm() > 1e-12) n = d.normalized();
      c = ks.tips[i].x + radius * n;
    }
    reading[i] = {true, c, n, 1.0};
  }
  return reading;
}

void Simulator::integrate(const VectorXd& qd) {
  VectorXd v = qd;
  const KinematicState ks = forward_kinematics(*model_, world_.q);
  const TipDistances td = tip_distances(*model_, ks, world_.object);
  result_.max_penetration = std::max(result_.max_penetration, td.max_penetration);
  if (sparams_.block_penetration && !td.blocking_rows.empty()) v = project_nonpenetrating(v, td.blocking_rows);
  world_.q = clamp_q(*model_, world_.q + v / sparams_.integration_rate);
  ++world_.integration_steps;
  world_.time = static_cast<double>(world_.integration_steps) / sparams_.integration_rate;
}

void Simulator::record(const TickResult& tr) {
  const ControllerState& st = controller_.state();
  TraceRow row{};
  row.time = world_.time;
  row.mode = st.mode;
  row.stability = st.stability;
  for (std::size_t i = 0; i < 2 && i < last_reading_.size(); ++i) {
    row.contact[i] = last_reading_[i].in_contact;
    row.theta[i] = i < st.theta.size() ? st.theta[i] : 0.0;
  }
  if (tr.solved_qp) row.qp_status = tr.qp_status;
  row.qp_iters = tr.qp_iters;
  result_.trace.push_back(row);
}

void Simulator::step() {
  const long k = world_.integration_steps;
  if (k % sensor_div_ == 0) {
    last_reading_ = sense();
    ++world_.sensor_samples;
  }
  if (k % control_div_ == 0) {
    const Mode before = controller_.state().mode;
    const TickResult tr = controller_.tick(world_.q, last_reading_);
    qd_held_ = tr.qd;
    ++world_.control_ticks;
    for (bool d : dropped_) {
      if (d) {
        result_.dropouts.push_back({before, controller_.state().mode});
        break;
      }
    }
    record(tr);
  }
  integrate(qd_held_);
}

RunResult Simulator::run() {
  if (sparams_.threaded) return run_threaded();
  const long total = std::lround(sparams_.max_time * sparams_.integration_rate);
  try {
    while (world_.integration_steps < total) {
      step();
      if (sparams_.stop_on_stable && controller_.state().mode == Mode::Stable) break;
    }
  } catch (const Error& e) {
    result_.outcome = RunOutcome::Error;
    result_.error = e.what();
  }
  const ControllerState& st = controller_.state();
  if (result_.outcome != RunOutcome::Error) {
    result_.outcome = st.mode == Mode::Stable ? RunOutcome::Stable : RunOutcome::Timeout;
  }
  result_.final_stability = st.stability;
  if (st.mode == Mode::Stable && !result_.trace.empty()) {
    for (const auto& row : result_.trace) {
      if (row.mode == Mode::Stable) {
        result_.time_to_stable = row.time;
        break;
      }
      ++result_.control_ticks_to_stable;
    }
  }
  result_.transitions = st.transitions;
  result_.qp_solves = controller_.qp_solves();
  result_.final_world = world_;
  return result_;
}

// Integration on this thread, control on a worker. The two exchange
// latest-value snapshots; the integrator waits whenever the controller falls
// more than max_control_lag samples behind.
RunResult Simulator::run_threaded() {
  struct Shared {
    std::mutex mu;
    std::condition_variable cv;
    long published = 0, processed = 0;
    VectorXd q;
    std::vector<ContactState> reading;
    double time = 0.0;
    VectorXd qd;
    bool stop = false;
    bool stable = false;
    std::string error;
  } sh;
  sh.qd = VectorXd::Zero(model_->dof());

  std::thread worker([&] {
    long seen = 0;
    for (;;) {
      VectorXd q;
      std::vector<ContactState> reading;
      double t;
      {
        std::unique_lock lock(sh.mu);
        sh.cv.wait(lock, [&] { return sh.stop || sh.published > seen; });
        if (sh.stop) return;
        seen = sh.published;
        q = sh.q;
        reading = sh.reading;
        t = sh.time;
      }
      try {
        const Mode before = controller_.state().mode;
        const TickResult tr = controller_.tick(q, reading);
        std::lock_guard lock(sh.mu);
        sh.qd = tr.qd;
        last_reading_ = reading;
        const double saved = world_.time;
        world_.time = t;
        for (bool d : dropped_) {
          if (d) {
            result_.dropouts.push_back({before, controller_.state().mode});
            break;
          }
        }
        record(tr);
        world_.time = saved;
        ++world_.control_ticks;
        sh.stable = controller_.state().mode == Mode::Stable;
        sh.processed = seen;
      } catch (const Error& e) {
        std::lock_guard lock(sh.mu);
        sh.error = e.what();
        sh.processed = seen;
        sh.stop = true;
      }
      sh.cv.notify_all();
    }
  });

  const long total = std::lround(sparams_.max_time * sparams_.integration_rate);
  std::vector<ContactState> reading = last_reading_;
  try {
    while (world_.integration_steps < total) {
      const long k = world_.integration_steps;
      if (k % sensor_div_ == 0) {
        std::lock_guard lock(sh.mu);
        reading = sense();
        ++world_.sensor_samples;
      }
      VectorXd qd;
      {
        std::unique_lock lock(sh.mu);
        if (k % control_div_ == 0) {
          sh.q = world_.q;
          sh.reading = reading;
          sh.time = world_.time;
          ++sh.published;
          sh.cv.notify_all();
          sh.cv.wait(lock, [&] { return sh.stop || sh.processed >= sh.published - sparams_.max_control_lag; });
        }
        if (sh.stop || (sparams_.stop_on_stable && sh.stable)) break;
        qd = sh.qd;
      }
      integrate(qd);
    }
  } catch (const Error& e) {
    std::lock_guard lock(sh.mu);
    sh.error = e.what();
  }
  {
    std::unique_lock lock(sh.mu);
    sh.cv.wait(lock, [&] { return sh.stop || sh.processed >= sh.published; });
    sh.stop = true;
  }
  sh.cv.notify_all();
  worker.join();

  const ControllerState& st = controller_.state();
  if (!sh.error.empty()) {
    result_.outcome = RunOutcome::Error;
    result_.error = sh.error;
  } else {
    result_.outcome = st.mode == Mode::Stable ? RunOutcome::Stable : RunOutcome::Timeout;
  }
  result_.final_stability = st.stability;
  for (const auto& row : result_.trace) {
    if (row.mode == Mode::Stable) {
      result_.time_to_stable = row.time;
      break;
    }
    ++result_.control_ticks_to_stable;
  }
  result_.transitions = st.transitions;
  result_.qp_solves = controller_.qp_solves();
  result_.final_world = world_;
  return result_;
}

// -- Scenarios ------------------------------------------------------------------

const char* to_string(Perturbation p) {
  switch (p) {
    case Perturbation::None: return "none";
    case Perturbation::BoxYaw: return "box_yaw";
    case Perturbation::CylinderOffset: return "cylinder_offset";
    case Perturbation::EllipsoidOffset: return "ellipsoid_offset";
  }
  return "unknown";
}

Scenario apply_perturbation(const Scenario& base, Perturbation kind, double magnitude, std::mt19937_64& rng) {
  if (!(magnitude >= 0.0)) throw Error(ErrorKind::InvalidArgument, "perturbation magnitude must be >= 0");
  Scenario out = base;
  switch (kind) {
    case Perturbation::None:
      break;
    case Perturbation::BoxYaw: {
      const double yaw = magnitude > 0.0 ? std::uniform_real_distribution<double>(-magnitude, magnitude)(rng) : 0.0;
      Pose pose = base.object.pose();
      pose.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Vector3d::UnitZ())) * pose.rotation;
      out.object = base.object.with_pose(pose);
      break;
    }
    case Perturbation::CylinderOffset:
      out.target = base.target + magnitude * base.horizontal_axis.normalized();
      break;
    case Perturbation::EllipsoidOffset:
      out.target = base.target + magnitude * Vector3d::UnitZ();
      break;
  }
  return out;
}

ReachResult reach(const RobotModel& model, const Surface& object, const VectorXd& q0, const Vector3d& target,
                  const ControllerParams& params, double gain, double max_time, double tol) {
  ReflexController ctrl(model, params);
  const double rate = 1000.0;
  const long div = rate_divisor(rate, params.control_rate, "control_rate_hz");
  ReachResult out;
  out.q = q0;
  const long total = std::lround(max_time * rate);
  VectorXd qd = VectorXd::Zero(model.dof());
  for (long k = 0; k < total; ++k) {
    const KinematicState ks = forward_kinematics(model, out.q);
    if (k % div == 0) {
      const Vector3d mid = 0.5 * (ks.tips[0].x + ks.tips[1].x);
      out.error = (mid - target).norm();
      out.time = static_cast<double>(k) / rate;
      if (out.error < tol) {
        out.converged = true;
        return out;
      }
      const Vector3d v = reach_velocity(ks.tips[0].x, ks.tips[1].x, target, gain);
      std::vector<FingertipCommand> cmds(ks.tips.size());
      for (auto& c : cmds) c.linear = v;
      qd = ctrl.track(ks, cmds).qd;
    }
    VectorXd v = qd;
    const TipDistances td = tip_distances(model, ks, object);
    if (!td.blocking_rows.empty()) v = project_nonpenetrating(v, td.blocking_rows);
    out.q = clamp_q(model, out.q + v / rate);
  }
  const KinematicState ks = forward_kinematics(model, out.q);
  out.error = (0.5 * (ks.tips[0].x + ks.tips[1].x) - target).norm();
  out.time = max_time;
  out.converged = out.error < tol;
  return out;
}

}  // namespace reflex
