#include "reflexgrasp/tracking.hpp"

#include <limits>

#include "reflexgrasp/errors.hpp"

namespace reflex {

QpProblem assemble_tracking_qp(const KinematicState& ks, const std::vector<FingertipCommand>& commands,
                               const RobotModel& model, const CollisionValues& collisions,
                               const TrackingParams& params) {
  const int n = model.dof();
  if (commands.size() != ks.tips.size()) {
    throw Error(ErrorKind::InvalidArgument, "one command per fingertip is required");
  }
  QpProblem p;
  p.H = MatrixXd::Zero(n, n);
  p.g = VectorXd::Zero(n);
  for (std::size_t i = 0; i < commands.size(); ++i) {
    const TipKinematics& tk = ks.tips[i];
    const FingertipCommand& c = commands[i];
    if (c.alpha != 0 && c.alpha != 1) throw Error(ErrorKind::InvalidArgument, "alpha must be 0 or 1");
    p.H.noalias() += tk.Jx.transpose() * tk.Jx;
    p.g.noalias() -= tk.Jx.transpose() * c.linear;
    if (c.alpha) {
      const double w = params.orientation_weight;
      p.H.noalias() += w * tk.JR.transpose() * tk.JR;
      p.g.noalias() -= w * tk.JR.transpose() * c.angular;
    }
  }
  p.H.diagonal().array() += params.joint_damping;
  p.H = 0.5 * (p.H + p.H.transpose());

  const int k = static_cast<int>(collisions.gamma.size());
  const double inf = std::numeric_limits<double>::infinity();
  const double h = params.horizon;
  p.A = MatrixXd::Zero(k + 2 * n, n);
  p.lb.resize(k + 2 * n);
  p.ub.resize(k + 2 * n);

  const double eps = k ? std::min(params.eps_gamma, collisions.gamma.minCoeff()) : params.eps_gamma;
  for (int j = 0; j < k; ++j) {
    p.A.row(j) = h * collisions.jac.row(j);
    p.lb[j] = eps - collisions.gamma[j];
    p.ub[j] = inf;
  }
  const VectorXd qmin = model.q_min(), qmax = model.q_max();
  const VectorXd qdmin = model.qd_min(), qdmax = model.qd_max();
  for (int i = 0; i < n; ++i) {
    p.A(k + i, i) = h;
    p.lb[k + i] = std::min(qmin[i] - ks.q[i], 0.0);
    p.ub[k + i] = std::max(qmax[i] - ks.q[i], 0.0);
    p.A(k + n + i, i) = 1.0;
    p.lb[k + n + i] = qdmin[i];
    p.ub[k + n + i] = qdmax[i];
  }
  return p;
}

}  // namespace reflex
