#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "reflexgrasp/grasp_stability.hpp"
#include "reflexgrasp/surface.hpp"

#include "json.hpp"

namespace reflex {

enum class DescentStatus { Converged, LocalMinimum, RightAngleFailure, IterLimit };

const char* to_string(DescentStatus s);

/// Step rule: each contact moves along d / |d| by
///   min(step_size * min(1, |d| * characteristic_size), approach_fraction * |c2 - c1| * f),
/// i.e. a fixed-length step that shrinks with the gradient once the
/// dimensionless tangential gradient drops below one, and with f near the
/// optimum.
struct DescentConfig {
  DescentMethod method = DescentMethod::CFGD;
  double step_size = 0.01;        // length per iteration
  int max_iters = 4000;
  double converge_tol = 2.0 * std::numbers::pi / 180.0;  // on f, rad
  double stall_tol = 1e-6;        // length; both movements below => stall
  double right_angle_tol = 3.0 * std::numbers::pi / 180.0;
  double approach_fraction = 0.1;
  bool record_trajectory = false;
  std::uint64_t seed = 0;

  /// Defaults scaled to the surface: step 1% and stall 1e-6 of its size.
  static DescentConfig for_surface(const Surface& s, DescentMethod method);
};

struct TrajectoryPoint {
  Vector3d c1, c2;
  double phi1, phi2;
};

struct DescentOutcome {
  DescentStatus status = DescentStatus::IterLimit;
  StabilityEvald final;
  int iters = 0;
  ContactPaird final_pair;
  std::vector<TrajectoryPoint> trajectory;
};

/// Iterates method steps with re-projection onto the boundary from two
/// initial boundary points until convergence, stall, or the iteration cap.
DescentOutcome run_descent(const Surface& s, const SurfacePoint& init1, const SurfacePoint& init2,
                           const DescentConfig& cfg);

/// Pressing-normal contact pair (n_i = -outward normal) at two boundary points.
ContactPaird pressing_pair(const Surface& s, const Vector3d& c1, const Vector3d& c2);

// -- Table I harness ---------------------------------------------------------

struct Range {
  double lo, hi;
};

struct ShapeRanges {
  Range ellipsoid_axis{0.5, 2.0};
  Range superquadric_axis{0.5, 2.0};
  Range superquadric_exponent{0.3, 1.8};
  Range torus_major{1.0, 2.0};
  double torus_minor_fraction_max = 0.45;  // r ~ U(0.2, fraction * R)
  double torus_minor_min = 0.2;
};

struct Table1Config {
  ShapeRanges ranges;
  int n_trials = 100;
  std::uint64_t seed = 2024;
  double step_fraction = 0.01;   // step_size / characteristic size
  double stall_fraction = 1e-6;  // stall_tol / characteristic size
  int max_iters = 4000;
  double converge_tol = 2.0 * std::numbers::pi / 180.0;
  double right_angle_tol = 3.0 * std::numbers::pi / 180.0;
  double approach_fraction = 0.1;
  int threads = 1;
  std::vector<ShapeKind> families{ShapeKind::Ellipsoid, ShapeKind::Superquadric, ShapeKind::Torus};
};

struct Table1Row {
  ShapeKind shape_kind;
  std::string shape_params;
  DescentMethod method;
  DescentStatus status;
  double final_f_rad;
  int iters;
  std::uint64_t seed;
  int trial;
  // Tangential gradient diagnostics at the final iterate, normalized by the
  // characteristic size: |P1 grad_c1 f| and |P1 grad_c1 phi1|.
  double final_tangent_grad_f = 0.0;
  double final_tangent_grad_phi1 = 0.0;
};

struct Table1Rates {
  ShapeKind shape_kind;
  double pgd_rate;
  double cfgd_rate;
};

struct Table1Result {
  std::vector<Table1Row> rows;
  std::vector<Table1Rates> rates;
};

/// Shape drawn from the configured ranges for one trial.
Surface sample_shape(ShapeKind kind, const ShapeRanges& ranges, std::uint64_t seed);

/// Per-trial seed derived from (base seed, family, trial) so serial and
/// parallel execution agree.
std::uint64_t trial_seed(std::uint64_t base, ShapeKind kind, int trial);

/// Throws Error(Config) naming the offending field.
void validate(const Table1Config& cfg);
Table1Config table1_from_json(const nlohmann::json& j);
Table1Config load_table1(const std::string& path);
nlohmann::json to_json(const Table1Config& cfg);

Table1Result run_table1(const Table1Config& cfg);

std::string table1_csv(const Table1Result& result);
std::string table1_summary_json(const Table1Result& result, const Table1Config& cfg);

/// Tangential gradient norms at a contact pair (see Table1Row).
struct TangentGradients {
  double grad_f;
  double grad_phi1;
};
TangentGradients tangent_gradients(const ContactPaird& cp, double size);

}  // namespace reflex
