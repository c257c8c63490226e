#include "reflexgrasp/descent.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <array>
#include <exception>
#include <mutex>
#include <fstream>
#include <set>
#include <thread>

#include "json.hpp"
#include "reflexgrasp/csv.hpp"
#include "reflexgrasp/errors.hpp"

namespace reflex {

const char* to_string(DescentStatus s) {
  switch (s) {
    case DescentStatus::Converged: return "Converged";
    case DescentStatus::LocalMinimum: return "LocalMinimum";
    case DescentStatus::RightAngleFailure: return "RightAngleFailure";
    case DescentStatus::IterLimit: return "IterLimit";
  }
  return "Unknown";
}

DescentConfig DescentConfig::for_surface(const Surface& s, DescentMethod method) {
  DescentConfig cfg;
  cfg.method = method;
  cfg.step_size = 0.01 * s.characteristic_size();
  cfg.stall_tol = 1e-6 * s.characteristic_size();
  return cfg;
}

ContactPaird pressing_pair(const Surface& s, const Vector3d& c1, const Vector3d& c2) {
  return {c1, c2, -outward_normal(s, c1), -outward_normal(s, c2)};
}

TangentGradients tangent_gradients(const ContactPaird& cp, double size) {
  using detail::grad_phi_impl;
  const Vector3d g11 = grad_phi_impl(cp, StabilityAngle::Phi1, ContactIndex::C1, SingularPolicy::Zero);
  const Vector3d g21 = grad_phi_impl(cp, StabilityAngle::Phi2, ContactIndex::C1, SingularPolicy::Zero);
  const Vector3d pf = detail::tangent_project<double>(cp.n1, g11 + g21);
  const Vector3d p1 = detail::tangent_project<double>(cp.n1, g11);
  return {pf.norm() * size, p1.norm() * size};
}

DescentOutcome run_descent(const Surface& s, const SurfacePoint& init1, const SurfacePoint& init2,
                           const DescentConfig& cfg) {
  if (!(cfg.step_size > 0.0) || cfg.max_iters < 1 || !(cfg.converge_tol > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "descent config requires step_size > 0, max_iters >= 1");
  }
  const double size = s.characteristic_size();
  if ((init1.position - init2.position).norm() <= 1e-6 * size) {
    throw Error(ErrorKind::InvalidArgument, "initial contact points coincide");
  }

  DescentOutcome out;
  Vector3d c1 = init1.position;
  Vector3d c2 = init2.position;

  auto classify_stall = [&](const StabilityEvald& ev) {
    const double half_pi = std::numbers::pi / 2.0;
    if (std::abs(ev.phi1 - half_pi) < cfg.right_angle_tol &&
        std::abs(ev.phi2 - half_pi) < cfg.right_angle_tol) {
      return DescentStatus::RightAngleFailure;
    }
    return DescentStatus::LocalMinimum;
  };

  // A step of length s along the chord-normal direction changes an angle by
  // about s / |c2 - c1|; capping at a fraction of |c2 - c1| * f keeps the final
  // approach from orbiting the optimum on short chords.
  auto step_of = [&](const Vector3d& d, double chord, double f) -> Vector3d {
    const double dn = d.norm();
    if (!(dn > 0.0)) return Vector3d::Zero();
    const double len = std::min(cfg.step_size * std::min(1.0, dn * size), cfg.approach_fraction * chord * f);
    return len * (d / dn);
  };

  for (int it = 0; it < cfg.max_iters; ++it) {
    const ContactPaird cp = pressing_pair(s, c1, c2);
    const StabilityEvald ev = evaluate(cp);
    out.final = ev;
    out.final_pair = cp;
    out.iters = it;
    if (cfg.record_trajectory) out.trajectory.push_back({c1, c2, ev.phi1, ev.phi2});
    if (ev.f < cfg.converge_tol) {
      out.status = DescentStatus::Converged;
      return out;
    }

    const auto dirs = descent_direction(cfg.method, cp, SingularPolicy::Zero);
    const double chord = (c2 - c1).norm();
    const Vector3d n1 = project(s, c1 + step_of(dirs.d1, chord, ev.f)).position;
    const Vector3d n2 = project(s, c2 + step_of(dirs.d2, chord, ev.f)).position;
    const double m1 = (n1 - c1).norm();
    const double m2 = (n2 - c2).norm();
    c1 = n1;
    c2 = n2;

    if (m1 < cfg.stall_tol && m2 < cfg.stall_tol) {
      const ContactPaird last = pressing_pair(s, c1, c2);
      out.final_pair = last;
      out.final = evaluate(last);
      out.iters = it + 1;
      if (cfg.record_trajectory) out.trajectory.push_back({c1, c2, out.final.phi1, out.final.phi2});
      out.status = out.final.f < cfg.converge_tol ? DescentStatus::Converged : classify_stall(out.final);
      return out;
    }
  }

  const ContactPaird last = pressing_pair(s, c1, c2);
  out.final_pair = last;
  out.final = evaluate(last);
  out.iters = cfg.max_iters;
  if (cfg.record_trajectory) out.trajectory.push_back({c1, c2, out.final.phi1, out.final.phi2});
  out.status = out.final.f < cfg.converge_tol ? DescentStatus::Converged : DescentStatus::IterLimit;
  return out;
}

// -- Table I ------------------------------------------------------------------

std::uint64_t trial_seed(std::uint64_t base, ShapeKind kind, int trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(kind), static_cast<std::uint32_t>(trial)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

Surface sample_shape(ShapeKind kind, const ShapeRanges& ranges, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto draw = [&](const Range& r) { return std::uniform_real_distribution<double>(r.lo, r.hi)(rng); };
  switch (kind) {
    case ShapeKind::Ellipsoid: {
      const double a1 = draw(ranges.ellipsoid_axis);
      const double a2 = draw(ranges.ellipsoid_axis);
      const double a3 = draw(ranges.ellipsoid_axis);
      return Surface(Ellipsoid{a1, a2, a3});
    }
    case ShapeKind::Superquadric: {
      const double a1 = draw(ranges.superquadric_axis);
      const double a2 = draw(ranges.superquadric_axis);
      const double a3 = draw(ranges.superquadric_axis);
      const double e1 = draw(ranges.superquadric_exponent);
      const double e2 = draw(ranges.superquadric_exponent);
      return Surface(Superquadric{a1, a2, a3, e1, e2});
    }
    case ShapeKind::Torus: {
      const double big = draw(ranges.torus_major);
      const double small = draw({ranges.torus_minor_min, ranges.torus_minor_fraction_max * big});
      return Surface(Torus{big, small});
    }
    case ShapeKind::Box:
    case ShapeKind::Cylinder:
      break;
  }
  throw Error(ErrorKind::InvalidArgument, "Table I families are ellipsoid, superquadric and torus");
}

namespace {

std::string shape_params_string(const Surface& s) {
  std::ostringstream os;
  os.precision(6);
  std::visit(
      [&](const auto& shape) {
        using T = std::decay_t<decltype(shape)>;
        if constexpr (std::is_same_v<T, Ellipsoid>) {
          os << "a=" << shape.a1 << ";" << shape.a2 << ";" << shape.a3;
        } else if constexpr (std::is_same_v<T, Superquadric>) {
          os << "a=" << shape.a1 << ";" << shape.a2 << ";" << shape.a3 << " e=" << shape.e1 << ";" << shape.e2;
        } else if constexpr (std::is_same_v<T, Torus>) {
          os << "R=" << shape.R << " r=" << shape.r;
        } else if constexpr (std::is_same_v<T, Box>) {
          os << "h=" << shape.hx << ";" << shape.hy << ";" << shape.hz;
        } else {
          os << "radius=" << shape.radius << " half_height=" << shape.half_height;
        }
      },
      s.shape());
  return os.str();
}

// Both methods of one trial, sharing the shape and the initial points.
std::array<Table1Row, 2> run_trial(const Table1Config& cfg, ShapeKind kind, int trial) {
  const std::uint64_t seed = trial_seed(cfg.seed, kind, trial);
  const Surface s = sample_shape(kind, cfg.ranges, seed);
  const double size = s.characteristic_size();
  SurfacePoint p1 = sample_surface(s, seed ^ 0x9e3779b97f4a7c15ULL);
  SurfacePoint p2 = sample_surface(s, seed ^ 0xc2b2ae3d27d4eb4fULL);
  for (std::uint64_t k = 1; (p1.position - p2.position).norm() <= 1e-3 * size; ++k) {
    p2 = sample_surface(s, (seed ^ 0xc2b2ae3d27d4eb4fULL) + k);
  }

  std::array<Table1Row, 2> rows;
  int idx = 0;
  for (DescentMethod method : {DescentMethod::PGD, DescentMethod::CFGD}) {
    DescentConfig dc;
    dc.method = method;
    dc.step_size = cfg.step_fraction * size;
    dc.stall_tol = cfg.stall_fraction * size;
    dc.max_iters = cfg.max_iters;
    dc.converge_tol = cfg.converge_tol;
    dc.right_angle_tol = cfg.right_angle_tol;
    dc.approach_fraction = cfg.approach_fraction;
    dc.seed = seed;
    const DescentOutcome o = run_descent(s, p1, p2, dc);
    const TangentGradients tg = tangent_gradients(o.final_pair, size);
    rows[idx++] = Table1Row{kind, shape_params_string(s), method, o.status, o.final.f, o.iters, seed,
                            trial, tg.grad_f, tg.grad_phi1};
  }
  return rows;
}

}  // namespace

Table1Result run_table1(const Table1Config& cfg) {
  if (cfg.n_trials < 1) throw Error(ErrorKind::InvalidArgument, "n_trials must be >= 1");
  struct Job {
    ShapeKind kind;
    int trial;
  };
  std::vector<Job> jobs;
  for (ShapeKind kind : cfg.families) {
    for (int t = 0; t < cfg.n_trials; ++t) jobs.push_back({kind, t});
  }
  std::vector<std::array<Table1Row, 2>> results(jobs.size());

  const int threads = std::max(1, cfg.threads);
  if (threads == 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) results[i] = run_trial(cfg, jobs[i].kind, jobs[i].trial);
  } else {
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = static_cast<std::size_t>(w); i < jobs.size(); i += threads) {
          try {
            results[i] = run_trial(cfg, jobs[i].kind, jobs[i].trial);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  Table1Result out;
  for (const auto& pair : results) {
    out.rows.push_back(pair[0]);
    out.rows.push_back(pair[1]);
  }
  for (ShapeKind kind : cfg.families) {
    int pgd = 0, cfgd = 0, n = 0;
    for (const auto& row : out.rows) {
      if (row.shape_kind != kind) continue;
      const bool ok = row.status == DescentStatus::Converged;
      if (row.method == DescentMethod::PGD) {
        pgd += ok;
        ++n;
      } else {
        cfgd += ok;
      }
    }
    out.rates.push_back({kind, static_cast<double>(pgd) / n, static_cast<double>(cfgd) / n});
  }
  return out;
}

std::string table1_csv(const Table1Result& result) {
  CsvWriter csv({"shape_kind", "shape_params", "method", "status", "final_f_rad", "iters", "seed"});
  for (const auto& r : result.rows) {
    csv.row({to_string(r.shape_kind), r.shape_params, to_string(r.method), to_string(r.status),
             format_double(r.final_f_rad), std::to_string(r.iters), std::to_string(r.seed)});
  }
  return csv.str();
}

std::string table1_summary_json(const Table1Result& result, const Table1Config& cfg) {
  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["n_trials"] = cfg.n_trials;
  j["seed"] = cfg.seed;
  j["step_fraction"] = cfg.step_fraction;
  j["converge_tol_rad"] = cfg.converge_tol;
  nlohmann::ordered_json rates = nlohmann::ordered_json::object();
  for (const auto& r : result.rates) {
    rates[to_string(r.shape_kind)] = {{"pgd", r.pgd_rate}, {"cfgd", r.cfgd_rate}};
  }
  j["rates"] = rates;
  return j.dump(2) + "\n";
}

namespace {

[[noreturn]] void bad(const std::string& field, const std::string& msg) {
  throw Error(ErrorKind::Config, field + ": " + msg);
}

constexpr double kDeg = std::numbers::pi / 180.0;

}  // namespace

void validate(const Table1Config& cfg) {
  auto range = [](const Range& r, const std::string& f) {
    if (!(r.lo > 0.0 && r.hi >= r.lo)) bad(f, "expected 0 < lo <= hi");
  };
  range(cfg.ranges.ellipsoid_axis, "ranges.ellipsoid_axis");
  range(cfg.ranges.superquadric_axis, "ranges.superquadric_axis");
  range(cfg.ranges.superquadric_exponent, "ranges.superquadric_exponent");
  range(cfg.ranges.torus_major, "ranges.torus_major");
  if (!(cfg.ranges.torus_minor_min > 0.0)) bad("ranges.torus_minor_min", "must be positive");
  if (!(cfg.ranges.torus_minor_fraction_max > 0.0 && cfg.ranges.torus_minor_fraction_max < 1.0)) {
    bad("ranges.torus_minor_fraction_max", "must lie in (0, 1)");
  }
  if (!(cfg.ranges.torus_minor_min < cfg.ranges.torus_minor_fraction_max * cfg.ranges.torus_major.lo)) {
    bad("ranges.torus_minor_min", "must be below torus_minor_fraction_max * torus_major.lo");
  }
  if (cfg.n_trials < 1) bad("n_trials", "must be >= 1");
  if (!(cfg.step_fraction > 0.0)) bad("step_fraction", "must be positive");
  if (!(cfg.stall_fraction > 0.0)) bad("stall_fraction", "must be positive");
  if (cfg.max_iters < 1) bad("max_iters", "must be >= 1");
  if (!(cfg.converge_tol > 0.0)) bad("converge_tol_deg", "must be positive");
  if (!(cfg.right_angle_tol > 0.0)) bad("right_angle_tol_deg", "must be positive");
  if (!(cfg.approach_fraction > 0.0)) bad("approach_fraction", "must be positive");
  if (cfg.threads < 1) bad("threads", "must be >= 1");
  if (cfg.families.empty()) bad("families", "at least one family is required");
  for (std::size_t i = 0; i < cfg.families.size(); ++i) {
    const ShapeKind k = cfg.families[i];
    if (k != ShapeKind::Ellipsoid && k != ShapeKind::Superquadric && k != ShapeKind::Torus) {
      bad("families[" + std::to_string(i) + "]", "expected ellipsoid, superquadric or torus");
    }
  }
}

Table1Config table1_from_json(const nlohmann::json& j) {
  using nlohmann::json;
  if (!j.is_object()) bad("table1", "expected a JSON object");
  static const std::set<std::string> known = {"schema",   "n_trials",          "seed",          "step_fraction",
                                              "stall_fraction", "max_iters",   "converge_tol_deg",
                                              "right_angle_tol_deg", "approach_fraction", "threads", "families",
                                              "ranges"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) bad(key, "unknown field");
  }
  if (j.contains("schema") && j["schema"] != 1) bad("schema", "expected schema 1");
  Table1Config cfg;
  auto num = [&](const json& obj, const std::string& key, const std::string& field, double& dst) {
    if (!obj.contains(key)) return;
    if (!obj[key].is_number()) bad(field, "expected a number");
    dst = obj[key].get<double>();
  };
  auto integer = [&](const std::string& key, int& dst) {
    if (!j.contains(key)) return;
    if (!j[key].is_number_integer()) bad(key, "expected an integer");
    dst = j[key].get<int>();
  };
  integer("n_trials", cfg.n_trials);
  integer("max_iters", cfg.max_iters);
  integer("threads", cfg.threads);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !(j["seed"].is_number_integer() && j["seed"].get<std::int64_t>() >= 0)) bad("seed", "expected a non-negative integer");
    cfg.seed = j["seed"].get<std::uint64_t>();
  }
  num(j, "step_fraction", "step_fraction", cfg.step_fraction);
  num(j, "stall_fraction", "stall_fraction", cfg.stall_fraction);
  num(j, "approach_fraction", "approach_fraction", cfg.approach_fraction);
  double deg = cfg.converge_tol / kDeg;
  num(j, "converge_tol_deg", "converge_tol_deg", deg);
  cfg.converge_tol = deg * kDeg;
  deg = cfg.right_angle_tol / kDeg;
  num(j, "right_angle_tol_deg", "right_angle_tol_deg", deg);
  cfg.right_angle_tol = deg * kDeg;
  if (j.contains("families")) {
    if (!j["families"].is_array()) bad("families", "expected an array");
    cfg.families.clear();
    for (std::size_t i = 0; i < j["families"].size(); ++i) {
      const std::string f = "families[" + std::to_string(i) + "]";
      const json& v = j["families"][i];
      if (!v.is_string()) bad(f, "expected a string");
      const std::string s = v.get<std::string>();
      if (s == "ellipsoid") cfg.families.push_back(ShapeKind::Ellipsoid);
      else if (s == "superquadric") cfg.families.push_back(ShapeKind::Superquadric);
      else if (s == "torus") cfg.families.push_back(ShapeKind::Torus);
      else bad(f, "expected ellipsoid, superquadric or torus");
    }
  }
  if (j.contains("ranges")) {
    const json& r = j["ranges"];
    if (!r.is_object()) bad("ranges", "expected an object");
    auto pair = [&](const char* key, Range& dst) {
      if (!r.contains(key)) return;
      const std::string f = std::string("ranges.") + key;
      const json& v = r[key];
      if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) bad(f, "expected [lo, hi]");
      dst = {v[0].get<double>(), v[1].get<double>()};
    };
    static const std::set<std::string> rkeys = {"ellipsoid_axis", "superquadric_axis", "superquadric_exponent",
                                                "torus_major", "torus_minor_fraction_max", "torus_minor_min"};
    for (const auto& [key, value] : r.items()) {
      if (!rkeys.count(key)) bad("ranges." + key, "unknown field");
    }
    pair("ellipsoid_axis", cfg.ranges.ellipsoid_axis);
    pair("superquadric_axis", cfg.ranges.superquadric_axis);
    pair("superquadric_exponent", cfg.ranges.superquadric_exponent);
    pair("torus_major", cfg.ranges.torus_major);
    num(r, "torus_minor_fraction_max", "ranges.torus_minor_fraction_max", cfg.ranges.torus_minor_fraction_max);
    num(r, "torus_minor_min", "ranges.torus_minor_min", cfg.ranges.torus_minor_min);
  }
  validate(cfg);
  return cfg;
}

Table1Config load_table1(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, path + ": cannot open");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, path + ": " + e.what());
  }
  return table1_from_json(j);
}

nlohmann::json to_json(const Table1Config& cfg) {
  nlohmann::json fam = nlohmann::json::array();
  for (ShapeKind k : cfg.families) fam.push_back(to_string(k));
  const ShapeRanges& r = cfg.ranges;
  return {{"schema", 1},
          {"n_trials", cfg.n_trials},
          {"seed", cfg.seed},
          {"step_fraction", cfg.step_fraction},
          {"stall_fraction", cfg.stall_fraction},
          {"max_iters", cfg.max_iters},
          {"converge_tol_deg", cfg.converge_tol / kDeg},
          {"right_angle_tol_deg", cfg.right_angle_tol / kDeg},
          {"approach_fraction", cfg.approach_fraction},
          {"threads", cfg.threads},
          {"families", fam},
          {"ranges",
           {{"ellipsoid_axis", {r.ellipsoid_axis.lo, r.ellipsoid_axis.hi}},
            {"superquadric_axis", {r.superquadric_axis.lo, r.superquadric_axis.hi}},
            {"superquadric_exponent", {r.superquadric_exponent.lo, r.superquadric_exponent.hi}},
            {"torus_major", {r.torus_major.lo, r.torus_major.hi}},
            {"torus_minor_fraction_max", r.torus_minor_fraction_max},
            {"torus_minor_min", r.torus_minor_min}}}};
}

}  // namespace reflex
