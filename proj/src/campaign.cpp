#include "reflexgrasp/campaign.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <type_traits>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include "reflexgrasp/csv.hpp"
#include "reflexgrasp/descent.hpp"
#include "reflexgrasp/errors.hpp"

namespace reflex {

using nlohmann::json;

const char* to_string(Variant v) {
  switch (v) {
    case Variant::Vanilla: return "vanilla";
    case Variant::PGD: return "pgd";
    case Variant::CFGD: return "cfgd";
  }
  return "unknown";
}

namespace {

[[noreturn]] void config_error(const std::string& field, const std::string& msg) {
  throw Error(ErrorKind::Config, field + ": " + msg);
}

std::vector<double> number_list(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) config_error(field, "expected a nonempty array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) config_error(field + "[" + std::to_string(i) + "]", "expected a number");
    out.push_back(j[i].get<double>());
  }
  return out;
}

ShapeKind family_from_string(const std::string& s, const std::string& field) {
  if (s == "box") return ShapeKind::Box;
  if (s == "cylinder") return ShapeKind::Cylinder;
  if (s == "ellipsoid") return ShapeKind::Ellipsoid;
  config_error(field, "expected box, cylinder or ellipsoid");
}

Variant variant_from_string(const std::string& s, const std::string& field) {
  if (s == "vanilla") return Variant::Vanilla;
  if (s == "pgd") return Variant::PGD;
  if (s == "cfgd") return Variant::CFGD;
  config_error(field, "expected vanilla, pgd or cfgd");
}

Perturbation perturbation_from_string(const std::string& s, const std::string& field) {
  if (s == "none") return Perturbation::None;
  if (s == "box_yaw") return Perturbation::BoxYaw;
  if (s == "cylinder_offset") return Perturbation::CylinderOffset;
  if (s == "ellipsoid_offset") return Perturbation::EllipsoidOffset;
  config_error(field, "expected none, box_yaw, cylinder_offset or ellipsoid_offset");
}

double number(const json& j, const std::string& key, const std::string& field) {
  if (!j.contains(key)) config_error(field + "." + key, "missing");
  if (!j[key].is_number()) config_error(field + "." + key, "expected a number");
  return j[key].get<double>();
}

Vector3d vec3(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3) config_error(field, "expected an array of 3 numbers");
  Vector3d v;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number()) config_error(field + "[" + std::to_string(i) + "]", "expected a number");
    v[i] = j[i].get<double>();
  }
  return v;
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& field) {
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) config_error(field + "." + key, "unknown field");
  }
}

double yaw_of(const Pose& p) {
  const Matrix3d R = p.rotation.toRotationMatrix();
  return std::atan2(R(1, 0), R(0, 0));
}

}  // namespace

Surface surface_from_json(const json& j, const std::string& field) {
  if (!j.is_object()) config_error(field, "expected an object");
  if (!j.contains("shape") || !j["shape"].is_string()) config_error(field + ".shape", "expected a string");
  const std::string kind = j["shape"].get<std::string>();
  Shape shape = Ellipsoid{1, 1, 1};
  if (kind == "ellipsoid") {
    reject_unknown(j, {"shape", "axes", "pose"}, field);
    const Vector3d a = vec3(j.value("axes", json()), field + ".axes");
    shape = Ellipsoid{a[0], a[1], a[2]};
  } else if (kind == "superquadric") {
    reject_unknown(j, {"shape", "axes", "exponents", "pose"}, field);
    const Vector3d a = vec3(j.value("axes", json()), field + ".axes");
    const json& e = j.value("exponents", json());
    if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
      config_error(field + ".exponents", "expected an array of 2 numbers");
    }
    shape = Superquadric{a[0], a[1], a[2], e[0].get<double>(), e[1].get<double>()};
  } else if (kind == "torus") {
    reject_unknown(j, {"shape", "R", "r", "pose"}, field);
    shape = Torus{number(j, "R", field), number(j, "r", field)};
  } else if (kind == "box") {
    reject_unknown(j, {"shape", "half_extents", "pose"}, field);
    const Vector3d h = vec3(j.value("half_extents", json()), field + ".half_extents");
    shape = Box{h[0], h[1], h[2]};
  } else if (kind == "cylinder") {
    reject_unknown(j, {"shape", "radius", "half_height", "pose"}, field);
    shape = Cylinder{number(j, "radius", field), number(j, "half_height", field)};
  } else {
    config_error(field + ".shape", "expected ellipsoid, superquadric, torus, box or cylinder");
  }
  Pose pose;
  if (j.contains("pose")) {
    const json& p = j["pose"];
    if (!p.is_object()) config_error(field + ".pose", "expected an object");
    reject_unknown(p, {"translation", "yaw_deg"}, field + ".pose");
    Vector3d t = Vector3d::Zero();
    if (p.contains("translation")) t = vec3(p["translation"], field + ".pose.translation");
    const double yaw = p.contains("yaw_deg") ? number(p, "yaw_deg", field + ".pose") : 0.0;
    pose = Pose::yaw(yaw * std::numbers::pi / 180.0, t);
  }
  try {
    return Surface(shape, pose);
  } catch (const Error& e) {
    config_error(field, e.what());
  }
}

json to_json(const Surface& s) {
  json j = std::visit(
      [](const auto& sh) -> json {
        using T = std::decay_t<decltype(sh)>;
        if constexpr (std::is_same_v<T, Ellipsoid>) {
          return {{"shape", "ellipsoid"}, {"axes", {sh.a1, sh.a2, sh.a3}}};
        } else if constexpr (std::is_same_v<T, Superquadric>) {
          return {{"shape", "superquadric"}, {"axes", {sh.a1, sh.a2, sh.a3}}, {"exponents", {sh.e1, sh.e2}}};
        } else if constexpr (std::is_same_v<T, Torus>) {
          return {{"shape", "torus"}, {"R", sh.R}, {"r", sh.r}};
        } else if constexpr (std::is_same_v<T, Box>) {
          return {{"shape", "box"}, {"half_extents", {sh.hx, sh.hy, sh.hz}}};
        } else {
          return {{"shape", "cylinder"}, {"radius", sh.radius}, {"half_height", sh.half_height}};
        }
      },
      s.shape());
  const Vector3d t = s.pose().translation;
  j["pose"] = {{"translation", {t.x(), t.y(), t.z()}}, {"yaw_deg", yaw_of(s.pose()) * 180.0 / std::numbers::pi}};
  return j;
}

namespace {

CustomScenario custom_from_json(const json& j, const std::string& field) {
  if (!j.is_object()) config_error(field, "expected an object");
  reject_unknown(j, {"object", "target", "perturbation", "magnitude", "seed"}, field);
  if (!j.contains("object")) config_error(field + ".object", "missing");
  Surface object = surface_from_json(j["object"], field + ".object");
  const Vector3d target = j.contains("target") ? vec3(j["target"], field + ".target") : object.pose().translation;
  CustomScenario c{Scenario{object, target}, Perturbation::None, 0.0, std::nullopt};
  if (j.contains("perturbation")) {
    if (!j["perturbation"].is_string()) config_error(field + ".perturbation", "expected a string");
    c.perturbation = perturbation_from_string(j["perturbation"].get<std::string>(), field + ".perturbation");
  }
  if (j.contains("magnitude")) c.magnitude = number(j, "magnitude", field);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !(j["seed"].is_number_integer() && j["seed"].get<std::int64_t>() >= 0)) config_error(field + ".seed", "expected a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  return c;
}

}  // namespace

void CampaignConfig::validate() const {
  std::set<std::uint64_t> seeds;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    const std::string f = "scenarios[" + std::to_string(i) + "]";
    if (!(scenarios[i].magnitude >= 0.0)) config_error(f + ".magnitude", "must be >= 0");
    if (scenarios[i].seed && !seeds.insert(*scenarios[i].seed).second) config_error(f + ".seed", "seeds must be distinct");
  }
  if (scenarios.empty() && families.empty()) config_error("families", "at least one family is required");
  if (widths.empty()) config_error("widths", "at least one width is required");
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (!(widths[i] > 0.0)) config_error("widths[" + std::to_string(i) + "]", "must be positive");
  }
  auto check = [](const std::vector<double>& v, const char* name, double hi) {
    if (v.empty()) config_error(name, "at least one magnitude is required");
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!(v[i] >= 0.0 && v[i] <= hi)) {
        config_error(std::string(name) + "[" + std::to_string(i) + "]", "out of range [0, " + std::to_string(hi) + "]");
      }
    }
  };
  check(box_yaw_deg, "box_yaw_deg", 45.0);
  check(cylinder_offset_fraction, "cylinder_offset_fraction", 0.9);
  check(ellipsoid_offset_fraction, "ellipsoid_offset_fraction", 0.9);
  if (variants.empty()) config_error("variants", "at least one variant is required");
  if (!(reach_gain > 0.0)) config_error("reach_gain", "must be positive");
  if (!(reach_max_time > 0.0)) config_error("reach_max_time_s", "must be positive");
  if (!(sim.max_time > 0.0)) config_error("sim.max_time_s", "must be positive");
  if (threads < 1) config_error("threads", "must be >= 1");
  controller.validate();
}

CampaignConfig campaign_from_json(const json& j) {
  if (!j.is_object()) config_error("campaign", "expected a JSON object");
  if (j.contains("schema") && j["schema"] != 1) config_error("schema", "expected schema 1");
  static const std::set<std::string> known = {"schema",
                                              "name",
                                              "families",
                                              "widths",
                                              "box_yaw_deg",
                                              "cylinder_offset_fraction",
                                              "ellipsoid_offset_fraction",
                                              "variants",
                                              "seed",
                                              "reach_gain",
                                              "reach_max_time_s",
                                              "controller",
                                              "sim",
                                              "threads",
                                              "write_traces",
                                              "scenarios"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) config_error(key, "unknown field");
  }
  CampaignConfig c;
  if (j.contains("name")) {
    if (!j["name"].is_string()) config_error("name", "expected a string");
    c.name = j["name"].get<std::string>();
  }
  if (j.contains("families")) {
    if (!j["families"].is_array()) config_error("families", "expected an array");
    c.families.clear();
    for (std::size_t i = 0; i < j["families"].size(); ++i) {
      const std::string f = "families[" + std::to_string(i) + "]";
      if (!j["families"][i].is_string()) config_error(f, "expected a string");
      c.families.push_back(family_from_string(j["families"][i].get<std::string>(), f));
    }
  }
  if (j.contains("widths")) c.widths = number_list(j["widths"], "widths");
  if (j.contains("box_yaw_deg")) c.box_yaw_deg = number_list(j["box_yaw_deg"], "box_yaw_deg");
  if (j.contains("cylinder_offset_fraction")) {
    c.cylinder_offset_fraction = number_list(j["cylinder_offset_fraction"], "cylinder_offset_fraction");
  }
  if (j.contains("ellipsoid_offset_fraction")) {
    c.ellipsoid_offset_fraction = number_list(j["ellipsoid_offset_fraction"], "ellipsoid_offset_fraction");
  }
  if (j.contains("variants")) {
    if (!j["variants"].is_array()) config_error("variants", "expected an array");
    c.variants.clear();
    for (std::size_t i = 0; i < j["variants"].size(); ++i) {
      const std::string f = "variants[" + std::to_string(i) + "]";
      if (!j["variants"][i].is_string()) config_error(f, "expected a string");
      c.variants.push_back(variant_from_string(j["variants"][i].get<std::string>(), f));
    }
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !(j["seed"].is_number_integer() && j["seed"].get<std::int64_t>() >= 0)) config_error("seed", "expected a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("reach_gain")) {
    if (!j["reach_gain"].is_number()) config_error("reach_gain", "expected a number");
    c.reach_gain = j["reach_gain"].get<double>();
  }
  if (j.contains("reach_max_time_s")) {
    if (!j["reach_max_time_s"].is_number()) config_error("reach_max_time_s", "expected a number");
    c.reach_max_time = j["reach_max_time_s"].get<double>();
  }
  if (j.contains("controller")) c.controller = controller_params_from_json(j["controller"]);
  if (j.contains("sim")) {
    const json& s = j["sim"];
    if (!s.is_object()) config_error("sim", "expected an object");
    static const std::set<std::string> sim_known = {"max_time_s", "noise_sigma_m", "dropout_rate", "threaded",
                                                    "integration_rate_hz", "block_penetration"};
    for (const auto& [key, value] : s.items()) {
      if (!sim_known.count(key)) config_error("sim." + key, "unknown field");
    }
    auto num = [&](const char* key, double& dst) {
      if (!s.contains(key)) return;
      if (!s[key].is_number()) config_error(std::string("sim.") + key, "expected a number");
      dst = s[key].get<double>();
    };
    num("max_time_s", c.sim.max_time);
    num("noise_sigma_m", c.sim.noise_sigma);
    num("dropout_rate", c.sim.dropout_rate);
    num("integration_rate_hz", c.sim.integration_rate);
    if (s.contains("threaded")) {
      if (!s["threaded"].is_boolean()) config_error("sim.threaded", "expected a boolean");
      c.sim.threaded = s["threaded"].get<bool>();
    }
    if (s.contains("block_penetration")) {
      if (!s["block_penetration"].is_boolean()) config_error("sim.block_penetration", "expected a boolean");
      c.sim.block_penetration = s["block_penetration"].get<bool>();
    }
  }
  if (j.contains("threads")) {
    if (!j["threads"].is_number_integer()) config_error("threads", "expected an integer");
    c.threads = j["threads"].get<int>();
  }
  if (j.contains("write_traces")) {
    if (!j["write_traces"].is_boolean()) config_error("write_traces", "expected a boolean");
    c.write_traces = j["write_traces"].get<bool>();
  }
  if (j.contains("scenarios")) {
    if (!j["scenarios"].is_array() || j["scenarios"].empty()) config_error("scenarios", "expected a nonempty array");
    for (std::size_t i = 0; i < j["scenarios"].size(); ++i) {
      c.scenarios.push_back(custom_from_json(j["scenarios"][i], "scenarios[" + std::to_string(i) + "]"));
    }
  }
  c.validate();
  return c;
}

CampaignConfig load_campaign(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, path + ": cannot open");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, path + ": " + e.what());
  }
  return campaign_from_json(j);
}

json to_json(const CampaignConfig& c) {
  json fam = json::array();
  for (ShapeKind k : c.families) fam.push_back(to_string(k));
  json var = json::array();
  for (Variant v : c.variants) var.push_back(to_string(v));
  json custom = json::array();
  for (const auto& sc : c.scenarios) {
    json e = {{"object", to_json(sc.scenario.object)},
              {"target", {sc.scenario.target.x(), sc.scenario.target.y(), sc.scenario.target.z()}},
              {"perturbation", to_string(sc.perturbation)},
              {"magnitude", sc.magnitude}};
    if (sc.seed) e["seed"] = *sc.seed;
    custom.push_back(e);
  }
  json out = {{"schema", 1},
          {"name", c.name},
          {"families", fam},
          {"widths", c.widths},
          {"box_yaw_deg", c.box_yaw_deg},
          {"cylinder_offset_fraction", c.cylinder_offset_fraction},
          {"ellipsoid_offset_fraction", c.ellipsoid_offset_fraction},
          {"variants", var},
          {"seed", c.seed},
          {"reach_gain", c.reach_gain},
          {"reach_max_time_s", c.reach_max_time},
          {"controller", to_json(c.controller)},
          {"sim",
           {{"max_time_s", c.sim.max_time},
            {"noise_sigma_m", c.sim.noise_sigma},
            {"dropout_rate", c.sim.dropout_rate},
            {"threaded", c.sim.threaded},
            {"block_penetration", c.sim.block_penetration},
            {"integration_rate_hz", c.sim.integration_rate}}},
          {"threads", c.threads},
          {"write_traces", c.write_traces}};
  if (!custom.empty()) out["scenarios"] = custom;
  return out;
}

Perturbation perturbation_for(ShapeKind family) {
  switch (family) {
    case ShapeKind::Box: return Perturbation::BoxYaw;
    case ShapeKind::Cylinder: return Perturbation::CylinderOffset;
    case ShapeKind::Ellipsoid: return Perturbation::EllipsoidOffset;
    default: break;
  }
  throw Error(ErrorKind::InvalidArgument, "campaign families are box, cylinder and ellipsoid");
}

// Objects rest on the table (z = 0); the fingers close along world y.
Scenario base_scenario(ShapeKind family, double width) {
  switch (family) {
    case ShapeKind::Box: {
      const double hz = 0.04;
      return {Surface(Box{0.6 * width, 0.5 * width, hz}, Pose::yaw(0.0, Vector3d(0, 0, hz))), Vector3d(0, 0, hz)};
    }
    case ShapeKind::Cylinder: {
      const double hh = 0.05;
      return {Surface(Cylinder{0.5 * width, hh}, Pose::yaw(0.0, Vector3d(0, 0, hh))), Vector3d(0, 0, hh)};
    }
    case ShapeKind::Ellipsoid: {
      const double az = std::max(0.03, 0.5 * width);
      return {Surface(Ellipsoid{0.6 * width, 0.5 * width, az}, Pose::yaw(0.0, Vector3d(0, 0, az))),
              Vector3d(0, 0, az)};
    }
    default: break;
  }
  throw Error(ErrorKind::InvalidArgument, "campaign families are box, cylinder and ellipsoid");
}

std::vector<ScenarioSpec> enumerate_scenarios(const CampaignConfig& c) {
  std::vector<ScenarioSpec> out;
  int index = 0;
  if (!c.scenarios.empty()) {
    for (const auto& sc : c.scenarios) {
      const ShapeKind kind = sc.scenario.object.kind();
      const std::uint64_t seed = sc.seed ? *sc.seed : trial_seed(c.seed, kind, index);
      out.push_back({index, kind, sc.scenario.object.characteristic_size(), sc.perturbation, sc.magnitude, seed,
                     sc.scenario});
      ++index;
    }
    return out;
  }
  for (ShapeKind fam : c.families) {
    const Perturbation kind = perturbation_for(fam);
    const std::vector<double>& levels = fam == ShapeKind::Box        ? c.box_yaw_deg
                                        : fam == ShapeKind::Cylinder ? c.cylinder_offset_fraction
                                                                     : c.ellipsoid_offset_fraction;
    for (double w : c.widths) {
      const Scenario base = base_scenario(fam, w);
      for (double level : levels) {
        double magnitude = 0.0;
        if (fam == ShapeKind::Box) {
          magnitude = level * std::numbers::pi / 180.0;
        } else if (fam == ShapeKind::Cylinder) {
          magnitude = level * 0.5 * w;
        } else {
          magnitude = level * std::get<Ellipsoid>(base.object.shape()).a3;
        }
        out.push_back({index, fam, w, kind, magnitude, trial_seed(c.seed, fam, index), std::nullopt});
        ++index;
      }
    }
  }
  return out;
}

namespace {

std::vector<CampaignRow> run_scenario(const RobotModel& model, const CampaignConfig& c, const ScenarioSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  const Scenario base = spec.custom ? *spec.custom : base_scenario(spec.family, spec.width);
  const Scenario sc = apply_perturbation(base, spec.perturbation, spec.magnitude, rng);
  std::vector<CampaignRow> rows;
  auto base_row = [&](Variant v) {
    CampaignRow r;
    r.scenario = spec.index;
    r.family = to_string(spec.family);
    r.width = spec.width;
    r.perturbation = to_string(spec.perturbation);
    r.magnitude = spec.magnitude;
    r.seed = spec.seed;
    r.variant = to_string(v);
    r.final_mean_angle_deg = std::numeric_limits<double>::quiet_NaN();
    r.ticks_to_stable = -1;
    r.transitions = 0;
    r.time_s = 0.0;
    return r;
  };

  ReachResult pre;
  try {
    pre = reach(model, sc.object, model.home, sc.target, c.controller, c.reach_gain, c.reach_max_time);
  } catch (const Error& e) {
    for (Variant v : c.variants) {
      CampaignRow r = base_row(v);
      r.outcome = "Error";
      rows.push_back(std::move(r));
    }
    return rows;
  }

  for (Variant v : c.variants) {
    ControllerParams cp = c.controller;
    cp.variant = v == Variant::Vanilla ? ControllerVariant::Vanilla : ControllerVariant::Reflex;
    if (v == Variant::PGD) cp.method = DescentMethod::PGD;
    if (v == Variant::CFGD) cp.method = DescentMethod::CFGD;
    SimParams sp = c.sim;
    sp.seed = spec.seed;
    CampaignRow r = base_row(v);
    try {
      Simulator sim(model, sc.object, pre.q, cp, sp);
      RunResult rr = sim.run();
      r.outcome = to_string(rr.outcome);
      if (rr.final_stability) r.final_mean_angle_deg = rr.final_stability->mean_angle_deg();
      if (rr.outcome == RunOutcome::Stable) r.ticks_to_stable = rr.control_ticks_to_stable;
      r.transitions = rr.transitions;
      r.time_s = rr.final_world ? rr.final_world->time : 0.0;
      if (c.write_traces) r.trace = std::move(rr.trace);
    } catch (const Error& e) {
      r.outcome = "Error";
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace

CampaignSummary run_campaign(const RobotModel& model, const CampaignConfig& c) {
  c.validate();
  const std::vector<ScenarioSpec> specs = enumerate_scenarios(c);
  std::vector<std::vector<CampaignRow>> results(specs.size());
  const int threads = std::max(1, std::min<int>(c.threads, static_cast<int>(specs.size())));
  if (threads == 1) {
    for (std::size_t i = 0; i < specs.size(); ++i) results[i] = run_scenario(model, c, specs[i]);
  } else {
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex mu;
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = static_cast<std::size_t>(w); i < specs.size(); i += static_cast<std::size_t>(threads)) {
          try {
            results[i] = run_scenario(model, c, specs[i]);
          } catch (...) {
            std::lock_guard lock(mu);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }
  CampaignSummary s;
  for (auto& block : results) {
    for (auto& r : block) s.rows.push_back(std::move(r));
  }
  s.aggregates = aggregate(s.rows);
  return s;
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::vector<VariantAggregate> aggregate(const std::vector<CampaignRow>& rows) {
  std::vector<std::string> order;
  for (const auto& r : rows) {
    if (std::find(order.begin(), order.end(), r.variant) == order.end()) order.push_back(r.variant);
  }
  std::vector<VariantAggregate> out;
  for (const auto& name : order) {
    VariantAggregate a;
    a.variant = name;
    int stable = 0;
    std::vector<double> angles;
    for (const auto& r : rows) {
      if (r.variant != name) continue;
      ++a.runs;
      stable += r.outcome == "Stable";
      if (!std::isnan(r.final_mean_angle_deg)) angles.push_back(r.final_mean_angle_deg);
    }
    a.stable_rate = static_cast<double>(stable) / a.runs;
    a.mean_angle_deg = angles.empty() ? std::numeric_limits<double>::quiet_NaN()
                                      : std::accumulate(angles.begin(), angles.end(), 0.0) / static_cast<double>(angles.size());
    a.p10 = percentile(angles, 0.1);
    a.p50 = percentile(angles, 0.5);
    a.p90 = percentile(angles, 0.9);
    out.push_back(a);
  }
  return out;
}

namespace {

const std::vector<std::string> kCampaignColumns = {
    "scenario", "family", "width_m",  "perturbation", "magnitude", "seed",
    "variant",  "outcome", "final_mean_angle_deg", "ticks_to_stable", "transitions", "time_s"};

}  // namespace

std::string campaign_csv(const std::vector<CampaignRow>& rows) {
  CsvWriter csv(kCampaignColumns);
  for (const auto& r : rows) {
    csv.row({std::to_string(r.scenario), r.family, format_double(r.width), r.perturbation, format_double(r.magnitude),
             std::to_string(r.seed), r.variant, r.outcome,
             std::isnan(r.final_mean_angle_deg) ? "nan" : format_double(r.final_mean_angle_deg),
             std::to_string(r.ticks_to_stable), std::to_string(r.transitions), format_double(r.time_s)});
  }
  return csv.str();
}

std::vector<CampaignRow> parse_campaign_csv(const std::string& text) {
  const auto table = parse_csv(text);
  if (table.empty() || table[0] != kCampaignColumns) throw Error(ErrorKind::Config, "campaign csv: unexpected header");
  std::vector<CampaignRow> rows;
  for (std::size_t i = 1; i < table.size(); ++i) {
    const auto& f = table[i];
    if (f.size() != kCampaignColumns.size()) throw Error(ErrorKind::Config, "campaign csv: bad row width");
    CampaignRow r;
    r.scenario = std::stoi(f[0]);
    r.family = f[1];
    r.width = std::stod(f[2]);
    r.perturbation = f[3];
    r.magnitude = std::stod(f[4]);
    r.seed = std::stoull(f[5]);
    r.variant = f[6];
    r.outcome = f[7];
    r.final_mean_angle_deg = f[8] == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(f[8]);
    r.ticks_to_stable = std::stoi(f[9]);
    r.transitions = std::stoi(f[10]);
    r.time_s = std::stod(f[11]);
    rows.push_back(std::move(r));
  }
  return rows;
}

json summary_json(const CampaignSummary& s, const CampaignConfig& c) {
  auto num = [](double v) { return std::isnan(v) ? json() : json(v); };
  json agg = json::array();
  for (const auto& a : s.aggregates) {
    agg.push_back({{"variant", a.variant},
                   {"runs", a.runs},
                   {"stable_rate", a.stable_rate},
                   {"mean_angle_deg", num(a.mean_angle_deg)},
                   {"p10_angle_deg", num(a.p10)},
                   {"p50_angle_deg", num(a.p50)},
                   {"p90_angle_deg", num(a.p90)}});
  }
  return {{"schema", 1}, {"name", c.name}, {"scenarios", s.rows.empty() ? 0 : s.rows.back().scenario + 1},
          {"aggregates", agg}};
}

}  // namespace reflex
