#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "reflexgrasp/controller.hpp"
#include "reflexgrasp/sim.hpp"

#include "json.hpp"

namespace reflex {

enum class Variant { Vanilla, PGD, CFGD };
const char* to_string(Variant v);

/// A single explicitly placed object; used instead of the family grid when a
/// campaign lists scenarios.
struct CustomScenario {
  Scenario scenario;
  Perturbation perturbation = Perturbation::None;
  double magnitude = 0.0;
  std::optional<std::uint64_t> seed;
};

struct CampaignConfig {
  std::string name = "default";
  std::vector<ShapeKind> families{ShapeKind::Box, ShapeKind::Cylinder, ShapeKind::Ellipsoid};
  std::vector<double> widths{0.03, 0.04, 0.05, 0.06, 0.07};  // object extent along the closing axis, m
  // Per-family perturbation magnitudes: box yaw bound in degrees, cylinder and
  // ellipsoid offsets as fractions of the radius and the vertical semi-axis.
  std::vector<double> box_yaw_deg{0.0, 10.0, 20.0, 30.0};
  std::vector<double> cylinder_offset_fraction{0.0, 0.2, 0.4, 0.6};
  std::vector<double> ellipsoid_offset_fraction{0.0, 0.2, 0.4, 0.6};
  std::vector<Variant> variants{Variant::Vanilla, Variant::PGD, Variant::CFGD};
  std::uint64_t seed = 1;
  double reach_gain = 3.0;
  double reach_max_time = 5.0;
  ControllerParams controller;
  SimParams sim;
  int threads = 1;
  bool write_traces = true;
  std::vector<CustomScenario> scenarios;  // replaces the grid when nonempty

  /// Throws Error(Config) naming the offending field.
  void validate() const;
};

CampaignConfig campaign_from_json(const nlohmann::json& j);
CampaignConfig load_campaign(const std::string& path);

/// Object description {"shape": ..., shape parameters, "pose": {"translation", "yaw_deg"}}.
Surface surface_from_json(const nlohmann::json& j, const std::string& field);
nlohmann::json to_json(const Surface& s);
nlohmann::json to_json(const CampaignConfig& c);

struct ScenarioSpec {
  int index;
  ShapeKind family;
  double width;
  Perturbation perturbation;
  double magnitude;  // rad for box yaw, m for offsets
  std::uint64_t seed;
  std::optional<Scenario> custom;
};

std::vector<ScenarioSpec> enumerate_scenarios(const CampaignConfig& c);

/// Object and reaching target before perturbation.
Scenario base_scenario(ShapeKind family, double width);
Perturbation perturbation_for(ShapeKind family);

struct CampaignRow {
  int scenario;
  std::string family;
  double width;
  std::string perturbation;
  double magnitude;
  std::uint64_t seed;
  std::string variant;
  std::string outcome;         // Stable, Timeout or Error
  double final_mean_angle_deg; // NaN when no all-contact sample was seen
  int ticks_to_stable;         // control ticks until Stable, -1 otherwise
  int transitions;
  double time_s;
  std::vector<TraceRow> trace;
};

struct VariantAggregate {
  std::string variant;
  int runs = 0;
  double stable_rate = 0.0;
  double mean_angle_deg = 0.0;
  double p10 = 0.0, p50 = 0.0, p90 = 0.0;
};

struct CampaignSummary {
  std::vector<CampaignRow> rows;
  std::vector<VariantAggregate> aggregates;
};

/// Runs every scenario with every variant; variants of a scenario share the
/// perturbed object, target and pre-closure configuration.
CampaignSummary run_campaign(const RobotModel& model, const CampaignConfig& c);

/// Aggregates computed only from the row fields that appear in the CSV.
std::vector<VariantAggregate> aggregate(const std::vector<CampaignRow>& rows);

std::string campaign_csv(const std::vector<CampaignRow>& rows);
std::vector<CampaignRow> parse_campaign_csv(const std::string& text);
nlohmann::json summary_json(const CampaignSummary& s, const CampaignConfig& c);

/// Linear-interpolated percentile of a sample, q in [0, 1].
double percentile(std::vector<double> v, double q);

}  // namespace reflex
