#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "reflexgrasp/campaign.hpp"
#include "reflexgrasp/errors.hpp"

using namespace reflex;
namespace fs = std::filesystem;

namespace {

const RobotModel& robot() {
  static const RobotModel m = default_robot();
  return m;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int cli(const std::string& args) {
  const std::string cmd = std::string(REFLEXGRASP_CLI) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("reflexgrasp_test_" + name);
  fs::remove_all(p);
  return p;
}

bool same_double(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

CampaignConfig small_campaign() {
  CampaignConfig c;
  c.widths = {0.04, 0.06};
  c.box_yaw_deg = {0.0, 25.0};
  c.cylinder_offset_fraction = {0.3};
  c.ellipsoid_offset_fraction = {0.5};
  c.write_traces = false;
  return c;
}

}  // namespace

TEST_CASE("scenario grid") {
  const auto specs = enumerate_scenarios(CampaignConfig{});
  CHECK(specs.size() == 60);
  std::set<std::uint64_t> seeds;
  for (const auto& s : specs) seeds.insert(s.seed);
  CHECK(seeds.size() == 60);
  CHECK(specs[0].family == ShapeKind::Box);
  CHECK(specs[59].family == ShapeKind::Ellipsoid);
}

TEST_CASE("campaign csv round trip and recomputable aggregates") {
  CampaignConfig c = small_campaign();
  c.controller.stable_hold_samples = 3;
  const CampaignSummary s = run_campaign(robot(), c);
  CHECK(s.rows.size() == 3 * (2 + 1 + 1) * 2);
  const auto back = parse_campaign_csv(campaign_csv(s.rows));
  REQUIRE(back.size() == s.rows.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    const CampaignRow &a = s.rows[i], &b = back[i];
    CHECK(a.scenario == b.scenario);
    CHECK(a.family == b.family);
    CHECK(a.width == b.width);
    CHECK(a.perturbation == b.perturbation);
    CHECK(a.magnitude == b.magnitude);
    CHECK(a.seed == b.seed);
    CHECK(a.variant == b.variant);
    CHECK(a.outcome == b.outcome);
    CHECK(same_double(a.final_mean_angle_deg, b.final_mean_angle_deg));
    CHECK(a.ticks_to_stable == b.ticks_to_stable);
    CHECK(a.transitions == b.transitions);
    CHECK(a.time_s == b.time_s);
  }
  const auto agg = aggregate(back);
  REQUIRE(agg.size() == s.aggregates.size());
  for (std::size_t i = 0; i < agg.size(); ++i) {
    CHECK(agg[i].variant == s.aggregates[i].variant);
    CHECK(agg[i].runs == s.aggregates[i].runs);
    CHECK(agg[i].stable_rate == s.aggregates[i].stable_rate);
    CHECK(same_double(agg[i].mean_angle_deg, s.aggregates[i].mean_angle_deg));
    CHECK(same_double(agg[i].p10, s.aggregates[i].p10));
    CHECK(same_double(agg[i].p50, s.aggregates[i].p50));
    CHECK(same_double(agg[i].p90, s.aggregates[i].p90));
  }
}

TEST_CASE("worker pool matches the serial campaign") {
  CampaignConfig c = small_campaign();
  const std::string serial = campaign_csv(run_campaign(robot(), c).rows);
  c.threads = 3;
  CHECK(campaign_csv(run_campaign(robot(), c).rows) == serial);
}

TEST_CASE("centred sphere config ends stable under CFGD") {
  const CampaignConfig c = load_campaign(std::string(REFLEXGRASP_SOURCE_DIR) + "/configs/sphere.json");
  const CampaignSummary s = run_campaign(robot(), c);
  bool seen = false;
  for (const auto& r : s.rows) {
    if (r.variant != "cfgd") continue;
    seen = true;
    CHECK(r.outcome == "Stable");
    CHECK(r.final_mean_angle_deg < 10.0);
  }
  CHECK(seen);
}

TEST_CASE("vanilla ends less antipodal than CFGD on yawed boxes") {
  int better = 0, seeds = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    CampaignConfig c;
    c.families = {ShapeKind::Box};
    c.widths = {0.05};
    c.box_yaw_deg = {30.0};
    c.variants = {Variant::Vanilla, Variant::CFGD};
    c.seed = seed;
    c.write_traces = false;
    const auto rows = run_campaign(robot(), c).rows;
    REQUIRE(rows.size() == 2);
    ++seeds;
    if (rows[0].final_mean_angle_deg > rows[1].final_mean_angle_deg) ++better;
  }
  CHECK(better >= 9);
}

TEST_CASE("a tiny time budget times out") {
  const CampaignConfig c = load_campaign(std::string(REFLEXGRASP_SOURCE_DIR) + "/configs/timeout.json");
  const auto rows = run_campaign(robot(), c).rows;
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].outcome == "Timeout");
}

TEST_CASE("campaign config json") {
  const CampaignConfig def;
  const CampaignConfig back = campaign_from_json(to_json(def));
  CHECK(back.widths == def.widths);
  CHECK(back.variants == def.variants);
  CHECK(back.seed == def.seed);
  const CampaignConfig sphere = load_campaign(std::string(REFLEXGRASP_SOURCE_DIR) + "/configs/sphere.json");
  const CampaignConfig again = campaign_from_json(to_json(sphere));
  REQUIRE(again.scenarios.size() == 1);
  CHECK(again.scenarios[0].scenario.object.kind() == ShapeKind::Ellipsoid);
  CHECK(*again.scenarios[0].seed == 11);

  auto field_of = [](const nlohmann::json& j) {
    try {
      campaign_from_json(j);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Config);
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(field_of({{"widths", {0.05, -1}}}).find("widths[1]") != std::string::npos);
  CHECK(field_of({{"families", {"torus"}}}).find("families[0]") != std::string::npos);
  CHECK(field_of({{"sim", {{"max_time", 1}}}}).find("sim.max_time") != std::string::npos);
  CHECK(field_of({{"controller", {{"V_c", "fast"}}}}).find("V_c") != std::string::npos);
  const nlohmann::json obj = {{"shape", "torus"}, {"R", 0.02}, {"r", 0.03}};
  CHECK(field_of({{"scenarios", {{{"object", obj}}}}}).find("scenarios[0].object") != std::string::npos);
  const nlohmann::json ball = {{"shape", "ellipsoid"}, {"axes", {0.02, 0.02, 0.02}}};
  nlohmann::json dup = nlohmann::json::object();
  dup["scenarios"] = nlohmann::json::array({{{"object", ball}, {"seed", 3}}, {{"object", ball}, {"seed", 3}}});
  CHECK(field_of(dup).find("seeds must be distinct") != std::string::npos);
}

TEST_CASE("percentile") {
  CHECK(percentile({3, 1, 2}, 0.5) == 2.0);
  CHECK(percentile({0, 10}, 0.9) == doctest::Approx(9.0));
  CHECK(std::isnan(percentile({}, 0.5)));
}

TEST_CASE("cli table1 is reproducible") {
  const fs::path a = scratch("t1a"), b = scratch("t1b");
  REQUIRE(cli("table1 --trials 1 --seed 7 --out " + a.string()) == 0);
  REQUIRE(cli("table1 --trials 1 --seed 7 --out " + b.string()) == 0);
  CHECK(slurp(a / "table1.csv") == slurp(b / "table1.csv"));
  CHECK(!slurp(a / "table1.csv").empty());
  const auto summary = nlohmann::json::parse(slurp(a / "table1_summary.json"));
  CHECK(summary["rates"].contains("torus"));
}

TEST_CASE("cli sim and trace write their outputs") {
  const fs::path out = scratch("sim");
  const std::string cfg = std::string(REFLEXGRASP_SOURCE_DIR) + "/configs/timeout.json";
  REQUIRE(cli("sim --config " + cfg + " --out " + out.string()) == 0);
  const auto rows = parse_campaign_csv(slurp(out / "campaign.csv"));
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].outcome == "Timeout");
  CHECK(fs::exists(out / "traces" / "scenario_0_cfgd.csv"));
  const auto summary = nlohmann::json::parse(slurp(out / "campaign_summary.json"));
  CHECK(summary["schema"] == 1);

  const fs::path tr = scratch("trace");
  const std::string sphere = std::string(REFLEXGRASP_SOURCE_DIR) + "/configs/sphere.json";
  REQUIRE(cli("trace --config " + sphere + " --method cfgd --out " + tr.string()) == 0);
  CHECK(fs::exists(tr / "scenario_0_cfgd.csv"));
  CHECK(fs::exists(tr / "trace_summary.json"));
}

TEST_CASE("cli exit codes") {
  const fs::path bad = scratch("bad.json");
  {
    std::ofstream f(bad);
    f << "{\"widths\": [0.05], \"bogus\": 1}";
  }
  CHECK(cli("sim --config " + bad.string()) == 2);
  CHECK(cli("") == 2);
  CHECK(cli("table1 --trials 0") == 2);
  CHECK(cli("sim --method newton") == 2);

  nlohmann::json robot_json = robot_to_json(robot());
  robot_json["joints"][2]["limits"]["velocity"] = "fast";
  const fs::path rb = scratch("robot.json");
  {
    std::ofstream f(rb);
    f << robot_json.dump();
  }
  const fs::path out = scratch("accept_bad");
  const std::string cmd = std::string(REFLEXGRASP_CLI) + " --robot " + rb.string() + " accept --filter rates --out " +
                          out.string() + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  std::string text;
  char buf[256];
  while (fgets(buf, sizeof buf, pipe)) text += buf;
  const int rc = pclose(pipe);
  CHECK(WEXITSTATUS(rc) == 2);
  CHECK(text.find("joints[2].limits.velocity") != std::string::npos);
}

TEST_CASE("cli accept filter") {
  const fs::path out = scratch("accept");
  REQUIRE(cli("accept --filter table1 --out " + out.string()) == 0);
  const auto report = nlohmann::json::parse(slurp(out / "acceptance.json"));
  REQUIRE(report["criteria"].size() == 2);
  CHECK(report["criteria"][0]["name"] == "table1_rates");
  CHECK(report["criteria"][1]["name"] == "cancellation");
  CHECK(report["all_pass"] == true);
  CHECK(cli("accept --filter nothing --out " + out.string()) == 2);
}
