#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "acceptance.hpp"
#include "json.hpp"
#include "reflexgrasp/campaign.hpp"
#include "reflexgrasp/descent.hpp"
#include "reflexgrasp/errors.hpp"
#include "reflexgrasp/kinematics.hpp"

namespace fs = std::filesystem;
using namespace reflex;

namespace {

enum Exit { kOk = 0, kAcceptFail = 1, kConfig = 2, kRuntime = 3 };

struct Common {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::string method;
  std::optional<int> threads;
  std::string filter;
  std::string robot;
  int scenario = 0;
};

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::InvalidArgument, "cannot write " + path.string());
  f << text;
  if (!f) throw Error(ErrorKind::InvalidArgument, "failed writing " + path.string());
}

RobotModel robot(const Common& o) { return o.robot.empty() ? default_robot() : load_robot(o.robot); }

CampaignConfig campaign(const Common& o) {
  CampaignConfig c = o.config.empty() ? CampaignConfig{} : load_campaign(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.threads) c.threads = *o.threads;
  if (!o.method.empty()) {
    const Variant m = o.method == "pgd" ? Variant::PGD : Variant::CFGD;
    std::vector<Variant> keep;
    for (Variant v : c.variants) {
      if (v == Variant::Vanilla || v == m) keep.push_back(v);
    }
    if (std::find(keep.begin(), keep.end(), m) == keep.end()) keep.push_back(m);
    c.variants = keep;
  }
  c.validate();
  return c;
}

int cmd_table1(const Common& o) {
  Table1Config cfg = o.config.empty() ? Table1Config{} : load_table1(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.trials) cfg.n_trials = *o.trials;
  if (o.threads) cfg.threads = *o.threads;
  if (o.method == "pgd" || o.method == "cfgd") {
    std::cerr << "note: table1 always runs both methods on shared initializations\n";
  }
  validate(cfg);
  const Table1Result res = run_table1(cfg);
  const fs::path out(o.out);
  write_file(out / "table1.csv", table1_csv(res));
  write_file(out / "table1_summary.json", table1_summary_json(res, cfg));
  for (const auto& r : res.rates) {
    std::printf("%-13s pgd %5.1f%%  cfgd %5.1f%%\n", to_string(r.shape_kind), 100.0 * r.pgd_rate,
                100.0 * r.cfgd_rate);
  }
  return kOk;
}

std::string trace_name(const CampaignRow& r) {
  return "scenario_" + std::to_string(r.scenario) + "_" + r.variant + ".csv";
}

int cmd_sim(const Common& o) {
  const CampaignConfig c = campaign(o);
  const RobotModel model = robot(o);
  const CampaignSummary s = run_campaign(model, c);
  const fs::path out(o.out);
  write_file(out / "campaign.csv", campaign_csv(s.rows));
  nlohmann::json summary = summary_json(s, c);
  summary["config"] = to_json(c);
  write_file(out / "campaign_summary.json", summary.dump(2) + "\n");
  if (c.write_traces) {
    for (const auto& r : s.rows) write_file(out / "traces" / trace_name(r), trace_csv(r.trace));
  }
  for (const auto& a : s.aggregates) {
    std::printf("%-8s runs %3d  stable %5.1f%%  mean angle %6.2f deg  p50 %6.2f  p90 %6.2f\n", a.variant.c_str(),
                a.runs, 100.0 * a.stable_rate, a.mean_angle_deg, a.p50, a.p90);
  }
  return kOk;
}

int cmd_trace(const Common& o) {
  CampaignConfig c = campaign(o);
  const auto specs = enumerate_scenarios(c);
  if (o.scenario < 0 || o.scenario >= static_cast<int>(specs.size())) {
    throw Error(ErrorKind::Config, "scenario: index out of range [0, " + std::to_string(specs.size()) + ")");
  }
  // Narrow the campaign to the one scenario, keeping its seed and perturbation.
  const ScenarioSpec& spec = specs[static_cast<std::size_t>(o.scenario)];
  Scenario base = spec.custom ? *spec.custom : base_scenario(spec.family, spec.width);
  c.scenarios = {CustomScenario{base, spec.perturbation, spec.magnitude, spec.seed}};
  c.write_traces = true;
  c.threads = 1;
  const CampaignSummary s = run_campaign(robot(o), c);
  const fs::path out(o.out);
  nlohmann::json runs = nlohmann::json::array();
  for (auto r : s.rows) {
    r.scenario = spec.index;
    const std::string name = trace_name(r);
    write_file(out / name, trace_csv(r.trace));
    runs.push_back({{"variant", r.variant},
                    {"outcome", r.outcome},
                    {"final_mean_angle_deg", std::isnan(r.final_mean_angle_deg) ? nlohmann::json()
                                                                                : nlohmann::json(r.final_mean_angle_deg)},
                    {"transitions", r.transitions},
                    {"time_s", r.time_s},
                    {"trace", name}});
    std::printf("%-8s %-8s mean angle %s deg  t = %.3f s  -> %s\n", r.variant.c_str(), r.outcome.c_str(),
                std::isnan(r.final_mean_angle_deg) ? "n/a" : std::to_string(r.final_mean_angle_deg).c_str(),
                r.time_s, (out / name).string().c_str());
  }
  nlohmann::json summary = {{"schema", 1}, {"scenario", spec.index}, {"seed", spec.seed}, {"runs", runs}};
  write_file(out / "trace_summary.json", summary.dump(2) + "\n");
  return kOk;
}

int cmd_accept(const Common& o) {
  const RobotModel model = robot(o);
  accept::Options opts;
  opts.filter = o.filter;
  opts.threads = o.threads.value_or(1);
  opts.on_result = [](const accept::CriterionResult& r) { std::printf("%s\n", accept::format_line(r).c_str()); };
  bool any = false;
  for (const auto& c : accept::criteria()) any = any || accept::selected(c, o.filter);
  if (!any) throw Error(ErrorKind::Config, "filter: '" + o.filter + "' matches no criterion");
  const auto results = accept::run(model, opts);
  const nlohmann::json report = accept::report_json(results);
  write_file(fs::path(o.out) / "acceptance.json", report.dump(2) + "\n");
  return report["all_pass"].get<bool>() ? kOk : kAcceptFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tactile reflex grasping: descent experiments, simulated campaigns and acceptance checks"};
  app.require_subcommand(1);
  Common o;
  app.add_option("--robot", o.robot, "Robot model JSON (default: bundled 15-DoF model)");

  auto add_common = [&](CLI::App* sub, bool trials) {
    sub->add_option("--config", o.config, "Config JSON")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "Output directory")->capture_default_str();
    sub->add_option("--seed", o.seed, "Base seed");
    sub->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--method", o.method, "Descent method")->check(CLI::IsMember({"pgd", "cfgd"}));
    if (trials) sub->add_option("--trials", o.trials, "Trials per family")->check(CLI::PositiveNumber);
  };
  CLI::App* table1 = app.add_subcommand("table1", "Random-initialization descent experiment (PGD vs CFGD)");
  add_common(table1, true);
  CLI::App* sim = app.add_subcommand("sim", "Campaign over objects, sizes and perturbations for all variants");
  add_common(sim, false);
  CLI::App* trace = app.add_subcommand("trace", "One scenario of a campaign with full per-tick traces");
  add_common(trace, false);
  trace->add_option("--scenario", o.scenario, "Scenario index within the campaign")->capture_default_str();
  CLI::App* acc = app.add_subcommand("accept", "Acceptance suite; exit 0 iff every selected criterion passes");
  acc->add_option("--out", o.out, "Output directory")->capture_default_str();
  acc->add_option("--threads", o.threads, "Worker threads for the campaign criterion")->check(CLI::PositiveNumber);
  acc->add_option("--filter", o.filter, "Criterion name, group or number");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (table1->parsed()) return cmd_table1(o);
    if (sim->parsed()) return cmd_sim(o);
    if (trace->parsed()) return cmd_trace(o);
    return cmd_accept(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::Config ? kConfig : kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}
