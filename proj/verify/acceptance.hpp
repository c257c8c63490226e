#pragma once

// Acceptance suite shared by the CLI `accept` subcommand and the ctest
// acceptance binary.

#include <functional>
#include <string>
#include <vector>

#include "reflexgrasp/kinematics.hpp"

#include "json.hpp"

namespace reflex::accept {

struct CriterionResult {
  int id;
  std::string name;   // filter key
  std::string title;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
  nlohmann::json metrics = nlohmann::json::object();
};

struct Options {
  std::string filter;  // empty, a criterion name, a group name or a number
  int threads = 1;
  std::function<void(const CriterionResult&)> on_result;
};

struct CriterionInfo {
  int id;
  std::string name;
  std::string group;
  std::string title;
};

const std::vector<CriterionInfo>& criteria();

/// True when the filter selects the criterion. Throws Error(Config) when the
/// filter matches nothing.
bool selected(const CriterionInfo& c, const std::string& filter);

std::vector<CriterionResult> run(const RobotModel& model, const Options& opts);

nlohmann::json report_json(const std::vector<CriterionResult>& results);

/// One line per criterion, "PASS [n] title: detail".
std::string format_line(const CriterionResult& r);

// Individual criteria, exposed for tests.
CriterionResult table1_rates();
CriterionResult cancellation_witness();
CriterionResult gradient_oracles(const RobotModel& model);
CriterionResult qp_oracle();
CriterionResult end_to_end(const RobotModel& model, int threads);
CriterionResult state_machine(const RobotModel& model);
CriterionResult determinism(const RobotModel& model);
CriterionResult rate_contract(const RobotModel& model);

}  // namespace reflex::accept
