#ifndef RHFLOW_REPORT_HPP
#define RHFLOW_REPORT_HPP

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace rhflow {

/// Outcome of one named inequality or identity check.
struct CheckReport {
  std::string check;
  /// Time of the worst slice, if the check is slice-based.
  std::optional<double> slice_time;
  /// Largest measured violation (positive means the inequality was broken by
  /// that much before tolerance).
  double max_violation = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  /// Observed convergence order from a refinement study, when one was run.
  std::optional<double> refinement_order;
  /// Set when the check refused to run because its hypotheses fail.
  bool refused = false;
  std::string note;
  /// Free-form extra numbers (margins, series) for inspection.
  nlohmann::json details = nlohmann::json::object();
};

nlohmann::json to_json(const CheckReport& r);

/// Observed order log2(coarse/fine) of an error pair; nullopt when either is
/// not positive.
std::optional<double> observed_order(double coarse, double fine, double ratio = 2.0);

/// Master report: {"schema": 1, "scenario": ..., "checks": [...], "pass": ...}.
nlohmann::json master_report(const std::string& scenario, const std::vector<CheckReport>& checks);

}  // namespace rhflow

#endif  // RHFLOW_REPORT_HPP
