#include "rhflow/report.hpp"

#include <cmath>

namespace rhflow {

nlohmann::json to_json(const CheckReport& r) {
  nlohmann::json j;
  j["check"] = r.check;
  j["slice_time"] = r.slice_time ? nlohmann::json(*r.slice_time) : nlohmann::json(nullptr);
  j["max_violation"] = std::isfinite(r.max_violation) ? nlohmann::json(r.max_violation)
                                                      : nlohmann::json(nullptr);
  j["tolerance"] = r.tolerance;
  j["pass"] = r.pass;
  j["refinement_order"] =
      r.refinement_order ? nlohmann::json(*r.refinement_order) : nlohmann::json(nullptr);
  if (r.refused) j["refused"] = true;
  if (!r.note.empty()) j["note"] = r.note;
  if (!r.details.empty()) j["details"] = r.details;
  return j;
}

std::optional<double> observed_order(double coarse, double fine, double ratio) {
  if (!(coarse > 0.0) || !(fine > 0.0)) return std::nullopt;
  return std::log(coarse / fine) / std::log(ratio);
}

nlohmann::json master_report(const std::string& scenario, const std::vector<CheckReport>& checks) {
  nlohmann::json j;
  j["schema"] = 1;
  j["scenario"] = scenario;
  j["checks"] = nlohmann::json::array();
  bool all = true;
  for (const auto& c : checks) {
    j["checks"].push_back(to_json(c));
    all = all && c.pass;
  }
  j["pass"] = all;
  return j;
}

}  // namespace rhflow
