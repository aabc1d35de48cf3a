#ifndef RHFLOW_SCENARIO_HPP
#define RHFLOW_SCENARIO_HPP

#include <array>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "rhflow/flow.hpp"
#include "rhflow/harnack.hpp"
#include "rhflow/lgeodesic.hpp"
#include "rhflow/report.hpp"

namespace rhflow {

/// mean + sum_k (c_k cos k x + s_k sin k x) in x1.
struct FourierProfile {
  double mean = 0.0;
  std::map<int, double> cos;
  std::map<int, double> sin;

  Profile sample(const PeriodicGrid& grid) const;
};

struct Scenario {
  std::string name = "custom";
  int dim = 2;
  std::array<int, 3> points{128, 64, 1};
  std::vector<FourierProfile> metric;  ///< a_1 .. a_n
  FourierProfile phi;
  CouplingSchedule coupling = CouplingSchedule::constant(1.0);
  double T = 0.1;
  double flow_dt = 1.0;      ///< upper bound; the CFL limit usually decides
  int snapshot_every = 1;
  std::array<int, 3> center{64, 32, 0};  ///< the config default is the grid midpoint
  double kernel_dt = 2.5e-4;
  int seed_levels = 0;
  int slice_every = 4;
  double tau0 = 0.0;         ///< 0 selects the grid floor
  int entropy_taus = 16;
  int lgeo_per_axis = 5;
  std::set<std::string> checks{"flow", "kernel", "harnack", "entropy", "lgeo"};
  std::map<std::string, double> tolerances;  ///< overrides of default_tolerances()

  PeriodicGrid grid() const;
  FlowState initial_state() const;
  /// Tolerance for `key`: the override if present, else the default.
  double tol(const std::string& key) const;
  /// Grid points multiplied by `factor` along every active axis, centre moved
  /// to the same coordinates, time steps divided by `factor`.
  Scenario refined(double factor) const;
};

/// Default tolerance per check key.
const std::map<std::string, double>& default_tolerances();

/// Stage names in execution order.
const std::vector<std::string>& stage_names();

/// Sections [scenario] [grid] [metric] [map] [coupling] [flow] [kernel]
/// [checks] [tolerances]; `key = value` lines; '#' starts a comment.
/// Throws ConfigError with the line number on unknown sections or keys,
/// malformed values, or failed validation.
Scenario parse_config_text(const std::string& text);
Scenario parse_config(const std::filesystem::path& path);

/// The scenario written back as config text (every field explicit).
std::string to_config(const Scenario& s);

/// Throws ConfigError: dimension mismatch, non-positive or increasing
/// coupling, centre off the grid, bad grid sizes.
void validate(const Scenario& s);

/// "flat-static", "t2-coupled", "t3-positive-S". Throws ConfigError otherwise.
Scenario builtin_scenario(const std::string& name);
std::vector<std::string> builtin_names();

/// Straight segment and L-minimising curve from the centre to a point offset
/// by 1/16 of the torus along x1 and x2, both over tau in [0, tau1].
std::vector<DiscreteCurve> lyh_curves(const FlowHistory& history, std::array<int, 3> center,
                                      double tau1);

/// Constant curves at the centre and two offsets plus `curves` resampled on
/// the slices of `kernel`.
std::vector<ProbeCurve> lyh_probes(const KernelSolution& kernel,
                                   const std::vector<DiscreteCurve>& curves);

struct RunOptions {
  std::set<std::string> stages;  ///< empty selects the scenario's checks
  std::filesystem::path out = "rhflow_out";
  double tol_scale = 1.0;
};

struct RunResult {
  std::vector<CheckReport> checks;
  nlohmann::json report;
  std::vector<std::filesystem::path> files;
  int exit_code = 0;  ///< 0 pass, 1 check failure, 3 numerical failure
};

/// Runs the flow and the selected stages, writes report.json and the CSV
/// series into opts.out. NumericalFailure is caught and mapped to exit 3.
RunResult run_scenario(const Scenario& s, const RunOptions& opts);

}  // namespace rhflow

#endif  // RHFLOW_SCENARIO_HPP
