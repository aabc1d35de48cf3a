#ifndef RHFLOW_FLOW_HPP
#define RHFLOW_FLOW_HPP

#include <optional>
#include <string>
#include <vector>

#include "rhflow/geometry.hpp"
#include "rhflow/report.hpp"

namespace rhflow {

/// alpha(t): constant, or linear with slope <= 0 clipped from below at alpha_bar.
struct CouplingSchedule {
  enum class Kind { constant, linear_clipped };
  Kind kind = Kind::constant;
  double alpha0 = 0.0;
  double alpha_bar = 0.0;
  double slope = 0.0;

  static CouplingSchedule constant(double alpha);
  static CouplingSchedule linear_clipped(double alpha0, double alpha_bar, double slope);

  double alpha(double t) const;
  double alpha_prime(double t) const;
  bool is_constant() const { return kind == Kind::constant || slope == 0.0; }
  /// Throws PreconditionViolated unless alpha is nonnegative and non-increasing
  /// (alpha0 = 0 with constant kind is accepted: plain Ricci flow).
  void validate() const;
};

struct FlowState {
  double t = 0.0;
  ReducedMetric metric;
  ScalarMap map;
};

/// Snapshots of a run with linear interpolation in time.
class FlowHistory {
 public:
  FlowHistory() = default;
  FlowHistory(std::vector<FlowState> snapshots, CouplingSchedule schedule);

  const std::vector<FlowState>& snapshots() const { return snaps_; }
  const CouplingSchedule& schedule() const { return schedule_; }
  double terminal_time() const { return snaps_.back().t; }
  int dim() const { return snaps_.front().metric.dim(); }
  const PeriodicGrid& grid() const { return snaps_.front().metric.grid(); }

  /// Interpolated state; throws std::out_of_range outside [0, T].
  FlowState at(double t) const;
  /// Coupled quantities of the interpolated state.
  CoupledQuantities quantities(double t) const;

  /// Time at which a run stopped early (blow-up or NaN), if it did.
  std::optional<double> failure_time;
  std::string failure_reason;

 private:
  std::vector<FlowState> snaps_;
  CouplingSchedule schedule_;
};

/// Largest admissible explicit step for `state`.
double cfl_limit(const FlowState& state);

/// Time derivatives of the reduced system at `state`.
struct FlowRate {
  std::vector<Profile> da;
  Profile dphi;
};
FlowRate flow_rate(const FlowState& state, double alpha);

/// One classical RK4 step. Throws NumericalFailure on non-positive
/// coefficients or non-finite values.
FlowState step(const FlowState& state, const CouplingSchedule& schedule, double dt);

/// Integrates to time T with step at most dt (shrunk to the CFL limit and to
/// an integer number of snapshot intervals). On failure the history ends at
/// the last valid snapshot and failure_time is set.
FlowHistory run(const FlowState& initial, const CouplingSchedule& schedule, double T, double dt,
                int snapshot_every = 1);

/// Central-difference dS/dt against Delta S + 2 alpha |tau phi|^2 + 2|S_ij|^2
/// - alpha' |grad phi|^2 at interior snapshots.
CheckReport evolS_residual(const FlowHistory& history, double tolerance = 1e-6);

/// Central-difference d/dt Vol against -int S dmu.
CheckReport volume_identity(const FlowHistory& history, double tolerance = 1e-6);

/// Lower barrier inf S(t) >= 1/(m0 - (2/n) t), and inf S nondecreasing when
/// inf S(0) >= 0.
CheckReport s_min_monotonicity(const FlowHistory& history, double tolerance = 5e-3);

/// Envelope value 1/(m0 - (2/n) t) for inf S(0) = s0; 0 when s0 = 0 or the
/// envelope has degenerated.
double s_envelope(double s0, int n, double t);

/// min over the run and the probe fields of D(S, X).
CheckReport d_nonnegativity(const FlowHistory& history, double tolerance = 1e-10);

/// Probe vector fields X = X1(x1) d_1 used by d_nonnegativity.
std::vector<Profile> probe_fields(const PeriodicGrid& grid);

}  // namespace rhflow

#endif  // RHFLOW_FLOW_HPP
