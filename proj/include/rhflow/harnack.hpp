#ifndef RHFLOW_HARNACK_HPP
#define RHFLOW_HARNACK_HPP

#include <array>
#include <vector>

#include "rhflow/heat.hpp"

namespace rhflow {

/// v = (tau (2 Delta h - |grad h|^2 + S) + h - n) H on one kernel slice.
struct HarnackField {
  std::size_t slice = 0;
  double t = 0.0;
  double tau = 0.0;
  ScalarField v;                ///< zero on excluded points
  std::vector<char> valid;      ///< unmasked and clear of the mask by a stencil width
  double max_ratio = 0.0;       ///< max v / H over valid points
  double max_v = 0.0;
  double masked_fraction = 0.0;
};

/// Points whose derivative stencils touch the mask are excluded as well.
/// Throws PreconditionViolated when no valid point remains.
HarnackField compute_v(const KernelSolution& kernel, const FlowHistory& history, std::size_t slice);

/// Slices with tau >= 2 tau0.
std::vector<std::size_t> harnack_slices(const KernelSolution& kernel);

/// max v / H <= tolerance over every slice with tau >= 2 tau0.
CheckReport harnack_v_check(const KernelSolution& kernel, const FlowHistory& history,
                            double tolerance);

/// Pass when the fine violation is at most half the coarse one (or both lie
/// below `floor`). Violations are max(0, max v/H).
CheckReport refinement_check(const std::string& name, const CheckReport& coarse,
                             const CheckReport& fine, double floor);

/// Closed forms for the evolution of v. `statement` carries the doubled
/// coupling term without the alpha' term; `proof` sums the two squares and
/// keeps the alpha' term; `combined` uses the square of the difference.
enum class BoxStarForm { statement, proof, combined };

/// Compares (d_tau - Delta + S) v, with a centred time difference, against
/// each closed form. max_violation is the residual of `form` relative to
/// max H; details carry all three plus the largest right-hand side.
CheckReport boxstar_v_residual(const KernelSolution& kernel, const FlowHistory& history,
                               double tolerance, BoxStarForm form = BoxStarForm::combined);

/// A curve given by its coordinates at selected kernel slices.
struct ProbeCurve {
  std::string name;
  std::vector<std::size_t> slices;             ///< consecutive, increasing tau
  std::vector<std::array<double, 3>> points;   ///< coordinates (unwrapped)
};

/// Both differential LYH forms along each curve; margins are
/// RHS - LHS and must be >= -tolerance.
CheckReport lyh_along_curve(const KernelSolution& kernel, const FlowHistory& history,
                            const std::vector<ProbeCurve>& curves, double tolerance);

/// Constant curve at grid point p over the slices with tau >= 2 tau0.
ProbeCurve constant_curve(const KernelSolution& kernel, std::array<int, 3> p, std::string name);

/// Barrier form of the logarithmic gradient estimate with q = H,
/// A = 1.05 sup H. Violations are relative to q. Points with
/// H < floor * max H on the slice, or within a stencil width of one, are skipped.
CheckReport gradient_estimate_check(const KernelSolution& kernel, const FlowHistory& history,
                                    double tolerance, double floor = 1e-12);

/// rho(t) = int v Phi dmu for a positive forward solution Phi with Phi(y, T) = 1,
/// and int (h - n/2) H Phi dmu at the latest slices. Passes when rho never
/// decreases by more than `tolerance`, |rho| at the latest slice is at most
/// `terminal_tolerance`, and the entropy-like integral is at most `tolerance`.
struct RhoSeries {
  std::string name;
  std::vector<double> t;
  std::vector<double> rho;
  std::vector<double> entropy_like;  ///< int (h - n/2) H Phi dmu
};

CheckReport rho_phi_report(const KernelSolution& kernel, const FlowHistory& history,
                           const std::vector<std::pair<std::string, ScalarField>>& seeds,
                           double tolerance, double terminal_tolerance,
                           std::vector<RhoSeries>* series = nullptr,
                           const HeatOptions& opts = {});

}  // namespace rhflow

#endif  // RHFLOW_HARNACK_HPP
