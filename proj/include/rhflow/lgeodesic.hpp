#ifndef RHFLOW_LGEODESIC_HPP
#define RHFLOW_LGEODESIC_HPP

#include <array>
#include <filesystem>
#include <vector>

#include "rhflow/flow.hpp"
#include "rhflow/harnack.hpp"
#include "rhflow/heat.hpp"
#include "rhflow/report.hpp"

namespace rhflow {

using Point = std::array<double, 3>;

/// Curve parameterised by s = sqrt(tau) on m + 1 uniform nodes over
/// [sqrt(tau_a), sqrt(tau1)]; node 0 sits at the base point y, node m at x.
/// Coordinates are unwrapped (the curve may wind around the torus).
struct DiscreteCurve {
  double tau_a = 0.0;
  double tau1 = 0.0;
  std::vector<Point> nodes;

  int segments() const { return static_cast<int>(nodes.size()) - 1; }
  double s(int k) const;
};

/// Straight coordinate segment from y to x, linear in s.
DiscreteCurve straight_curve(const Point& y, const Point& x, double tau1, int m = 64,
                             double tau_a = 0.0);

/// int sqrt(tau) (S + |d gamma/d tau|^2) d tau over the curve, evaluated as
/// int (2 s^2 S + |gamma'(s)|^2 / 2) ds with g and S at t = T - s^2.
/// Throws NumericalFailure on a non-finite result.
double l_phi_length(const FlowHistory& history, const DiscreteCurve& curve);

struct ReducedDistance {
  double ell = 0.0;       ///< L / (2 sqrt(tau1))
  double L = 0.0;         ///< 4 tau1 ell
  DiscreteCurve curve;    ///< minimiser
  int seed_used = 0;      ///< 0 nearest image, 1 and 2 the neighbouring windings
  int iterations = 0;
  bool converged = false;
  std::vector<double> seed_values;  ///< ell reached from each seed
};

struct CurveOptions {
  int nodes = 64;
  int max_iterations = 100;
  double gradient_tolerance = 1e-10;
};

/// Minimises the action over curves from (y, T) to (x, T - tau1) by damped
/// Newton steps from three seeds (straight segments to the nearest image of
/// x and to the two neighbouring images along the axis of largest
/// displacement). Returns the best.
ReducedDistance reduce_distance(const FlowHistory& history, const Point& y, const Point& x,
                                double tau1, const CurveOptions& opts = {});

/// Same with a static metric and S = 0: the squared g(t)-distance, as
/// 2 min int |gamma'|^2 / 2 ds over unit parameter time.
double squared_distance(const FlowState& state, const Point& y, const Point& x,
                        const CurveOptions& opts = {});

/// ell on a subsample of grid points at one tau.
struct ReducedDistanceField {
  std::array<int, 3> center{0, 0, 0};
  double tau = 0.0;
  std::vector<std::array<int, 3>> points;
  std::vector<ReducedDistance> values;
  std::vector<double> d2_terminal;  ///< squared g(T)-distance to the centre
};

/// Sample points: per axis `per_axis` indices spread evenly from the centre.
std::vector<std::array<int, 3>> subsample(const PeriodicGrid& grid, std::array<int, 3> center,
                                          int per_axis);

ReducedDistanceField reduced_distance_field(const FlowHistory& history,
                                            std::array<int, 3> center, double tau,
                                            const std::vector<std::array<int, 3>>& points,
                                            const CurveOptions& opts = {});

/// Both sides of e^{-2k1 tau} d_T^2 - (4 k1 n/3) tau^2 <= L <= e^{2k2 tau} d_T^2
/// + (4 k2 n/3) tau^2 with -k1 g <= S_ij <= k2 g over [T - tau, T].
/// Violations are absolute in units of L.
CheckReport lphi_bounds_check(const FlowHistory& history,
                              const std::vector<ReducedDistanceField>& fields,
                              double tolerance);

/// h(x, T - tau) <= ell(x, tau) + tol at every sample; each field's tau must
/// coincide with a kernel slice. Violations are (h - ell) / max(1, ell):
/// the discrete kernel's tail error grows with h.
CheckReport compare_h_ell(const KernelSolution& kernel,
                          const std::vector<ReducedDistanceField>& fields, double tolerance);

struct ReducedVolume {
  double tau = 0.0;
  double V = 0.0;
  int per_axis = 0;  ///< subsample resolution behind the interpolation
};

/// V(tau) = int (4 pi tau)^{-n/2} e^{-ell} dmu_{g(T - tau)}. ell on the grid is
/// d_T^2 / 4 tau (fast marching) plus the interpolated correction
/// (L - d_T^2) / 4 tau from an evenly spaced subsample.
ReducedVolume reduced_volume(const FlowHistory& history, std::array<int, 3> center, double tau,
                             int per_axis = 8, const CurveOptions& opts = {});

/// The curve sampled at the kernel slices with 2 tau0 <= tau <= tau1
/// (linear interpolation in s = sqrt(tau)). Throws std::invalid_argument when
/// fewer than three slices qualify.
ProbeCurve probe_from_curve(const KernelSolution& kernel, const DiscreteCurve& curve,
                            std::string name);

/// CSV with columns x_index, tau, ell, L, seed_used, iterations.
void write_reduced_csv(const std::vector<ReducedDistanceField>& fields,
                       const std::filesystem::path& path);

}  // namespace rhflow

#endif  // RHFLOW_LGEODESIC_HPP
