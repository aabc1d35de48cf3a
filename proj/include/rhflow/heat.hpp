#ifndef RHFLOW_HEAT_HPP
#define RHFLOW_HEAT_HPP

#include <array>
#include <filesystem>
#include <vector>

#include "rhflow/flow.hpp"
#include "rhflow/report.hpp"

namespace rhflow {

struct HeatOptions {
  /// Time step of the Crank-Nicolson integration.
  double dt = 2.5e-4;
  /// Below this tau the conjugate solve shrinks its step in proportion to tau
  /// (geometric grading from the seed), which keeps the kernel tail accurate.
  double grading_tau = 0.1;
  /// Keep every k-th step as a slice (the first state is always kept).
  int slice_every = 4;
  /// Earliest flow time reached by a conjugate solve.
  double t_min = 0.0;
  /// Seed distances within this many sqrt(tau0) of the centre come from the
  /// local segment-length formula instead of fast marching.
  double exact_radius_factor = 8.0;
  /// Each level replaces the Gaussian seed by a solve from a quarter of the
  /// width on a grid refined by two (skipped when that grid cannot resolve it).
  int seed_levels = 0;
  /// Relative mass drift that aborts a conjugate solve.
  double mass_abort = 0.01;
};

/// Conjugate heat kernel H(., t; y, T) on slices t = T - tau.
struct KernelSolution {
  std::array<int, 3> center{0, 0, 0};
  double T = 0.0;
  double tau0 = 0.0;
  int dim = 2;
  int seed_levels = 0;        ///< nested seed levels actually used
  std::vector<double> times;  ///< flow times, decreasing
  std::vector<double> taus;   ///< T - t, increasing
  std::vector<ScalarField> H;
  std::vector<double> mass;   ///< int H dmu_{g(t)} per slice

  std::size_t slices() const { return H.size(); }
  /// Slice whose time is closest to t.
  std::size_t nearest_slice(double t) const;
  /// h = -ln H - (n/2) ln(4 pi tau); masked points hold +inf.
  ScalarField h(std::size_t k) const;
  /// 1 where H >= 1e-12 max H on the slice.
  std::vector<char> mask(std::size_t k) const;
  double masked_fraction(std::size_t k) const;
};

/// Solution of the forward heat equation d_t u = Delta_{g(t)} u.
struct ForwardSolution {
  double s = 0.0;
  std::vector<double> times;  ///< increasing
  std::vector<ScalarField> u;
  std::size_t nearest_slice(double t) const;
};

/// Normalised Gaussian (4 pi tau0)^{-n/2} exp(-d^2 / 4 tau0) in the distance of
/// `metric` to the grid point `center`, rescaled to unit mass.
ScalarField gaussian_seed(const ReducedMetric& metric, std::array<int, 3> center, double tau0,
                          double exact_radius_factor = 8.0);

/// Smallest admissible seed width for a grid.
double minimum_tau0(const PeriodicGrid& grid);

/// int f dmu_g.
double integrate(const ScalarField& f, const ReducedMetric& metric);

ForwardSolution solve_forward(const FlowHistory& history, const ScalarField& initial, double s,
                              double t_end, const HeatOptions& opts = {});

/// tau nodes of a conjugate solve: geometric from tau0 up to grading_tau,
/// then uniform with step opts.dt ending exactly at tau_end.
std::vector<double> conjugate_tau_nodes(double tau0, double tau_end, const HeatOptions& opts);

/// Conjugate kernel centred at (center, T): seeds at T - tau0 and integrates
/// d_tau H = Delta H - S H down to opts.t_min. Throws PreconditionViolated for a
/// seed narrower than minimum_tau0 or too short an interval; NumericalFailure
/// on mass drift beyond opts.mass_abort.
KernelSolution solve_conjugate(const FlowHistory& history, std::array<int, 3> center, double T,
                               double tau0, const HeatOptions& opts = {});

/// Explicit full-grid conjugate solve with the finite-difference Laplacian
/// (reference path, coarse grids only). Returns H at flow time T - tau_end.
ScalarField solve_conjugate_explicit(const FlowHistory& history, std::array<int, 3> center,
                                     double T, double tau0, double tau_end);

struct KernelPropertySample {
  std::array<int, 3> x{0, 0, 0};
  double s = 0.0;               ///< forward seed time
  std::vector<double> r;        ///< intermediate times for the composition
};

/// Semigroup and duality checks against a conjugate kernel centred at
/// (kernel.center, kernel.T). Each sample seeds a forward solve of width
/// `tau0_forward` at (x, s); the composition int F(z, r) C(z, r) dmu(z) and
/// the forward value F(y, T) are compared with C(x, s - tau0_forward).
CheckReport kernel_properties(const FlowHistory& history, const KernelSolution& kernel,
                              const std::vector<KernelPropertySample>& samples,
                              double tau0_forward, double semigroup_tol, double duality_tol,
                              const HeatOptions& opts = {});

/// Conjugate mass conservation across all slices.
CheckReport mass_conservation(const KernelSolution& kernel, double tolerance = 1e-4);

/// Slice directory of field dumps plus index.json {y, T, tau0, times, mass_series}.
void export_kernel(const KernelSolution& kernel, const std::filesystem::path& dir);

}  // namespace rhflow

#endif  // RHFLOW_HEAT_HPP
