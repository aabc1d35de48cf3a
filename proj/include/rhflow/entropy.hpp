#ifndef RHFLOW_ENTROPY_HPP
#define RHFLOW_ENTROPY_HPP

#include <filesystem>
#include <vector>

#include "rhflow/flow.hpp"
#include "rhflow/heat.hpp"
#include "rhflow/report.hpp"

namespace rhflow {

/// Test function f with its substitution w, w^2 = (4 pi tau)^{-n/2} e^{-f}.
struct EntropyProbe {
  double tau = 0.0;
  ScalarField f;
  ScalarField w;
  double constraint = 0.0;  ///< int (4 pi tau)^{-n/2} e^{-f} dmu after projection
};

/// Shifts f by a constant so that the constraint integral is one.
EntropyProbe make_probe(const ReducedMetric& metric, double tau, ScalarField f);

/// W(g, phi, f, tau) at coupling alpha. The gradient term is evaluated in
/// the w variable, 4 tau int |grad w|^2 dmu = -4 tau int w Delta w dmu, with
/// the discrete Laplacian. f is projected onto the constraint first.
double w_alpha(const FlowState& state, double alpha, double tau, const ScalarField& f);

struct MuOptions {
  int max_iterations = 320; ///< descent steps per start
  int descent_chunk = 10;   ///< descent steps between Newton polishes
  double residual_threshold = 1e-3;  ///< EL sup-norm certificate
  double support_floor = 1e-10;      ///< residual evaluated where w^2 exceeds this
  double initial_step = 1e3;
};

struct MuResult {
  double tau = 0.0;
  double mu = 0.0;
  ScalarField f;
  ScalarField w;
  double el_residual = 0.0;
  int iterations = 0;
  bool converged = false;
  int start = 0;  ///< index of the winning start
};

/// Minimises W over the constraint in the w variable: a semi-implicit
/// normalised gradient flow with step halving on the unit L2(dmu) sphere,
/// started from the constant and from Gaussians centred along x1.
/// Certifies tau(2 Delta f - |grad f|^2 + S) + f - n - mu in sup norm.
MuResult minimize_mu(const FlowState& state, double alpha, double tau,
                     const MuOptions& opts = {});

/// Logarithmic grid of `count` points from tau_min to tau_max.
std::vector<double> log_tau_grid(double tau_min, double tau_max, int count);

struct MuCurve {
  std::vector<double> taus;
  std::vector<MuResult> values;
  double B = 0.0;        ///< -min mu over the grid
  double D_kernel = 0.0;  ///< min(0, inf S(0))
  double D_sobolev = 0.0;    ///< inf S(0)
  double log_spacing = 0.0;
  int dim = 2;
};

/// mu on g(0) over `taus`.
MuCurve mu_curve(const FlowHistory& history, const std::vector<double>& taus,
                 const MuOptions& opts = {});

/// mu(g(t_i), phi(t_i), tau_terminal + T - t_i) at `snapshots` evenly spaced
/// times must be nondecreasing within tolerance. Refused for a non-constant
/// coupling schedule. Details carry the series and certificates.
CheckReport mu_monotonicity(const FlowHistory& history, double tau_terminal,
                            double tolerance = 2e-3, int snapshots = 8,
                            const MuOptions& opts = {});

/// Every returned minimiser carries an EL residual below the threshold.
CheckReport mu_certificates(const MuCurve& curve, double threshold = 1e-3);

/// mu(tau) approaches zero from below as tau decreases: |mu| nonincreasing
/// toward small tau within tolerance, mu <= tolerance throughout.
CheckReport mu_small_tau_trend(const MuCurve& curve, double tolerance = 1e-4);

/// sup H (4 pi tau)^{n/2} <= exp(B - tau D/3) (1 + tol) on every slice, with
/// D = D_kernel. Violations are relative to the bound.
CheckReport kernel_upper_bound_check(const KernelSolution& kernel, const MuCurve& curve,
                                     double tolerance = 1e-3);

/// mu(tau) >= (tau D / 3) ln((4 pi)^{n/2} C_n) - tol with D = D_sobolev.
/// Refused when n < 3 or inf S(0) <= 0.
/// Evaluated at every tau of the curve.
CheckReport entropy_sobolev_inequality(const MuCurve& curve, double tolerance = 1e-3);

/// CSV with columns tau, mu, el_residual, iterations.
void write_mu_csv(const MuCurve& curve, const std::filesystem::path& path);

}  // namespace rhflow

#endif  // RHFLOW_ENTROPY_HPP
