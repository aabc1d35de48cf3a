#ifndef RHFLOW_SOBOLEV_HPP
#define RHFLOW_SOBOLEV_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rhflow/flow.hpp"
#include "rhflow/heat.hpp"
#include "rhflow/report.hpp"

namespace rhflow {

/// Best constant K(n,2) of ||u||_{2n/(n-2)} <= K ||grad u||_2 on R^n:
/// K^2 = 4 / (n (n-2) omega_n^{2/n}), omega_n the volume of the unit n-sphere.
/// Throws PreconditionViolated for n < 3.
double talenti_constant(int n);

/// (2/n)^{n/2}.
double heat_bound_constant(int n);

/// (4 K(n,2) / n)^{n/2}.
double kernel_bound_constant(int n);

/// A(t), B(t) of the time-dependent Sobolev inequality
///   ||v||_{2n/(n-2)}^2 <= A int (|grad v|^2 + S v^2 / 4) dmu + B int v^2 dmu,
/// sampled at increasing times and interpolated linearly (held constant
/// outside the samples).
struct SobolevConstants {
  int n = 3;
  double K = 0.0;        ///< K(n,2)
  double C_n = 0.0;      ///< (2/n)^{n/2}
  double C_tilde = 0.0;  ///< (4K/n)^{n/2}
  std::vector<double> times;
  std::vector<double> A;
  std::vector<double> B;
  std::string source = "user";  ///< "user" or "heuristic"

  double A_at(double t) const;
  double B_at(double t) const;
};

/// Constant A and B. Throws std::invalid_argument unless A > 0 and B >= 0.
SobolevConstants constant_sobolev(int n, double A, double B);

struct FitOptions {
  int test_functions = 48;
  int time_samples = 4;
  double inflation = 1.1;
  std::uint64_t seed = 20240917;
};

/// HEURISTIC. A = K(n,2)^2; B(t) is the largest Sobolev defect
/// (||v||^2_{2n/(n-2)} - A E(v)) / ||v||_2^2 over a fixed random family of
/// positive test functions (Gaussian bumps and low Fourier modes) on g(t),
/// inflated. Throws PreconditionViolated for n < 3.
SobolevConstants fit_sobolev_constants(const FlowHistory& history, const FitOptions& opts = {});

/// Proof ingredients for a pair s < t with a forward kernel from (x, s).
struct BoundIngredients {
  int n = 3;
  double s = 0.0;
  double t = 0.0;
  double inf_S0 = 0.0;
  double c_n = 0.0;       ///< 2/n
  bool envelope = false;  ///< false when inf S(0) >= 0 (envelope regarded as zero)
  double m0 = 0.0;        ///< 1 / inf S(0) when the envelope is active
  std::vector<double> times;  ///< forward slice times
  std::vector<double> J;      ///< int H(x, s; y, tau) dmu(y, tau)

  /// (m0 - c_n tau) / (m0 - c_n s), 1 without envelope.
  double chi(double tau) const;
  /// 1 / (m0 - c_n tau), 0 without envelope.
  double envelope_value(double tau) const;
};

/// m0, c_n from g(0); J measured from a forward solve seeded at (x, s) with
/// width tau0. Throws std::invalid_argument unless s < t within the history.
BoundIngredients bound_ingredients(const FlowHistory& history, std::array<int, 3> x, double s,
                                   double t, double tau0, const HeatOptions& opts = {});

/// J(s) = 1, J(tau) <= chi^{n/2} + tol on every slice and J nonincreasing
/// when inf S >= 0 over the run.
CheckReport j_bound_check(const FlowHistory& history, const BoundIngredients& ing,
                          double tolerance = 1e-3);

/// F(tau) = int_s^tau [B/A - (3/4) envelope] by the trapezoid rule on
/// `nodes` uniform subintervals.
double f_integral(const BoundIngredients& ing, const SobolevConstants& c, double tau,
                  int nodes = 400);

/// C_n / ( [int_s^m chi0^{-2} e^{2F/n} / A]^{n/4} [int_m^t e^{-2F/n} / A]^{n/4} ),
/// m = (s + t)/2, chi0 = (m0 - c_n tau)/m0 (1 without envelope). Throws
/// NumericalFailure for a vanishing denominator.
double sobolev_kernel_bound(const BoundIngredients& ing, const SobolevConstants& c, int nodes = 400);

/// Compares sobolev_kernel_bound with sup_x H on kernel slices nearest the
/// requested taus, pair (T - tau, T). Details rows: {pair, bound,
/// measured_sup_H, margin, constants_source}.
CheckReport sobolev_kernel_bound_check(const FlowHistory& history, const KernelSolution& kernel,
                            const SobolevConstants& c, const std::vector<double>& taus,
                            double tolerance = 0.0);

/// sup_x H (t - s)^{n/2} <= C_tilde + tol on every slice of every kernel.
/// Refused when n < 3 or inf S(0) <= 0 (the measured value is in the note).
CheckReport uniform_kernel_bound_check(const FlowHistory& history,
                              const std::vector<KernelSolution>& kernels, double tolerance = 1e-3);

struct EnergySeries {
  std::vector<double> times;
  std::vector<double> values;
};

/// int u^2 dmu(t) along a forward solution.
EnergySeries kernel_energy_forward(const FlowHistory& history, const ForwardSolution& u);

/// int H^2 dmu(T - tau) along a conjugate kernel.
EnergySeries kernel_energy_backward(const FlowHistory& history, const KernelSolution& kernel);

/// CSV with columns t, J, chi_bound.
void write_j_csv(const BoundIngredients& ing, const std::filesystem::path& path);

}  // namespace rhflow

#endif  // RHFLOW_SOBOLEV_HPP
