#include "rhflow/sobolev.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include "rhflow/errors.hpp"
#include "rhflow/geometry.hpp"

namespace rhflow {

double talenti_constant(int n) {
  if (n < 3) throw PreconditionViolated("Sobolev constant needs n >= 3");
  const double omega = 2.0 * std::pow(std::numbers::pi, 0.5 * (n + 1)) / std::tgamma(0.5 * (n + 1));
  return std::sqrt(4.0 / (n * (n - 2.0) * std::pow(omega, 2.0 / n)));
}

double heat_bound_constant(int n) { return std::pow(2.0 / n, 0.5 * n); }

double kernel_bound_constant(int n) { return std::pow(4.0 * talenti_constant(n) / n, 0.5 * n); }

namespace {

double sampled(const std::vector<double>& times, const std::vector<double>& v, double t) {
  if (v.size() == 1 || t <= times.front()) return v.front();
  if (t >= times.back()) return v.back();
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const std::size_t j = static_cast<std::size_t>(it - times.begin());
  const double th = (t - times[j - 1]) / (times[j] - times[j - 1]);
  return (1.0 - th) * v[j - 1] + th * v[j];
}

double inf_s0(const FlowHistory& history) {
  const FlowState& s0 = history.snapshots().front();
  const Profile S = coupled_quantities(s0.metric, s0.map, history.schedule().alpha(s0.t)).S;
  return *std::min_element(S.begin(), S.end());
}

BoundIngredients base_ingredients(const FlowHistory& history, double s, double t) {
  const double t0 = history.snapshots().front().t;
  if (!(s < t) || s < t0 - 1e-12 || t > history.terminal_time() + 1e-12)
    throw std::invalid_argument("bound ingredients: need s < t within the history");
  BoundIngredients b;
  b.n = history.dim();
  b.s = s;
  b.t = t;
  b.c_n = 2.0 / b.n;
  b.inf_S0 = inf_s0(history);
  b.envelope = b.inf_S0 < 0.0;
  b.m0 = b.envelope ? 1.0 / b.inf_S0 : std::numeric_limits<double>::infinity();
  return b;
}

// Minimal-image coordinate offset.
double wrap(double d, double L) { return std::remainder(d, L); }

}  // namespace

double SobolevConstants::A_at(double t) const { return sampled(times, A, t); }
double SobolevConstants::B_at(double t) const { return sampled(times, B, t); }

SobolevConstants constant_sobolev(int n, double A, double B) {
  if (!(A > 0.0) || !(B >= 0.0)) throw std::invalid_argument("Sobolev constants: need A > 0, B >= 0");
  SobolevConstants c;
  c.n = n;
  c.K = talenti_constant(n);
  c.C_n = heat_bound_constant(n);
  c.C_tilde = kernel_bound_constant(n);
  c.times = {0.0};
  c.A = {A};
  c.B = {B};
  return c;
}

SobolevConstants fit_sobolev_constants(const FlowHistory& history, const FitOptions& opts) {
  const int n = history.dim();
  SobolevConstants c = constant_sobolev(n, std::pow(talenti_constant(n), 2), 0.0);
  c.source = "heuristic";
  c.times.clear();
  c.A.clear();
  c.B.clear();
  const PeriodicGrid& g = history.grid();
  const double p = 2.0 * n / (n - 2.0);

  // Test family, fixed by the seed and shared by all times.
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<ScalarField> family{ScalarField(g, 1.0)};
  for (int k = 1; k < opts.test_functions; ++k) {
    if (k % 2) {
      std::array<double, 3> ctr{};
      for (int a = 0; a < n; ++a) ctr[a] = U(rng) * g.length(a);
      const double sigma = 0.2 + 1.3 * U(rng);
      family.push_back(ScalarField::sample(g, [&](double x, double y, double z) {
        const std::array<double, 3> q{x, y, z};
        double d2 = 0.0;
        for (int a = 0; a < n; ++a) d2 += std::pow(wrap(q[a] - ctr[a], g.length(a)), 2);
        return std::exp(-0.5 * d2 / (sigma * sigma));
      }));
    } else {
      std::array<std::array<double, 3>, 4> modes{};
      std::array<double, 4> phase{}, amp{};
      for (int m = 0; m < 4; ++m) {
        for (int a = 0; a < n; ++a) modes[m][a] = std::floor(U(rng) * 5.0) - 2.0;
        phase[m] = 2.0 * std::numbers::pi * U(rng);
        amp[m] = U(rng);
      }
      ScalarField v = ScalarField::sample(g, [&](double x, double y, double z) {
        double s = 0.0;
        for (int m = 0; m < 4; ++m)
          s += amp[m] * std::cos(modes[m][0] * x + modes[m][1] * y + modes[m][2] * z + phase[m]);
        return s;
      });
      const double eps = 0.95 * U(rng) / std::max(v.max_abs(), 1e-12);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 + eps * v[i];
      family.push_back(std::move(v));
    }
  }

  const auto& snaps = history.snapshots();
  const int samples = std::max(1, std::min<int>(opts.time_samples, static_cast<int>(snaps.size())));
  for (int j = 0; j < samples; ++j) {
    const std::size_t idx =
        samples == 1 ? 0 : static_cast<std::size_t>(std::lround(double(j) * (snaps.size() - 1) / (samples - 1)));
    const FlowState& st = snaps[idx];
    const ScalarField S = ScalarField::from_profile(
        g, coupled_quantities(st.metric, st.map, history.schedule().alpha(st.t)).S);
    double worst = 0.0;
    for (const auto& v : family) {
      const ScalarField grad2 = gradient_norm_sq(st.metric, gradient(v));
      ScalarField energy(g), vp(g), v2(g);
      for (std::size_t i = 0; i < v.size(); ++i) {
        energy[i] = grad2[i] + 0.25 * S[i] * v[i] * v[i];
        vp[i] = std::pow(std::abs(v[i]), p);
        v2[i] = v[i] * v[i];
      }
      const double lhs = std::pow(integrate(vp, st.metric), 2.0 / p);
      const double defect = (lhs - c.K * c.K * integrate(energy, st.metric)) /
                            integrate(v2, st.metric);
      worst = std::max(worst, defect);
    }
    c.times.push_back(st.t);
    c.A.push_back(c.K * c.K);
    c.B.push_back(opts.inflation * worst);
  }
  return c;
}

double BoundIngredients::chi(double tau) const {
  return envelope ? (m0 - c_n * tau) / (m0 - c_n * s) : 1.0;
}

double BoundIngredients::envelope_value(double tau) const {
  return envelope ? 1.0 / (m0 - c_n * tau) : 0.0;
}

BoundIngredients bound_ingredients(const FlowHistory& history, std::array<int, 3> x, double s,
                                   double t, double tau0, const HeatOptions& opts) {
  BoundIngredients b = base_ingredients(history, s, t);
  const FlowState start = history.at(s);
  const ScalarField seed = gaussian_seed(start.metric, x, tau0, opts.exact_radius_factor);
  const ForwardSolution F = solve_forward(history, seed, s, t, opts);
  for (std::size_t k = 0; k < F.times.size(); ++k) {
    b.times.push_back(F.times[k]);
    b.J.push_back(integrate(F.u[k], history.at(F.times[k]).metric));
  }
  return b;
}

CheckReport j_bound_check(const FlowHistory& history, const BoundIngredients& ing,
                          double tolerance) {
  CheckReport r;
  r.check = "J_bound";
  r.tolerance = tolerance;
  if (ing.J.empty()) throw std::invalid_argument("J bound: no forward data");
  bool nonneg = true;
  for (const auto& st : history.snapshots()) {
    const Profile S = coupled_quantities(st.metric, st.map, history.schedule().alpha(st.t)).S;
    nonneg = nonneg && *std::min_element(S.begin(), S.end()) >= 0.0;
  }
  const double start_error = std::abs(ing.J.front() - 1.0);
  double worst = -std::numeric_limits<double>::infinity();
  nlohmann::json series = nlohmann::json::array();
  for (std::size_t k = 0; k < ing.J.size(); ++k) {
    const double bound = std::pow(ing.chi(ing.times[k]), 0.5 * ing.n);
    double v = ing.J[k] - bound;
    if (nonneg && k > 0) v = std::max(v, ing.J[k] - ing.J[k - 1]);
    if (v > worst) {
      worst = v;
      r.slice_time = ing.times[k];
    }
    series.push_back({{"t", ing.times[k]}, {"J", ing.J[k]}, {"chi_bound", bound}});
  }
  r.max_violation = worst;
  r.pass = worst <= tolerance && start_error <= 1e-6;
  r.details["start_error"] = start_error;
  r.details["series"] = series;
  r.details["inf_S0"] = ing.inf_S0;
  r.details["envelope_active"] = ing.envelope;
  r.details["monotone_required"] = nonneg;
  return r;
}

double f_integral(const BoundIngredients& ing, const SobolevConstants& c, double tau, int nodes) {
  const double h = (tau - ing.s) / nodes;
  double acc = 0.0;
  for (int k = 0; k <= nodes; ++k) {
    const double x = ing.s + k * h;
    const double f = c.B_at(x) / c.A_at(x) - 0.75 * ing.envelope_value(x);
    acc += (k == 0 || k == nodes ? 0.5 : 1.0) * f;
  }
  return acc * h;
}

double sobolev_kernel_bound(const BoundIngredients& ing, const SobolevConstants& c, int nodes) {
  if (ing.envelope && (ing.m0 - ing.c_n * ing.s) * (ing.m0 - ing.c_n * ing.t) <= 0.0)
    throw std::invalid_argument("sobolev kernel bound: envelope degenerates inside [s, t]");
  const int n = ing.n;
  const int half = std::max(2, nodes / 2);
  // F on a uniform grid over [s, t] by cumulative trapezoid.
  const int N = 2 * half;
  const double h = (ing.t - ing.s) / N;
  std::vector<double> F(N + 1, 0.0);
  auto f = [&](double x) { return c.B_at(x) / c.A_at(x) - 0.75 * ing.envelope_value(x); };
  for (int k = 1; k <= N; ++k) F[k] = F[k - 1] + 0.5 * h * (f(ing.s + (k - 1) * h) + f(ing.s + k * h));
  double I1 = 0.0, I2 = 0.0;
  for (int k = 0; k <= N; ++k) {
    const double x = ing.s + k * h;
    const double w = (k == 0 || k == half || k == N) ? 0.5 : 1.0;
    if (k <= half) {
      const double chi0 = ing.envelope ? (ing.m0 - ing.c_n * x) / ing.m0 : 1.0;
      I1 += w * std::exp(2.0 * F[k] / n) / (chi0 * chi0 * c.A_at(x));
    }
    if (k >= half) I2 += w * std::exp(-2.0 * F[k] / n) / c.A_at(x);
  }
  I1 *= h;
  I2 *= h;
  const double denom = std::pow(I1 * I2, 0.25 * n);
  if (!(denom > 0.0) || !std::isfinite(denom))
    throw NumericalFailure("sobolev kernel bound: vanishing denominator", ing.t);
  return c.C_n / denom;
}

CheckReport sobolev_kernel_bound_check(const FlowHistory& history, const KernelSolution& kernel,
                            const SobolevConstants& c, const std::vector<double>& taus,
                            double tolerance) {
  CheckReport r;
  r.check = "sobolev_kernel_bound";
  r.tolerance = tolerance;
  r.note = c.source == "heuristic" ? "HEURISTIC constants" : "user constants";
  double worst = -std::numeric_limits<double>::infinity();
  nlohmann::json rows = nlohmann::json::array();
  for (double tau : taus) {
    const std::size_t k = kernel.nearest_slice(kernel.T - tau);
    const BoundIngredients ing = base_ingredients(history, kernel.times[k], kernel.T);
    const double bound = sobolev_kernel_bound(ing, c);
    const double sup = kernel.H[k].max();
    const double v = (sup - bound) / bound;
    if (v > worst) {
      worst = v;
      r.slice_time = kernel.times[k];
    }
    rows.push_back({{"pair", {ing.s, ing.t}}, {"bound", bound}, {"measured_sup_H", sup},
                    {"margin", bound - sup}, {"constants_source", c.source}});
  }
  r.max_violation = worst;
  r.pass = !taus.empty() && worst <= tolerance;
  r.details["pairs"] = rows;
  return r;
}

CheckReport uniform_kernel_bound_check(const FlowHistory& history,
                              const std::vector<KernelSolution>& kernels, double tolerance) {
  CheckReport r;
  r.check = "uniform_kernel_bound";
  r.tolerance = tolerance;
  const int n = history.dim();
  const double s0 = inf_s0(history);
  r.details["inf_S0"] = s0;
  if (n < 3 || !(s0 > 0.0)) {
    r.refused = true;
    r.pass = false;
    r.note = n < 3 ? "needs n >= 3" : "hypothesis inf S(0) > 0 fails: inf S(0) = " + std::to_string(s0);
    return r;
  }
  const double C = kernel_bound_constant(n);
  r.details["C_tilde"] = C;
  double worst = -std::numeric_limits<double>::infinity();
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& K : kernels) {
    for (std::size_t k = 0; k < K.taus.size(); ++k) {
      const double scaled = K.H[k].max() * std::pow(K.taus[k], 0.5 * n);
      if (scaled - C > worst) {
        worst = scaled - C;
        r.slice_time = K.times[k];
      }
      rows.push_back({{"tau", K.taus[k]}, {"scaled_sup_H", scaled}});
    }
  }
  r.max_violation = worst;
  r.pass = !kernels.empty() && worst <= tolerance;
  r.details["slices"] = rows;
  return r;
}

EnergySeries kernel_energy_forward(const FlowHistory& history, const ForwardSolution& u) {
  EnergySeries e;
  for (std::size_t k = 0; k < u.times.size(); ++k) {
    ScalarField sq = u.u[k];
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] *= sq[i];
    e.times.push_back(u.times[k]);
    e.values.push_back(integrate(sq, history.at(u.times[k]).metric));
  }
  return e;
}

EnergySeries kernel_energy_backward(const FlowHistory& history, const KernelSolution& kernel) {
  EnergySeries e;
  for (std::size_t k = 0; k < kernel.times.size(); ++k) {
    ScalarField sq = kernel.H[k];
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] *= sq[i];
    e.times.push_back(kernel.times[k]);
    e.values.push_back(integrate(sq, history.at(kernel.times[k]).metric));
  }
  return e;
}

void write_j_csv(const BoundIngredients& ing, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "t,J,chi_bound\n";
  for (std::size_t k = 0; k < ing.J.size(); ++k)
    out << ing.times[k] << ',' << ing.J[k] << ',' << std::pow(ing.chi(ing.times[k]), 0.5 * ing.n)
        << '\n';
}

}  // namespace rhflow
