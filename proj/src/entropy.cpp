#include "rhflow/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "rhflow/errors.hpp"
#include "rhflow/sobolev.hpp"

namespace rhflow {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

constexpr double kLogFloor = 1e-300;

// Discrete Laplacian and the per-point volume weights of one state.
struct Operator {
  const PeriodicGrid* grid = nullptr;
  SpMat stiffness;  // -diag(sqrt g) Delta, symmetric positive semidefinite (no cell volume)
  Vec weight;       // sqrt g * cell volume
  Vec S;
  int dim = 2;
};

Operator build_operator(const ReducedMetric& metric, const Profile& S) {
  const PeriodicGrid& g = metric.grid();
  const int N = g.points(0);
  const std::size_t rs = g.row_size();
  const auto size = static_cast<Eigen::Index>(g.size());
  const Profile sg = metric.sqrt_g();
  Profile q(N);
  for (int i = 0; i < N; ++i) q[i] = sg[i] / metric.a(0)[i];
  const auto bands = x1_operator_bands(sg, q, g.spacing(0));

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(g.size() * (7 + 5 * (g.dim() - 1)));
  const std::array<double, 5> fd{-1.0, 16.0, -30.0, 16.0, -1.0};
  for (int i = 0; i < N; ++i) {
    for (std::size_t c = 0; c < rs; ++c) {
      const auto row = static_cast<Eigen::Index>(i * rs + c);
      for (int o = -3; o <= 3; ++o) {
        const int ii = ((i + o) % N + N) % N;
        trip.emplace_back(row, static_cast<Eigen::Index>(ii * rs + c),
                          -sg[i] * bands[i * 7 + o + 3]);
      }
      const auto p = g.unflatten(row);
      for (int axis = 1; axis < g.dim(); ++axis) {
        const int n = g.points(axis);
        const double h = g.spacing(axis);
        const double scale = -sg[i] / (metric.a(axis)[i] * 12.0 * h * h);
        for (int o = -2; o <= 2; ++o) {
          auto r = p;
          r[axis] = ((p[axis] + o) % n + n) % n;
          trip.emplace_back(row, static_cast<Eigen::Index>(g.index(r[0], r[1], r[2])),
                            scale * fd[o + 2]);
        }
      }
    }
  }
  Operator op;
  op.grid = &metric.grid();
  op.dim = g.dim();
  op.stiffness.resize(size, size);
  op.stiffness.setFromTriplets(trip.begin(), trip.end());
  op.weight.resize(size);
  op.S.resize(size);
  const double cell = g.cell_volume();
  for (int i = 0; i < N; ++i)
    for (std::size_t c = 0; c < rs; ++c) {
      op.weight[i * rs + c] = sg[i] * cell;
      op.S[i * rs + c] = S[i];
    }
  return op;
}

double log_sq(double w) { return std::log(std::max(w * w, kLogFloor)); }

double norm_sq(const Operator& op, const Vec& w) { return op.weight.dot(w.cwiseProduct(w)); }

// lambda = int (w A w - w^2 ln w^2) dmu with A = -4 tau Delta + tau S; mu
// follows by subtracting n + (n/2) ln(4 pi tau).
double functional(const Operator& op, double tau, const Vec& w) {
  double acc = 4.0 * tau * op.grid->cell_volume() * w.dot(op.stiffness * w);
  for (Eigen::Index i = 0; i < w.size(); ++i)
    acc += op.weight[i] * w[i] * w[i] * (tau * op.S[i] - log_sq(w[i]));
  return acc;
}

double mu_offset(int n, double tau) {
  return n + 0.5 * n * std::log(4.0 * std::numbers::pi * tau);
}

// sup |(A w)/w - ln w^2 - lambda| where w^2 > floor.
double el_residual(const Operator& op, double tau, const Vec& w, double lambda, double floor) {
  const Vec Kw = op.stiffness * w;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w[i] * w[i] <= floor) continue;
    const double Aw = 4.0 * tau * Kw[i] / op.weight[i] * op.grid->cell_volume() + tau * op.S[i] * w[i];
    worst = std::max(worst, std::abs(Aw / w[i] - log_sq(w[i]) - lambda));
  }
  return worst;
}

void normalize(const Operator& op, Vec& w) { w /= std::sqrt(norm_sq(op, w)); }

struct Descent {
  Vec w;
  double lambda = 0.0;
  double residual = 0.0;
  int iterations = 0;
};

Descent descend(const Operator& op, double tau, Vec w, int max_steps, const MuOptions& opts) {
  normalize(op, w);
  const Eigen::Index size = w.size();
  const double cell = op.grid->cell_volume();
  double lambda = functional(op, tau, w);
  double dt = opts.initial_step;
  const double dt_max = opts.initial_step;
  Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(1e-13);
  cg.setMaxIterations(2000);
  Descent out;
  int stalls = 0;
  int it = 0;
  double residual = el_residual(op, tau, w, lambda, opts.support_floor);
  for (; it < max_steps; ++it) {
    if (residual < 0.01 * opts.residual_threshold) break;
    Vec diag(size);
    double shift = 0.0;
    for (Eigen::Index i = 0; i < size; ++i) {
      diag[i] = tau * op.S[i] - log_sq(w[i]);
      shift = std::max(shift, -diag[i]);
    }
    bool accepted = false;
    while (dt > 1e-10) {
      SpMat M = op.stiffness * (4.0 * tau * dt * cell);
      Vec d(size);
      for (Eigen::Index i = 0; i < size; ++i)
        d[i] = op.weight[i] * (1.0 + dt * (diag[i] + shift));
      M.diagonal() += d;
      cg.compute(M);
      Vec next = cg.solveWithGuess(op.weight.cwiseProduct(w), w);
      normalize(op, next);
      const double candidate = functional(op, tau, next);
      if (std::isfinite(candidate) && candidate <= lambda + 1e-14 * std::abs(lambda)) {
        stalls = (lambda - candidate < 1e-13 * std::max(1.0, std::abs(lambda))) ? stalls + 1 : 0;
        w = std::move(next);
        lambda = candidate;
        accepted = true;
        dt = std::min(2.0 * dt, dt_max);
        break;
      }
      dt *= 0.5;
    }
    residual = el_residual(op, tau, w, lambda, opts.support_floor);
    if (!accepted || stalls >= 5) break;
  }
  out.w = std::move(w);
  out.lambda = lambda;
  out.residual = residual;
  out.iterations = it;
  return out;
}

Vec gaussian_start(const ReducedMetric& metric, double tau, int center_x1) {
  const PeriodicGrid& g = metric.grid();
  Vec w(static_cast<Eigen::Index>(g.size()));
  for (std::size_t idx = 0; idx < g.size(); ++idx) {
    const auto p = g.unflatten(idx);
    double d2 = 0.0;
    for (int axis = 0; axis < g.dim(); ++axis) {
      const int n = g.points(axis);
      int m = p[axis] - (axis == 0 ? center_x1 : 0);
      m = ((m % n) + n) % n;
      if (m > n / 2) m -= n;
      const double dx = m * g.spacing(axis);
      d2 += metric.a(axis)[center_x1] * dx * dx;
    }
    w[static_cast<Eigen::Index>(idx)] = std::exp(-d2 / (8.0 * tau));
  }
  return w;
}

// Pointwise EL residual (A w)/w - ln w^2 - lambda with w = exp(u), on the
// active points only.
Vec el_log(const Operator& op, double tau, const Vec& w, const std::vector<Eigen::Index>& active,
           double lambda, Vec* q_out) {
  const double cell = op.grid->cell_volume();
  const Vec Kw = op.stiffness * w;
  const auto m = static_cast<Eigen::Index>(active.size());
  Vec r(m), q(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    const auto i = active[a];
    q[a] = 4.0 * tau * cell * Kw[i] / (op.weight[i] * w[i]) + tau * op.S[i];
    r[a] = q[a] - log_sq(w[i]) - lambda;
  }
  if (q_out) *q_out = std::move(q);
  return r;
}

// Newton on the EL system in u = ln w over the points where w is not
// negligible; the far tail is held fixed. In u the Gaussian tails stay well
// conditioned. The symmetry directions leave an exact null mode, which a
// small diagonal shift keeps out of the factorisation.
void newton_polish(const Operator& op, double tau, Descent& d, const MuOptions& opts) {
  const Eigen::Index size = d.w.size();
  const double cell = op.grid->cell_volume();
  Vec w = d.w;
  const double wmax2 = w.cwiseAbs2().maxCoeff();
  std::vector<Eigen::Index> active;
  std::vector<Eigen::Index> slot(size, -1);
  for (Eigen::Index i = 0; i < size; ++i)
    if (w[i] > 0.0 && w[i] * w[i] > 1e-2 * opts.support_floor * wmax2) {
      slot[i] = static_cast<Eigen::Index>(active.size());
      active.push_back(i);
    }
  const auto m = static_cast<Eigen::Index>(active.size());
  double lambda = d.lambda;
  auto merit = [&](const Vec& r, double c) {
    double acc = c * c;
    for (Eigen::Index a = 0; a < m; ++a) acc += op.weight[active[a]] * r[a] * r[a];
    return std::sqrt(acc);
  };
  Vec q;
  Vec r = el_log(op, tau, w, active, lambda, &q);
  double c = norm_sq(op, w) - 1.0;
  double mer = merit(r, c);
  Eigen::SparseLU<SpMat> lu;
  bool analysed = false;
  int short_steps = 0;
  for (int it = 0; it < 40 && short_steps < 3; ++it) {
    // J du = e^{-u} A (e^u du) - (q - tau S) du - 2 du - dlambda
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(m) * 24);
    for (Eigen::Index a = 0; a < m; ++a) {
      const auto i = active[a];
      for (SpMat::InnerIterator e(op.stiffness, i); e; ++e) {
        // stiffness is symmetric, so column i lists row i's entries.
        const auto j = e.row();
        if (slot[j] < 0) continue;
        trip.emplace_back(a, slot[j], 4.0 * tau * cell * e.value() * w[j] / (op.weight[i] * w[i]));
      }
      trip.emplace_back(a, a, -(q[a] - tau * op.S[i]) - 2.0 - 1e-8);
      trip.emplace_back(a, m, -1.0);
      trip.emplace_back(m, a, 2.0 * op.weight[i] * w[i] * w[i]);
    }
    SpMat J(m + 1, m + 1);
    J.setFromTriplets(trip.begin(), trip.end());
    if (!analysed) {
      lu.analyzePattern(J);
      analysed = true;
    }
    lu.factorize(J);
    if (lu.info() != Eigen::Success) break;
    Vec rhs(m + 1);
    rhs.head(m) = -r;
    rhs[m] = -c;
    const Vec delta = lu.solve(rhs);
    if (!delta.allFinite()) break;
    double step = 1.0;
    bool improved = false;
    while (step > 1e-3) {
      Vec wn = w;
      for (Eigen::Index a = 0; a < m; ++a) wn[active[a]] *= std::exp(step * delta[a]);
      const double ln = lambda + step * delta[m];
      Vec qn;
      const Vec rn = el_log(op, tau, wn, active, ln, &qn);
      const double cn = norm_sq(op, wn) - 1.0;
      const double mn = merit(rn, cn);
      if (std::isfinite(mn) && mn < mer) {
        w = std::move(wn);
        lambda = ln;
        r = rn;
        q = qn;
        c = cn;
        mer = mn;
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;
    short_steps = step < 0.0625 ? short_steps + 1 : 0;
    ++d.iterations;
    if (el_residual(op, tau, w, lambda, opts.support_floor) < 0.01 * opts.residual_threshold &&
        std::abs(c) < 1e-12)
      break;
  }
  normalize(op, w);
  d.w = w;
  d.lambda = functional(op, tau, w);
  d.residual = el_residual(op, tau, w, d.lambda, opts.support_floor);
}

ScalarField to_field(const PeriodicGrid& g, const Vec& v) {
  return ScalarField(g, std::vector<double>(v.data(), v.data() + v.size()));
}

Profile s_profile(const FlowState& state, double alpha) {
  return coupled_quantities(state.metric, state.map, alpha).S;
}

}  // namespace

EntropyProbe make_probe(const ReducedMetric& metric, double tau, ScalarField f) {
  if (!(tau > 0.0)) throw std::invalid_argument("entropy: tau must be positive");
  const int n = metric.dim();
  const double pref = std::pow(4.0 * std::numbers::pi * tau, -0.5 * n);
  // Shift by the minimum first to keep exp() in range.
  const double fmin = f.min();
  ScalarField u(f.grid());
  for (std::size_t i = 0; i < f.size(); ++i) u[i] = pref * std::exp(-(f[i] - fmin));
  const double c = integrate(u, metric);
  // pref int e^{-(f + s)} = 1
  const double shift = std::log(c) - fmin;
  for (std::size_t i = 0; i < f.size(); ++i) f[i] += shift;
  EntropyProbe p;
  p.tau = tau;
  p.w = ScalarField(f.grid());
  for (std::size_t i = 0; i < f.size(); ++i) {
    u[i] = pref * std::exp(-f[i]);
    p.w[i] = std::sqrt(u[i]);
  }
  p.constraint = integrate(u, metric);
  p.f = std::move(f);
  return p;
}

double w_alpha(const FlowState& state, double alpha, double tau, const ScalarField& f) {
  const EntropyProbe p = make_probe(state.metric, tau, f);
  const Operator op = build_operator(state.metric, s_profile(state, alpha));
  const Vec w = Eigen::Map<const Vec>(p.w.values().data(), static_cast<Eigen::Index>(p.w.size()));
  return functional(op, tau, w) - mu_offset(state.metric.dim(), tau);
}

MuResult minimize_mu(const FlowState& state, double alpha, double tau, const MuOptions& opts) {
  if (!(tau > 0.0)) throw std::invalid_argument("minimize_mu: tau must be positive");
  const ReducedMetric& metric = state.metric;
  const PeriodicGrid& g = metric.grid();
  const Profile S = s_profile(state, alpha);
  const Operator op = build_operator(metric, S);
  const int N = g.points(0);

  std::vector<Vec> starts;
  starts.emplace_back(Vec::Ones(static_cast<Eigen::Index>(g.size())));
  // Scan Gaussian centres along x1 and start from the best local minima of
  // the scan; translation along x1 is the slowest mode of the descent.
  std::vector<double> scan(N);
  for (int c = 0; c < N; ++c) {
    Vec w = gaussian_start(metric, tau, c);
    normalize(op, w);
    scan[c] = functional(op, tau, w);
  }
  std::vector<int> centers;
  for (int c = 0; c < N; ++c)
    if (scan[c] <= scan[(c + N - 1) % N] && scan[c] <= scan[(c + 1) % N]) centers.push_back(c);
  std::sort(centers.begin(), centers.end(), [&](int a, int b) { return scan[a] < scan[b]; });
  if (centers.size() > 3) centers.resize(3);
  for (int c : centers) starts.push_back(gaussian_start(metric, tau, c));

  MuResult best;
  best.mu = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < starts.size(); ++s) {
    // Alternate short descents with Newton polishing.
    Descent d;
    d.w = starts[s];
    int used = 0;
    while (used < opts.max_iterations) {
      const int chunk = std::min(opts.descent_chunk, opts.max_iterations - used);
      Descent next = descend(op, tau, d.w, chunk, opts);
      next.iterations += d.iterations;
      used += chunk;
      d = std::move(next);
      if (d.residual < 0.01 * opts.residual_threshold) break;
      Descent polished = d;
      newton_polish(op, tau, polished, opts);
      // Keep the polished point only if it did not climb to another critical point.
      if (polished.residual < d.residual && polished.lambda <= d.lambda + 1e-9) d = polished;
      if (d.residual < 0.01 * opts.residual_threshold) break;
    }
    const double mu = d.lambda - mu_offset(g.dim(), tau);
    const bool better = mu < best.mu - 1e-12 ||
                        (std::abs(mu - best.mu) <= 1e-12 && d.residual < best.el_residual);
    if (better) {
      best.mu = mu;
      best.tau = tau;
      best.el_residual = d.residual;
      best.iterations = d.iterations;
      best.start = static_cast<int>(s);
      best.w = to_field(g, d.w);
    }
  }
  best.converged = best.el_residual < opts.residual_threshold;
  const double off = 0.5 * g.dim() * std::log(4.0 * std::numbers::pi * tau);
  best.f = ScalarField(g);
  for (std::size_t i = 0; i < g.size(); ++i) best.f[i] = -log_sq(best.w[i]) - off;
  return best;
}

std::vector<double> log_tau_grid(double tau_min, double tau_max, int count) {
  if (!(tau_min > 0.0) || !(tau_max > tau_min) || count < 2)
    throw std::invalid_argument("log_tau_grid: need 0 < tau_min < tau_max and count >= 2");
  std::vector<double> out(count);
  const double r = std::log(tau_max / tau_min) / (count - 1);
  for (int k = 0; k < count; ++k) out[k] = tau_min * std::exp(r * k);
  out.back() = tau_max;
  return out;
}

MuCurve mu_curve(const FlowHistory& history, const std::vector<double>& taus,
                 const MuOptions& opts) {
  const FlowState& s0 = history.snapshots().front();
  const double alpha = history.schedule().alpha(s0.t);
  MuCurve c;
  c.dim = history.dim();
  c.taus = taus;
  std::sort(c.taus.begin(), c.taus.end());
  double mu_min = std::numeric_limits<double>::infinity();
  for (double tau : c.taus) {
    c.values.push_back(minimize_mu(s0, alpha, tau, opts));
    mu_min = std::min(mu_min, c.values.back().mu);
  }
  c.B = -mu_min;
  const Profile S = s_profile(s0, alpha);
  c.D_sobolev = *std::min_element(S.begin(), S.end());
  c.D_kernel = std::min(0.0, c.D_sobolev);
  if (c.taus.size() > 1) c.log_spacing = std::log(c.taus[1] / c.taus[0]);
  return c;
}

CheckReport mu_monotonicity(const FlowHistory& history, double tau_terminal, double tolerance,
                            int snapshots, const MuOptions& opts) {
  CheckReport r;
  r.check = "mu_monotonicity";
  r.tolerance = tolerance;
  if (!history.schedule().is_constant()) {
    r.refused = true;
    r.note = "coupling schedule is not constant; monotonicity of mu assumes constant alpha";
    return r;
  }
  if (!(tau_terminal > 0.0) || snapshots < 2)
    throw std::invalid_argument("mu_monotonicity: need tau_terminal > 0 and two snapshots");
  const double T = history.terminal_time();
  const double t0 = history.snapshots().front().t;
  const double alpha = history.schedule().alpha(t0);
  nlohmann::json series = nlohmann::json::array();
  double prev = -std::numeric_limits<double>::infinity();
  double worst_drop = 0.0, worst_res = 0.0;
  for (int k = 0; k < snapshots; ++k) {
    const double t = t0 + (T - t0) * k / (snapshots - 1);
    const double tau = tau_terminal + (T - t);
    const MuResult m = minimize_mu(history.at(t), alpha, tau, opts);
    if (k > 0 && prev - m.mu > worst_drop) {
      worst_drop = prev - m.mu;
      r.slice_time = t;
    }
    worst_res = std::max(worst_res, m.el_residual);
    prev = m.mu;
    series.push_back({{"t", t}, {"tau", tau}, {"mu", m.mu}, {"el_residual", m.el_residual},
                      {"iterations", m.iterations}});
  }
  r.max_violation = worst_drop;
  r.pass = worst_drop <= tolerance && worst_res < opts.residual_threshold;
  r.details["series"] = series;
  r.details["max_el_residual"] = worst_res;
  return r;
}

CheckReport mu_certificates(const MuCurve& curve, double threshold) {
  CheckReport r;
  r.check = "mu_el_certificates";
  r.tolerance = threshold;
  double worst = 0.0;
  for (const auto& v : curve.values) worst = std::max(worst, v.el_residual);
  r.max_violation = worst;
  r.pass = worst < threshold;
  return r;
}

CheckReport mu_small_tau_trend(const MuCurve& curve, double tolerance) {
  CheckReport r;
  r.check = "mu_small_tau_trend";
  r.tolerance = tolerance;
  double worst = 0.0;
  nlohmann::json series = nlohmann::json::array();
  for (std::size_t k = 0; k < curve.values.size(); ++k) {
    const double mu = curve.values[k].mu;
    worst = std::max(worst, mu);  // mu must not be positive
    // |mu| shrinks as tau decreases.
    if (k + 1 < curve.values.size())
      worst = std::max(worst, std::abs(mu) - std::abs(curve.values[k + 1].mu));
    series.push_back({{"tau", curve.taus[k]}, {"mu", mu}});
  }
  r.max_violation = worst;
  r.pass = !curve.values.empty() && worst <= tolerance;
  r.details["series"] = series;
  r.details["log_spacing"] = curve.log_spacing;
  return r;
}

CheckReport kernel_upper_bound_check(const KernelSolution& kernel, const MuCurve& curve,
                                     double tolerance) {
  CheckReport r;
  r.check = "kernel_upper_bound";
  r.tolerance = tolerance;
  const int n = kernel.dim;
  const double D = curve.D_kernel;
  double worst = -std::numeric_limits<double>::infinity();
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t k = 0; k < kernel.slices(); ++k) {
    const double tau = kernel.taus[k];
    const auto mask = kernel.mask(k);
    double hmax = 0.0;
    for (std::size_t i = 0; i < kernel.H[k].size(); ++i)
      if (mask[i]) hmax = std::max(hmax, kernel.H[k][i]);
    const double scaled = hmax * std::pow(4.0 * std::numbers::pi * tau, 0.5 * n);
    const double bound = std::exp(curve.B - tau * D / 3.0);
    const double v = scaled / bound - 1.0;
    if (v > worst) {
      worst = v;
      r.slice_time = kernel.times[k];
    }
    rows.push_back({{"tau", tau}, {"scaled_sup_H", scaled}, {"bound", bound}});
  }
  r.max_violation = worst;
  r.pass = worst <= tolerance;
  r.details["B"] = curve.B;
  r.details["D_kernel"] = curve.D_kernel;
  r.details["D_sobolev"] = curve.D_sobolev;
  r.details["slices"] = rows;
  return r;
}

CheckReport entropy_sobolev_inequality(const MuCurve& curve, double tolerance) {
  CheckReport r;
  r.check = "entropy_sobolev_inequality";
  r.tolerance = tolerance;
  r.details["inf_S0"] = curve.D_sobolev;
  if (curve.dim < 3) {
    r.refused = true;
    r.note = "requires n >= 3";
    return r;
  }
  if (!(curve.D_sobolev > 0.0)) {
    r.refused = true;
    r.note = "requires inf S(0) > 0; measured " + std::to_string(curve.D_sobolev);
    return r;
  }
  const double logc = std::log(std::pow(4.0 * std::numbers::pi, 0.5 * curve.dim) *
                               kernel_bound_constant(curve.dim));
  double worst = -std::numeric_limits<double>::infinity();
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t k = 0; k < curve.values.size(); ++k) {
    const double rhs = curve.taus[k] * curve.D_sobolev / 3.0 * logc;
    const double margin = curve.values[k].mu - rhs;
    worst = std::max(worst, -margin);
    rows.push_back({{"tau", curve.taus[k]}, {"mu", curve.values[k].mu}, {"rhs", rhs},
                    {"margin", margin}});
  }
  r.max_violation = worst;
  r.pass = worst <= tolerance;
  r.details["rows"] = rows;
  return r;
}

void write_mu_csv(const MuCurve& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "tau,mu,el_residual,iterations\n";
  for (std::size_t k = 0; k < curve.values.size(); ++k)
    out << curve.taus[k] << ',' << curve.values[k].mu << ',' << curve.values[k].el_residual << ','
        << curve.values[k].iterations << '\n';
}

}  // namespace rhflow
