#include "rhflow/heat.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>

#include "rhflow/banded.hpp"
#include "rhflow/errors.hpp"
#include "rhflow/field_io.hpp"

namespace rhflow {

std::size_t KernelSolution::nearest_slice(double t) const {
  std::size_t best = 0;
  for (std::size_t k = 1; k < times.size(); ++k)
    if (std::abs(times[k] - t) < std::abs(times[best] - t)) best = k;
  return best;
}

ScalarField KernelSolution::h(std::size_t k) const {
  const ScalarField& Hk = H[k];
  const auto m = mask(k);
  ScalarField out(Hk.grid());
  const double shift = 0.5 * dim * std::log(4.0 * std::numbers::pi * taus[k]);
  for (std::size_t p = 0; p < Hk.size(); ++p)
    out[p] = m[p] ? -std::log(Hk[p]) - shift : std::numeric_limits<double>::infinity();
  return out;
}

std::vector<char> KernelSolution::mask(std::size_t k) const {
  const ScalarField& Hk = H[k];
  const double thr = 1e-12 * Hk.max();
  std::vector<char> m(Hk.size());
  for (std::size_t p = 0; p < Hk.size(); ++p) m[p] = Hk[p] >= thr && Hk[p] > 0.0;
  return m;
}

double KernelSolution::masked_fraction(std::size_t k) const {
  const auto m = mask(k);
  const auto kept = std::count(m.begin(), m.end(), 1);
  return 1.0 - static_cast<double>(kept) / static_cast<double>(m.size());
}

std::size_t ForwardSolution::nearest_slice(double t) const {
  std::size_t best = 0;
  for (std::size_t k = 1; k < times.size(); ++k)
    if (std::abs(times[k] - t) < std::abs(times[best] - t)) best = k;
  return best;
}

double integrate(const ScalarField& f, const ReducedMetric& metric) {
  const Profile w = metric.sqrt_g();
  return integrate(f, std::span<const double>(w));
}

double minimum_tau0(const PeriodicGrid& grid) {
  const double h = grid.spacing(0);
  return std::max(4.0 * h * h, 1e-3);
}

ScalarField gaussian_seed(const ReducedMetric& metric, std::array<int, 3> center, double tau0,
                          double exact_radius_factor) {
  const int n = metric.dim();
  const ScalarField d = geodesic_distance(metric, center, exact_radius_factor * std::sqrt(tau0));
  ScalarField out(metric.grid());
  const double norm = std::pow(4.0 * std::numbers::pi * tau0, -0.5 * n);
  for (std::size_t p = 0; p < d.size(); ++p) out[p] = norm * std::exp(-d[p] * d[p] / (4.0 * tau0));
  out *= 1.0 / integrate(out, metric);
  return out;
}

namespace {

// Everything the mode solver needs from the geometry at one flow time.
struct OperatorAt {
  Profile w;
  std::vector<double> bands;        // x1 operator, 7 entries per row
  std::vector<Profile> inv_a;       // 1/a_j for the symmetry axes
  Profile potential;                // S or zero
};

OperatorAt operator_at(const FlowHistory& history, double t, bool with_potential) {
  const FlowState st = history.at(t);
  const ReducedMetric& m = st.metric;
  OperatorAt op;
  op.w = m.sqrt_g();
  Profile q(op.w.size());
  for (std::size_t x = 0; x < q.size(); ++x) q[x] = op.w[x] / m.a(0)[x];
  op.bands = x1_operator_bands(op.w, q, m.grid().spacing(0));
  op.inv_a.assign(m.dim(), Profile());
  for (int a = 1; a < m.dim(); ++a) {
    op.inv_a[a] = m.a(a);
    for (double& v : op.inv_a[a]) v = 1.0 / v;
  }
  if (with_potential)
    op.potential = coupled_quantities(m, st.map, history.schedule().alpha(t)).S;
  else
    op.potential.assign(op.w.size(), 0.0);
  return op;
}

// Crank-Nicolson in Fourier space along the symmetry axes; every group of
// modes sharing |k| shares one banded factorisation per step.
class ModeEngine {
 public:
  ModeEngine(const PeriodicGrid& grid)
      : grid_(grid), tr_(grid, grid.dim() == 3 ? std::vector<int>{1, 2} : std::vector<int>{1}) {
    const int n2 = grid.points(1), n3 = grid.points(2);
    std::map<std::pair<int, int>, std::size_t> key_to_group;
    for (int j = 0; j < n2; ++j)
      for (int k = 0; k < n3; ++k) {
        const std::pair<int, int> key{std::min(j, n2 - j), std::min(k, n3 - k)};
        auto it = key_to_group.find(key);
        if (it == key_to_group.end()) {
          it = key_to_group.emplace(key, groups_.size()).first;
          groups_.emplace_back();
          const double k2 = tr_.wavenumber(1, j);
          const double k3 = grid.dim() == 3 ? tr_.wavenumber(2, k) : 0.0;
          wave_sq_.push_back({k2 * k2, k3 * k3});
        }
        groups_[it->second].push_back(static_cast<std::size_t>(j) * n3 + k);
      }
  }

  void load(const ScalarField& f) { coeffs_ = tr_.forward(f).coefficients; }

  ScalarField field() const {
    ModeStack ms{grid_, coeffs_};
    return tr_.inverse(ms);
  }

  void step(const OperatorAt& a0, const OperatorAt& a1, double dt) {
    const int N = grid_.points(0);
    const std::size_t rs = grid_.row_size();
    std::vector<double> m(static_cast<std::size_t>(N) * 7);
    std::vector<std::complex<double>> col(N), rhs(N);
    for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
      const auto kappa0 = kappa(a0, gi);
      const auto kappa1 = kappa(a1, gi);
      for (int i = 0; i < N; ++i)
        for (int o = -3; o <= 3; ++o) {
          double v = -0.5 * dt * a1.bands[i * 7 + o + 3];
          if (o == 0) v += 1.0 + 0.5 * dt * kappa1[i];
          m[i * 7 + o + 3] = a1.w[i] * v;
        }
      CyclicBandedSolver solver(N, 3, m);
      for (std::size_t mode : groups_[gi]) {
        for (int i = 0; i < N; ++i) col[i] = coeffs_[i * rs + mode];
        for (int i = 0; i < N; ++i) {
          std::complex<double> acc = -kappa0[i] * col[i];
          for (int o = -3; o <= 3; ++o) acc += a0.bands[i * 7 + o + 3] * col[((i + o) % N + N) % N];
          rhs[i] = a1.w[i] * (col[i] + 0.5 * dt * acc);
        }
        solver.solve(std::span<std::complex<double>>(rhs));
        for (int i = 0; i < N; ++i) coeffs_[i * rs + mode] = rhs[i];
      }
    }
  }

 private:
  Profile kappa(const OperatorAt& a, std::size_t gi) const {
    Profile k = a.potential;
    for (std::size_t i = 0; i < k.size(); ++i) {
      k[i] += wave_sq_[gi][0] * a.inv_a[1][i];
      if (grid_.dim() == 3) k[i] += wave_sq_[gi][1] * a.inv_a[2][i];
    }
    return k;
  }

  PeriodicGrid grid_;
  ModeTransform tr_;
  std::vector<std::vector<std::size_t>> groups_;
  std::vector<std::array<double, 2>> wave_sq_;
  std::vector<std::complex<double>> coeffs_;
};

}  // namespace

ForwardSolution solve_forward(const FlowHistory& history, const ScalarField& initial, double s,
                              double t_end, const HeatOptions& opts) {
  const double T = history.terminal_time();
  if (!(s < t_end) || s < 0.0 || t_end > T + 1e-12)
    throw std::out_of_range("forward solve: time range outside the flow history");
  if (!(initial.grid() == history.grid())) throw std::invalid_argument("forward solve: grid mismatch");
  const long steps = std::max(1L, static_cast<long>(std::ceil((t_end - s) / opts.dt - 1e-9)));
  const double dt = (t_end - s) / static_cast<double>(steps);
  ModeEngine eng(initial.grid());
  eng.load(initial);
  ForwardSolution out;
  out.s = s;
  out.times.push_back(s);
  out.u.push_back(initial);
  OperatorAt prev = operator_at(history, s, false);
  for (long k = 1; k <= steps; ++k) {
    const double t = s + k * dt;
    OperatorAt next = operator_at(history, std::min(t, T), false);
    eng.step(prev, next, dt);
    prev = std::move(next);
    if (k % opts.slice_every == 0 || k == steps) {
      ScalarField u = eng.field();
      if (!u.all_finite()) throw NumericalFailure("forward heat solve produced non-finite values", t);
      out.times.push_back(t);
      out.u.push_back(std::move(u));
    }
  }
  return out;
}

std::vector<double> conjugate_tau_nodes(double tau0, double tau_end, const HeatOptions& opts) {
  const double dt = opts.dt;
  std::vector<double> uniform;  // descending from tau_end
  const double floor_tau = std::max(opts.grading_tau, tau0);
  for (long j = 0;; ++j) {
    const double u = tau_end - j * dt;
    if (u < floor_tau - 1e-12) break;
    uniform.push_back(u);
  }
  std::vector<double> nodes{tau0};
  if (uniform.empty()) uniform.push_back(tau_end);
  const double tau_u = uniform.back();
  if (opts.grading_tau > tau0 && tau_u > tau0 * (1.0 + 1e-12)) {
    const double ratio_cap = 1.0 + dt / opts.grading_tau;
    const long m = std::max(1L, static_cast<long>(std::ceil(std::log(tau_u / tau0) / std::log(ratio_cap) - 1e-9)));
    const double r = std::pow(tau_u / tau0, 1.0 / static_cast<double>(m));
    for (long j = 1; j < m; ++j) nodes.push_back(tau0 * std::pow(r, static_cast<double>(j)));
  } else if (tau_u - tau0 < 0.25 * dt && uniform.size() > 1) {
    uniform.pop_back();  // merge a sliver step into its neighbour
  }
  for (auto it = uniform.rbegin(); it != uniform.rend(); ++it)
    if (*it > nodes.back() + 1e-14) nodes.push_back(*it);
  return nodes;
}

namespace {

Profile resample(const Profile& p, double length, int factor) {
  const PeriodicSpline sp(std::span<const double>(p), length);
  const double h = length / static_cast<double>(p.size() * factor);
  Profile out(p.size() * factor);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sp(i * h);
  return out;
}

// History on a grid refined by `factor`, restricted to [t_from, t_to].
FlowHistory refined_history(const FlowHistory& history, int factor, double t_from, double t_to) {
  const PeriodicGrid fine = history.grid().refined(factor);
  const double L = history.grid().length(0);
  std::vector<double> times{t_from};
  for (const auto& s : history.snapshots())
    if (s.t > t_from + 1e-12 && s.t < t_to - 1e-12) times.push_back(s.t);
  times.push_back(t_to);
  std::vector<FlowState> snaps;
  for (double t : times) {
    const FlowState st = history.at(t);
    std::vector<Profile> a;
    for (const auto& c : st.metric.coefficients()) a.push_back(resample(c, L, factor));
    snaps.push_back(FlowState{t, ReducedMetric(fine, std::move(a)), ScalarMap{resample(st.map.phi, L, factor)}});
  }
  return FlowHistory(std::move(snaps), history.schedule());
}

}  // namespace

KernelSolution solve_conjugate(const FlowHistory& history, std::array<int, 3> center, double T,
                               double tau0, const HeatOptions& opts) {
  const PeriodicGrid& grid = history.grid();
  if (tau0 < minimum_tau0(grid) * (1.0 - 1e-12))
    throw PreconditionViolated("seed width below the grid floor max(4 h1^2, 1e-3)");
  if (T > history.terminal_time() + 1e-12 || T - opts.t_min < 4.0 * tau0 * (1.0 - 1e-9) || opts.t_min < 0.0)
    throw PreconditionViolated("conjugate solve needs T - t_min >= 4 tau0 inside the history");
  const int n = grid.dim();
  KernelSolution out;
  out.center = center;
  out.T = T;
  out.tau0 = tau0;
  out.dim = n;

  const double t_seed = T - tau0;
  ScalarField seed;
  const double tau_fine = 0.25 * tau0;
  const PeriodicGrid fine = grid.refined(2);
  if (opts.seed_levels > 0 && tau_fine >= minimum_tau0(fine) * (1.0 - 1e-12)) {
    // Grow the seed from a quarter of its width on a twice finer grid, then
    // keep every other point.
    const FlowHistory fh = refined_history(history, 2, t_seed, T);
    HeatOptions fo = opts;
    fo.seed_levels = opts.seed_levels - 1;
    fo.t_min = t_seed;
    fo.dt = 0.5 * opts.dt;
    fo.grading_tau = opts.grading_tau;
    fo.slice_every = 1 << 30;
    const std::array<int, 3> fc{2 * center[0], n > 1 ? 2 * center[1] : 0, n > 2 ? 2 * center[2] : 0};
    const KernelSolution inner = solve_conjugate(fh, fc, T, tau_fine, fo);
    out.seed_levels = inner.seed_levels + 1;
    const ScalarField& Hf = inner.H.back();
    seed = ScalarField(grid);
    for (std::size_t p = 0; p < seed.size(); ++p) {
      const auto ix = grid.unflatten(p);
      seed[p] = Hf.at(2 * ix[0], 2 * ix[1], n > 2 ? 2 * ix[2] : 0);
    }
  } else {
    seed = gaussian_seed(history.at(T).metric, center, tau0, opts.exact_radius_factor);
  }
  // Unit mass on the seed slice.
  seed *= 1.0 / integrate(seed, history.at(t_seed).metric);

  const std::vector<double> nodes = conjugate_tau_nodes(tau0, T - opts.t_min, opts);

  ModeEngine eng(grid);
  eng.load(seed);
  auto record = [&](double tau, ScalarField H) {
    const double t = T - tau;
    if (!H.all_finite()) throw NumericalFailure("conjugate solve produced non-finite values", t);
    const double mass = integrate(H, history.at(t).metric);
    if (std::abs(mass - 1.0) > opts.mass_abort)
      throw NumericalFailure("conjugate mass drifted to " + std::to_string(mass), t);
    out.times.push_back(t);
    out.taus.push_back(tau);
    out.mass.push_back(mass);
    out.H.push_back(std::move(H));
  };
  record(tau0, seed);
  OperatorAt prev = operator_at(history, t_seed, true);
  const std::size_t last = nodes.size() - 1;
  for (std::size_t k = 1; k <= last; ++k) {
    const double tau = nodes[k];
    OperatorAt next = operator_at(history, std::max(T - tau, 0.0), true);
    eng.step(prev, next, tau - nodes[k - 1]);
    prev = std::move(next);
    // count from the far end so slice times sit on t_min + multiples of the step
    if ((last - k) % opts.slice_every == 0) record(tau, eng.field());
  }
  return out;
}

ScalarField solve_conjugate_explicit(const FlowHistory& history, std::array<int, 3> center,
                                     double T, double tau0, double tau_end) {
  const PeriodicGrid& grid = history.grid();
  ScalarField H = gaussian_seed(history.at(T).metric, center, tau0);
  H *= 1.0 / integrate(H, history.at(T - tau0).metric);
  double hmin = grid.spacing(0);
  for (int a = 1; a < grid.dim(); ++a) hmin = std::min(hmin, grid.spacing(a));
  const double amin = history.at(T).metric.min_coefficient();
  const long steps = static_cast<long>(std::ceil((tau_end - tau0) / (0.05 * hmin * hmin * amin)));
  const double dt = (tau_end - tau0) / static_cast<double>(steps);
  auto rate = [&](const ScalarField& f, double tau) {
    const FlowState st = history.at(T - tau);
    const auto S = coupled_quantities(st.metric, st.map, history.schedule().alpha(T - tau)).S;
    ScalarField r = laplacian(st.metric, f);
    const std::size_t rs = grid.row_size();
    for (int i = 0; i < grid.points(0); ++i)
      for (std::size_t c = 0; c < rs; ++c) r[i * rs + c] -= S[i] * f[i * rs + c];
    return r;
  };
  for (long k = 0; k < steps; ++k) {
    const double tau = tau0 + k * dt;
    const ScalarField k1 = rate(H, tau);
    const ScalarField k2 = rate(H + k1 * (0.5 * dt), tau + 0.5 * dt);
    const ScalarField k3 = rate(H + k2 * (0.5 * dt), tau + 0.5 * dt);
    const ScalarField k4 = rate(H + k3 * dt, tau + dt);
    H += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
  }
  return H;
}

namespace {

double value_at(const ScalarField& f, std::array<int, 3> p) { return f.at(p[0], p[1], p[2]); }

}  // namespace

CheckReport kernel_properties(const FlowHistory& history, const KernelSolution& kernel,
                              const std::vector<KernelPropertySample>& samples,
                              double tau0_forward, double semigroup_tol, double duality_tol,
                              const HeatOptions& opts) {
  CheckReport r;
  r.check = "kernel_semigroup_duality";
  r.tolerance = semigroup_tol;
  double worst_semi = 0.0, worst_dual = 0.0;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& smp : samples) {
    const double target_t = smp.s - tau0_forward;
    const std::size_t kc = kernel.nearest_slice(target_t);
    if (std::abs(kernel.times[kc] - target_t) > 1e-9)
      throw std::invalid_argument("kernel has no slice at s - tau0_forward");
    const double reference = value_at(kernel.H[kc], smp.x);
    const ScalarField seed = gaussian_seed(history.at(smp.s).metric, smp.x, tau0_forward, opts.exact_radius_factor);
    HeatOptions fo = opts;
    fo.slice_every = 1;
    const ForwardSolution F = solve_forward(history, seed, smp.s, kernel.T, fo);
    for (double rr : smp.r) {
      const std::size_t kf = F.nearest_slice(rr);
      const std::size_t kk = kernel.nearest_slice(F.times[kf]);
      if (std::abs(F.times[kf] - kernel.times[kk]) > 1e-9) continue;
      if (kernel.times[kk] > kernel.T - kernel.tau0 + 1e-12) continue;
      ScalarField prod = F.u[kf];
      for (std::size_t p = 0; p < prod.size(); ++p) prod[p] *= kernel.H[kk][p];
      const double comp = integrate(prod, history.at(F.times[kf]).metric);
      const double rel = std::abs(comp - reference) / reference;
      worst_semi = std::max(worst_semi, rel);
      rows.push_back({{"x", smp.x}, {"s", smp.s}, {"r", F.times[kf]}, {"composition", comp},
                      {"reference", reference}, {"relative", rel}});
    }
    // Duality: forward value at the kernel centre and final time.
    const double fwd = value_at(F.u.back(), kernel.center);
    const double dual = std::abs(fwd - reference) / reference;
    worst_dual = std::max(worst_dual, dual);
    rows.push_back({{"x", smp.x}, {"s", smp.s}, {"forward_at_center", fwd}, {"reference", reference},
                    {"duality_relative", dual}});
  }
  r.max_violation = worst_semi;
  r.details["semigroup_max_relative"] = worst_semi;
  r.details["duality_max_relative"] = worst_dual;
  r.details["duality_tolerance"] = duality_tol;
  r.details["samples"] = rows;
  r.pass = worst_semi <= semigroup_tol && worst_dual <= duality_tol;
  return r;
}

CheckReport mass_conservation(const KernelSolution& kernel, double tolerance) {
  CheckReport r;
  r.check = "conjugate_mass";
  r.tolerance = tolerance;
  for (std::size_t k = 0; k < kernel.slices(); ++k) {
    const double dev = std::abs(kernel.mass[k] - 1.0);
    if (dev >= r.max_violation) {
      r.max_violation = dev;
      r.slice_time = kernel.times[k];
    }
  }
  r.pass = r.max_violation <= tolerance;
  return r;
}

void export_kernel(const KernelSolution& kernel, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json idx;
  idx["y"] = {kernel.center[0], kernel.center[1], kernel.center[2]};
  idx["T"] = kernel.T;
  idx["tau0"] = kernel.tau0;
  idx["times"] = kernel.times;
  idx["mass_series"] = kernel.mass;
  nlohmann::json files = nlohmann::json::array();
  for (std::size_t k = 0; k < kernel.slices(); ++k) {
    const std::string name = "H_" + std::to_string(k) + ".bin";
    write_field(dir / name, kernel.H[k]);
    files.push_back(name);
  }
  idx["files"] = files;
  std::ofstream(dir / "index.json") << idx.dump(2) << '\n';
}

}  // namespace rhflow
