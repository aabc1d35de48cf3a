#include "rhflow/harnack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rhflow/errors.hpp"

namespace rhflow {

namespace {

constexpr int kStencilReach = 3;

// Removes every point within `reach` (box, per axis) of an excluded point.
std::vector<char> erode(const PeriodicGrid& g, std::vector<char> keep, int reach) {
  for (int axis = 0; axis < g.dim(); ++axis) {
    const int n = g.points(axis);
    std::vector<char> out(keep.size());
    for (std::size_t p = 0; p < keep.size(); ++p) {
      const auto ix = g.unflatten(p);
      char ok = keep[p];
      for (int o = -reach; o <= reach && ok; ++o) {
        auto jx = ix;
        jx[axis] = ((ix[axis] + o) % n + n) % n;
        ok = keep[g.index(jx[0], jx[1], jx[2])];
      }
      out[p] = ok;
    }
    keep = std::move(out);
  }
  return keep;
}

// h with masked entries replaced by the largest finite value.
ScalarField finite_h(const KernelSolution& kernel, std::size_t k) {
  ScalarField h = kernel.h(k);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < h.size(); ++p)
    if (std::isfinite(h[p])) top = std::max(top, h[p]);
  for (std::size_t p = 0; p < h.size(); ++p)
    if (!std::isfinite(h[p])) h[p] = top;
  return h;
}

ScalarField broadcast(const PeriodicGrid& g, const Profile& p) {
  return ScalarField::from_profile(g, std::span<const double>(p));
}

double integrate_on(const ScalarField& f, const ReducedMetric& m) {
  return integrate(f, m);
}

}  // namespace

std::vector<std::size_t> harnack_slices(const KernelSolution& kernel) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < kernel.slices(); ++k)
    if (kernel.taus[k] >= 2.0 * kernel.tau0 - 1e-12) out.push_back(k);
  return out;
}

HarnackField compute_v(const KernelSolution& kernel, const FlowHistory& history, std::size_t k) {
  const PeriodicGrid& g = kernel.H[k].grid();
  HarnackField out;
  out.slice = k;
  out.t = kernel.times[k];
  out.tau = kernel.taus[k];
  out.masked_fraction = kernel.masked_fraction(k);
  out.valid = erode(g, kernel.mask(k), kStencilReach);
  if (std::none_of(out.valid.begin(), out.valid.end(), [](char c) { return c != 0; }))
    throw PreconditionViolated("every point of the slice is masked");

  const FlowState st = history.at(out.t);
  const auto cq = coupled_quantities(st.metric, st.map, history.schedule().alpha(out.t));
  const ScalarField h = finite_h(kernel, k);
  const ScalarField lap = laplacian(st.metric, h);
  const ScalarField grad2 = gradient_norm_sq(st.metric, gradient(h));
  const ScalarField& H = kernel.H[k];
  const std::size_t rs = g.row_size();
  const int n = g.dim();

  out.v = ScalarField(g);
  out.max_ratio = -std::numeric_limits<double>::infinity();
  out.max_v = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < H.size(); ++p) {
    if (!out.valid[p]) continue;
    const double S = cq.S[p / rs];
    const double ratio = out.tau * (2.0 * lap[p] - grad2[p] + S) + h[p] - n;
    out.v[p] = ratio * H[p];
    out.max_ratio = std::max(out.max_ratio, ratio);
    out.max_v = std::max(out.max_v, out.v[p]);
  }
  return out;
}

CheckReport harnack_v_check(const KernelSolution& kernel, const FlowHistory& history,
                            double tolerance) {
  CheckReport r;
  r.check = "harnack_v_nonpositive";
  r.tolerance = tolerance;
  double worst = -std::numeric_limits<double>::infinity();
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t k : harnack_slices(kernel)) {
    const HarnackField v = compute_v(kernel, history, k);
    rows.push_back({{"t", v.t}, {"tau", v.tau}, {"max_v_over_H", v.max_ratio}, {"max_v", v.max_v},
                    {"masked_fraction", v.masked_fraction}});
    if (v.max_ratio > worst) {
      worst = v.max_ratio;
      r.slice_time = v.t;
    }
  }
  if (rows.empty()) throw PreconditionViolated("no kernel slice with tau >= 2 tau0");
  r.details["slices"] = rows;
  r.details["max_v_over_H"] = worst;
  r.max_violation = std::max(0.0, worst);
  r.pass = worst <= tolerance;
  return r;
}

CheckReport refinement_check(const std::string& name, const CheckReport& coarse,
                             const CheckReport& fine, double floor) {
  CheckReport r;
  r.check = name;
  r.max_violation = fine.max_violation;
  r.tolerance = std::max(0.5 * coarse.max_violation, floor);
  r.pass = fine.max_violation <= r.tolerance;
  if (coarse.max_violation > 0.0 && fine.max_violation > 0.0)
    r.refinement_order = observed_order(coarse.max_violation, fine.max_violation);
  r.details["coarse"] = to_json(coarse);
  r.details["fine"] = to_json(fine);
  r.details["floor"] = floor;
  return r;
}

CheckReport boxstar_v_residual(const KernelSolution& kernel, const FlowHistory& history,
                               double tolerance, BoxStarForm form) {
  const auto slices = harnack_slices(kernel);
  if (slices.size() < 3) throw PreconditionViolated("the evolution check needs three slices");
  const PeriodicGrid& g = kernel.H[0].grid();
  const std::size_t rs = g.row_size();
  const int n = g.dim();

  CheckReport r;
  r.check = "harnack_evolution_identity";
  r.tolerance = tolerance;
  std::array<double, 3> worst{0.0, 0.0, 0.0};
  double max_rhs = -std::numeric_limits<double>::infinity();
  nlohmann::json rows = nlohmann::json::array();

  for (std::size_t m = 1; m + 1 < slices.size(); ++m) {
    const std::size_t k = slices[m];
    const HarnackField vm = compute_v(kernel, history, slices[m - 1]);
    const HarnackField v0 = compute_v(kernel, history, k);
    const HarnackField vp = compute_v(kernel, history, slices[m + 1]);
    std::vector<char> keep(v0.valid.size());
    for (std::size_t p = 0; p < keep.size(); ++p) keep[p] = vm.valid[p] && v0.valid[p] && vp.valid[p];
    keep = erode(g, keep, kStencilReach);

    const double tau = v0.tau;
    const double t = v0.t;
    const FlowState st = history.at(t);
    const double alpha = history.schedule().alpha(t);
    const double alpha_p = history.schedule().alpha_prime(t);
    const auto cq = coupled_quantities(st.metric, st.map, alpha);
    const ScalarField h = finite_h(kernel, k);
    const ScalarField lap_v = laplacian(st.metric, v0.v);
    const auto dh = gradient(h);
    TensorField T = hessian(st.metric, cq.curv, h);
    for (int i = 0; i < n; ++i)
      for (std::size_t p = 0; p < T.comp[i][i].size(); ++p) {
        const std::size_t x = p / rs;
        T.comp[i][i][p] += cq.S_ii[i][x] - st.metric.a(i)[x] / (2.0 * tau);
      }
    const ScalarField tn = tensor_norm_sq(st.metric, T);
    const ScalarField& H = kernel.H[k];
    const double dtau = vp.tau - vm.tau;
    const double scale = H.max();

    std::array<double, 3> slice_worst{0.0, 0.0, 0.0};
    for (std::size_t p = 0; p < H.size(); ++p) {
      if (!keep[p]) continue;
      const std::size_t x = p / rs;
      const double lhs = (vp.v[p] - vm.v[p]) / dtau - lap_v[p] + cq.S[x] * v0.v[p];
      const double dphi_dh = cq.dphi[x] * dh[0][p] / st.metric.a(0)[x];
      const double tens = cq.tension[x];
      const double grad_phi2 = cq.energy[x];
      const std::array<double, 3> rhs{
          -2.0 * tau * (tn[p] + 2.0 * alpha * (dphi_dh * dphi_dh + tens * tens)) * H[p],
          -2.0 * tau * (tn[p] + alpha * (tens * tens + dphi_dh * dphi_dh) - 0.5 * alpha_p * grad_phi2) * H[p],
          -2.0 * tau * (tn[p] + alpha * (tens - dphi_dh) * (tens - dphi_dh) - 0.5 * alpha_p * grad_phi2) *
              H[p]};
      for (int f = 0; f < 3; ++f)
        slice_worst[f] = std::max(slice_worst[f], std::abs(lhs - rhs[f]) / scale);
      max_rhs = std::max(max_rhs, rhs[static_cast<int>(form)]);
    }
    rows.push_back({{"t", t},
                    {"tau", tau},
                    {"residual_statement", slice_worst[0]},
                    {"residual_proof", slice_worst[1]},
                    {"residual_combined", slice_worst[2]}});
    for (int f = 0; f < 3; ++f) worst[f] = std::max(worst[f], slice_worst[f]);
    if (slice_worst[static_cast<int>(form)] >= r.max_violation) {
      r.max_violation = slice_worst[static_cast<int>(form)];
      r.slice_time = t;
    }
  }
  static const char* names[] = {"statement", "proof", "combined"};
  r.details["form"] = names[static_cast<int>(form)];
  r.details["residual_statement"] = worst[0];
  r.details["residual_proof"] = worst[1];
  r.details["residual_combined"] = worst[2];
  r.details["max_rhs"] = max_rhs;
  r.details["slices"] = rows;
  r.pass = r.max_violation <= tolerance && max_rhs <= 1e-8;
  return r;
}

ProbeCurve constant_curve(const KernelSolution& kernel, std::array<int, 3> p, std::string name) {
  ProbeCurve c;
  c.name = std::move(name);
  const PeriodicGrid& g = kernel.H[0].grid();
  for (std::size_t k : harnack_slices(kernel)) {
    c.slices.push_back(k);
    c.points.push_back({g.coordinate(0, p[0]), g.dim() > 1 ? g.coordinate(1, p[1]) : 0.0,
                        g.dim() > 2 ? g.coordinate(2, p[2]) : 0.0});
  }
  return c;
}

namespace {

// True when the interpolation stencil around x lies on unmasked points.
bool stencil_clear(const PeriodicGrid& g, const std::vector<char>& mask, std::array<double, 3> x) {
  std::array<int, 3> base{0, 0, 0};
  for (int a = 0; a < g.dim(); ++a) base[a] = static_cast<int>(std::floor(x[a] / g.spacing(a)));
  const int m2 = g.dim() >= 2 ? 4 : 1, m3 = g.dim() == 3 ? 4 : 1;
  auto wrap = [&](int a, int i) { return ((i % g.points(a)) + g.points(a)) % g.points(a); };
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < m2; ++j)
      for (int k = 0; k < m3; ++k) {
        const int jj = g.dim() >= 2 ? wrap(1, base[1] - 1 + j) : 0;
        const int kk = g.dim() == 3 ? wrap(2, base[2] - 1 + k) : 0;
        if (!mask[g.index(wrap(0, base[0] - 1 + i), jj, kk)]) return false;
      }
  return true;
}

}  // namespace

CheckReport lyh_along_curve(const KernelSolution& kernel, const FlowHistory& history,
                            const std::vector<ProbeCurve>& curves, double tolerance) {
  CheckReport r;
  r.check = "lyh_harnack_along_curves";
  r.tolerance = tolerance;
  const PeriodicGrid& g = kernel.H[0].grid();
  const int n = g.dim();
  double worst = std::numeric_limits<double>::infinity();
  nlohmann::json per_curve = nlohmann::json::array();
  for (const auto& c : curves) {
    if (c.slices.size() != c.points.size() || c.slices.size() < 3)
      throw std::invalid_argument("probe curve needs at least three samples");
    const std::size_t len = c.slices.size();
    std::vector<double> hv(len), tau(len), S(len), speed2(len);
    for (std::size_t m = 0; m < len; ++m) {
      const std::size_t k = c.slices[m];
      if (!stencil_clear(g, kernel.mask(k), c.points[m]))
        throw PreconditionViolated("probe curve '" + c.name + "' enters the masked region");
      hv[m] = interpolate(finite_h(kernel, k), c.points[m]);
      tau[m] = kernel.taus[k];
    }
    double min1 = std::numeric_limits<double>::infinity(), min2 = min1;
    nlohmann::json margins = nlohmann::json::array();
    for (std::size_t m = 1; m + 1 < len; ++m) {
      const double t = kernel.times[c.slices[m]];
      const FlowState st = history.at(t);
      const auto cq = coupled_quantities(st.metric, st.map, history.schedule().alpha(t));
      const auto& p = c.points[m];
      const double Sx = interpolate(broadcast(g, cq.S), p);
      const double dtau = tau[m + 1] - tau[m - 1];
      double v2 = 0.0;
      for (int a = 0; a < n; ++a) {
        const double vel = (c.points[m + 1][a] - c.points[m - 1][a]) / dtau;
        v2 += interpolate(broadcast(g, st.metric.a(a)), p) * vel * vel;
      }
      const double dh = (hv[m + 1] - hv[m - 1]) / dtau;
      const double dsh = (2.0 * std::sqrt(tau[m + 1]) * hv[m + 1] - 2.0 * std::sqrt(tau[m - 1]) * hv[m - 1]) / dtau;
      const double m1 = 0.5 * (Sx + v2) - hv[m] / (2.0 * tau[m]) - dh;
      const double m2 = std::sqrt(tau[m]) * (Sx + v2) - dsh;
      min1 = std::min(min1, m1);
      min2 = std::min(min2, m2);
      margins.push_back({{"t", t}, {"tau", tau[m]}, {"h", hv[m]}, {"margin_h", m1}, {"margin_sqrt_tau_h", m2}});
    }
    per_curve.push_back({{"name", c.name}, {"min_margin_h", min1}, {"min_margin_sqrt_tau_h", min2},
                         {"samples", margins}});
    worst = std::min({worst, min1, min2});
  }
  r.details["curves"] = per_curve;
  r.details["min_margin"] = worst;
  r.max_violation = std::max(0.0, -worst);
  r.pass = worst >= -tolerance;
  return r;
}

CheckReport gradient_estimate_check(const KernelSolution& kernel, const FlowHistory& history,
                                    double tolerance, double floor) {
  CheckReport r;
  r.check = "log_gradient_estimate";
  r.tolerance = tolerance;
  const PeriodicGrid& g = kernel.H[0].grid();
  const int n = g.dim();
  double k1 = 0.0, k2 = 0.0, k3 = 0.0, k4 = 0.0;
  for (const auto& s : history.snapshots()) {
    if (s.t > kernel.T + 1e-12) break;
    const auto cq = coupled_quantities(s.metric, s.map, history.schedule().alpha(s.t));
    k1 = std::max(k1, cq.k1);
    k2 = std::max(k2, cq.k2);
    k3 = std::max(k3, cq.k3);
    k4 = std::max(k4, cq.k4);
  }
  const bool floored = k2 < 1e-8;
  k2 = std::max(k2, 1e-8);
  const double k5 = 1.0 + k3 / (n * k2);
  double A = 0.0;
  for (const auto& H : kernel.H) A = std::max(A, H.max());
  A *= 1.05;

  double worst = -std::numeric_limits<double>::infinity();
  const double tau_cap = std::min(1.0, kernel.T);
  for (std::size_t k : harnack_slices(kernel)) {
    const double tau = kernel.taus[k];
    if (tau > tau_cap + 1e-12) continue;
    const double a = tau / (1.0 + (2.0 * k1 + (2.0 + n) * k2 + 1.0) * tau);
    const double b = std::exp(k4 * tau);
    const double c = (std::exp(k5 * k4 * tau) * n * k2 + k3) * tau;
    const FlowState st = history.at(kernel.times[k]);
    const ScalarField h = finite_h(kernel, k);
    const ScalarField grad2 = gradient_norm_sq(st.metric, gradient(h));
    const ScalarField& q = kernel.H[k];
    std::vector<char> keep(q.size());
    const double qmin = floor * q.max();
    for (std::size_t p = 0; p < q.size(); ++p) keep[p] = q[p] >= qmin && q[p] > 0.0;
    const auto valid = erode(g, keep, kStencilReach);
    for (std::size_t p = 0; p < q.size(); ++p) {
      if (!valid[p]) continue;
      // a |grad q|^2 / q <= b q ln(A/q) + c q, divided by q
      const double viol = a * grad2[p] - b * std::log(A / q[p]) - c;
      if (viol > worst) {
        worst = viol;
        r.slice_time = kernel.times[k];
      }
    }
  }
  r.details["k"] = {k1, k2, k3, k4};
  r.details["k2_floored"] = floored;
  r.details["A"] = A;
  r.details["max_relative_violation"] = worst;
  r.details["floor"] = floor;
  r.max_violation = std::max(0.0, worst);
  r.pass = worst <= tolerance;
  if (floored) r.note = "k2 floored at 1e-8";
  return r;
}

CheckReport rho_phi_report(const KernelSolution& kernel, const FlowHistory& history,
                           const std::vector<std::pair<std::string, ScalarField>>& seeds,
                           double tolerance, double terminal_tolerance,
                           std::vector<RhoSeries>* series,
                           const HeatOptions& opts) {
  CheckReport r;
  r.check = "rho_phi_monotone";
  r.tolerance = tolerance;
  const auto slices = harnack_slices(kernel);
  if (slices.size() < 2) throw PreconditionViolated("rho series needs two slices");
  const int n = kernel.dim;
  const double t0 = kernel.times.back();

  // v and h do not depend on Phi.
  std::vector<HarnackField> vs;
  std::vector<ScalarField> hs;
  for (std::size_t k : slices) {
    vs.push_back(compute_v(kernel, history, k));
    hs.push_back(finite_h(kernel, k));
  }

  double worst_drop = 0.0, worst_terminal = 0.0, worst_entropy = -std::numeric_limits<double>::infinity();
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [name, phi0] : seeds) {
    if (phi0.min() <= 0.0) throw PreconditionViolated("test solution '" + name + "' is not positive");
    HeatOptions fo = opts;
    fo.slice_every = 1;
    const ForwardSolution F = solve_forward(history, phi0, t0, kernel.T, fo);
    const double norm = F.u.back().at(kernel.center[0], kernel.center[1], kernel.center[2]);
    auto phi_at = [&](double t) {
      auto it = std::lower_bound(F.times.begin(), F.times.end(), t - 1e-12);
      const std::size_t j = std::min<std::size_t>(it - F.times.begin(), F.times.size() - 1);
      if (j == 0 || std::abs(F.times[j] - t) < 1e-12) return F.u[j] * (1.0 / norm);
      const double w = (t - F.times[j - 1]) / (F.times[j] - F.times[j - 1]);
      return (F.u[j - 1] * (1.0 - w) + F.u[j] * w) * (1.0 / norm);
    };
    RhoSeries s;
    s.name = name;
    // slices run backwards in t; store in increasing t
    for (std::size_t m = slices.size(); m-- > 0;) {
      const std::size_t k = slices[m];
      const double t = kernel.times[k];
      const ScalarField phi = phi_at(t);
      const ReducedMetric metric = history.at(t).metric;
      ScalarField vp = vs[m].v;
      ScalarField ep(phi.grid());
      for (std::size_t p = 0; p < vp.size(); ++p) {
        vp[p] *= phi[p];
        if (vs[m].valid[p]) ep[p] = (hs[m][p] - 0.5 * n) * kernel.H[k][p] * phi[p];
      }
      s.t.push_back(t);
      s.rho.push_back(integrate_on(vp, metric));
      s.entropy_like.push_back(integrate_on(ep, metric));
    }
    double drop = 0.0;
    for (std::size_t i = 1; i < s.rho.size(); ++i) drop = std::max(drop, s.rho[i - 1] - s.rho[i]);
    const double terminal = std::abs(s.rho.back());
    double ent = -std::numeric_limits<double>::infinity();
    for (std::size_t i = s.entropy_like.size() >= 3 ? s.entropy_like.size() - 3 : 0; i < s.entropy_like.size(); ++i)
      ent = std::max(ent, s.entropy_like[i]);
    worst_drop = std::max(worst_drop, drop);
    worst_terminal = std::max(worst_terminal, terminal);
    worst_entropy = std::max(worst_entropy, ent);
    rows.push_back({{"name", name}, {"max_decrease", drop}, {"terminal_rho", s.rho.back()},
                    {"rho_first", s.rho.front()}, {"latest_entropy_integral", ent}});
    if (series) series->push_back(std::move(s));
  }
  r.details["seeds"] = rows;
  r.details["max_decrease"] = worst_drop;
  r.details["terminal_abs_rho"] = worst_terminal;
  r.details["latest_entropy_integral"] = worst_entropy;
  r.max_violation = std::max(worst_drop, std::max(0.0, worst_entropy));
  r.details["terminal_tolerance"] = terminal_tolerance;
  r.pass = worst_drop <= tolerance && worst_terminal <= terminal_tolerance && worst_entropy <= tolerance;
  return r;
}

}  // namespace rhflow
