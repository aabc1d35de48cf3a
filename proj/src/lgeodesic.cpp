#include "rhflow/lgeodesic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>

#include "rhflow/errors.hpp"
#include "rhflow/geometry.hpp"

namespace rhflow {

double DiscreteCurve::s(int k) const {
  const double sa = std::sqrt(tau_a), s1 = std::sqrt(tau1);
  return sa + (s1 - sa) * k / segments();
}

DiscreteCurve straight_curve(const Point& y, const Point& x, double tau1, int m, double tau_a) {
  if (m < 2 || !(tau1 > tau_a) || tau_a < 0.0)
    throw std::invalid_argument("straight_curve: need m >= 2 and 0 <= tau_a < tau1");
  DiscreteCurve c;
  c.tau_a = tau_a;
  c.tau1 = tau1;
  c.nodes.resize(m + 1);
  const double sa = std::sqrt(tau_a), s1 = std::sqrt(tau1);
  for (int k = 0; k <= m; ++k) {
    const double s = sa + (s1 - sa) * k / m;
    // Linear in s from y at s = 0; for tau_a > 0 the first node is shifted along.
    const double theta = s / s1;
    for (int a = 0; a < 3; ++a) c.nodes[k][a] = y[a] + theta * (x[a] - y[a]);
  }
  c.nodes.front() = tau_a > 0.0 ? c.nodes.front() : y;
  return c;
}

namespace {

// Metric coefficients and S as splines in x1 at the node and midpoint times
// of a curve parameterisation.
struct Slice {
  std::vector<PeriodicSpline> a;
  PeriodicSpline S;
};

Slice make_slice(const FlowState& state, double alpha, bool with_s) {
  const PeriodicGrid& g = state.metric.grid();
  const double L = g.length(0);
  Slice sl;
  for (int i = 0; i < g.dim(); ++i) sl.a.emplace_back(state.metric.a(i), L);
  if (with_s) {
    sl.S = PeriodicSpline(coupled_quantities(state.metric, state.map, alpha).S, L);
  } else {
    sl.S = PeriodicSpline(Profile(g.points(0), 0.0), L);
  }
  return sl;
}

struct CurveModel {
  int dim = 2;
  int m = 0;
  double ds = 0.0;
  std::vector<double> s;      // node parameters
  std::vector<Slice> nodes;   // per node (S used)
  std::vector<Slice> mids;    // per segment (metric used)

  double energy(const std::vector<Point>& p) const {
    double e = 0.0;
    for (int j = 0; j < m; ++j) {
      const double xm = 0.5 * (p[j][0] + p[j + 1][0]);
      for (int i = 0; i < dim; ++i) {
        const double d = p[j + 1][i] - p[j][i];
        e += 0.5 * mids[j].a[i](xm) * d * d / ds;
      }
    }
    for (int k = 0; k <= m; ++k) {
      const double w = (k == 0 || k == m) ? 0.5 : 1.0;
      e += w * 2.0 * s[k] * s[k] * nodes[k].S(p[k][0]) * ds;
    }
    return e;
  }

  // Gradient with respect to every node coordinate (endpoints included).
  std::vector<Point> gradient(const std::vector<Point>& p) const {
    std::vector<Point> g(p.size(), Point{0.0, 0.0, 0.0});
    for (int j = 0; j < m; ++j) {
      const double xm = 0.5 * (p[j][0] + p[j + 1][0]);
      double dx1 = 0.0;
      for (int i = 0; i < dim; ++i) {
        const double d = p[j + 1][i] - p[j][i];
        const double ai = mids[j].a[i](xm);
        g[j + 1][i] += ai * d / ds;
        g[j][i] -= ai * d / ds;
        dx1 += 0.25 * mids[j].a[i].derivative(xm) * d * d / ds;
      }
      g[j][0] += dx1;
      g[j + 1][0] += dx1;
    }
    for (int k = 0; k <= m; ++k) {
      const double w = (k == 0 || k == m) ? 0.5 : 1.0;
      g[k][0] += w * 2.0 * s[k] * s[k] * nodes[k].S.derivative(p[k][0]) * ds;
    }
    return g;
  }
};

CurveModel flow_model(const FlowHistory& history, double tau_a, double tau1, int m) {
  const double T = history.terminal_time();
  if (!(tau1 > tau_a) || tau1 > T - history.snapshots().front().t + 1e-12)
    throw std::invalid_argument("reduced distance: tau outside the flow history");
  CurveModel cm;
  cm.dim = history.dim();
  cm.m = m;
  const double sa = std::sqrt(tau_a), s1 = std::sqrt(tau1);
  cm.ds = (s1 - sa) / m;
  const auto& sch = history.schedule();
  auto slice_at = [&](double s, bool with_s) {
    const double t = std::max(T - s * s, history.snapshots().front().t);
    return make_slice(history.at(t), sch.alpha(t), with_s);
  };
  for (int k = 0; k <= m; ++k) {
    cm.s.push_back(sa + cm.ds * k);
    cm.nodes.push_back(slice_at(cm.s.back(), true));
  }
  for (int j = 0; j < m; ++j) cm.mids.push_back(slice_at(sa + cm.ds * (j + 0.5), false));
  return cm;
}

// Static metric, S = 0, s in [0, 1].
CurveModel static_model(const FlowState& state, int m) {
  CurveModel cm;
  cm.dim = state.metric.dim();
  cm.m = m;
  cm.ds = 1.0 / m;
  const Slice sl = make_slice(state, 0.0, false);
  for (int k = 0; k <= m; ++k) {
    cm.s.push_back(cm.ds * k);
    cm.nodes.push_back(sl);
  }
  for (int j = 0; j < m; ++j) cm.mids.push_back(sl);
  return cm;
}

struct Minimum {
  std::vector<Point> nodes;
  double energy = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Damped Newton over the interior nodes with a finite-difference Hessian of
// the analytic gradient; a diagonal shift is added until the Hessian is
// positive definite.
Minimum minimise(const CurveModel& cm, std::vector<Point> p, const CurveOptions& opts) {
  const int n = cm.dim;
  const int m = cm.m;
  const int size = (m - 1) * n;
  auto pack = [&](const std::vector<Point>& g) {
    Eigen::VectorXd v(size);
    for (int k = 1; k < m; ++k)
      for (int i = 0; i < n; ++i) v[(k - 1) * n + i] = g[k][i];
    return v;
  };
  Minimum out;
  double e = cm.energy(p);
  Eigen::VectorXd grad = pack(cm.gradient(p));
  const double scale = std::max(1.0, std::abs(e));
  int it = 0;
  for (; it < opts.max_iterations; ++it) {
    if (grad.cwiseAbs().maxCoeff() < opts.gradient_tolerance * scale) {
      out.converged = true;
      break;
    }
    Eigen::MatrixXd H(size, size);
    const double h = 1e-6;
    for (int c = 0; c < size; ++c) {
      const int k = c / n + 1, i = c % n;
      auto q = p;
      q[k][i] += h;
      const Eigen::VectorXd gp = pack(cm.gradient(q));
      q[k][i] -= 2.0 * h;
      const Eigen::VectorXd gm = pack(cm.gradient(q));
      H.col(c) = (gp - gm) / (2.0 * h);
    }
    H = 0.5 * (H + H.transpose()).eval();
    double shift = 0.0;
    Eigen::VectorXd step;
    for (int tries = 0; tries < 30; ++tries) {
      Eigen::LLT<Eigen::MatrixXd> llt(H + shift * Eigen::MatrixXd::Identity(size, size));
      if (llt.info() == Eigen::Success) {
        step = -llt.solve(grad);
        break;
      }
      shift = shift == 0.0 ? 1e-6 * std::max(1.0, H.diagonal().cwiseAbs().maxCoeff()) : 10.0 * shift;
    }
    if (step.size() == 0) step = -grad;
    double alpha = 1.0;
    bool accepted = false;
    const double slope = grad.dot(step);
    while (alpha > 1e-12) {
      auto q = p;
      for (int k = 1; k < m; ++k)
        for (int i = 0; i < n; ++i) q[k][i] += alpha * step[(k - 1) * n + i];
      const double eq = cm.energy(q);
      if (std::isfinite(eq) && eq <= e + 1e-4 * alpha * slope) {
        p = std::move(q);
        e = eq;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    grad = pack(cm.gradient(p));
    if (!accepted) {
      out.converged = grad.cwiseAbs().maxCoeff() < 1e3 * opts.gradient_tolerance * scale;
      break;
    }
  }
  if (it == opts.max_iterations)
    out.converged = grad.cwiseAbs().maxCoeff() < opts.gradient_tolerance * scale;
  out.nodes = std::move(p);
  out.energy = e;
  out.iterations = it;
  return out;
}

// Nearest image of x relative to y, and its two neighbours along the axis
// with the largest relative displacement.
std::array<Point, 3> winding_targets(const PeriodicGrid& g, const Point& y, const Point& x) {
  Point near = x;
  int axis = 0;
  double worst = -1.0;
  for (int a = 0; a < g.dim(); ++a) {
    const double L = g.length(a);
    double d = std::remainder(x[a] - y[a], L);
    near[a] = y[a] + d;
    if (std::abs(d) / L > worst) {
      worst = std::abs(d) / L;
      axis = a;
    }
  }
  std::array<Point, 3> t{near, near, near};
  t[1][axis] += g.length(axis);
  t[2][axis] -= g.length(axis);
  return t;
}

Point coordinates(const PeriodicGrid& g, std::array<int, 3> p) {
  Point x{0.0, 0.0, 0.0};
  for (int a = 0; a < g.dim(); ++a) x[a] = g.coordinate(a, p[a]);
  return x;
}

ReducedDistance reduce_with(const CurveModel& cm, const PeriodicGrid& g, const Point& y,
                            const Point& x, double tau_a, double tau1, const CurveOptions& opts) {
  ReducedDistance best;
  best.L = std::numeric_limits<double>::infinity();
  const auto targets = winding_targets(g, y, x);
  for (int sidx = 0; sidx < 3; ++sidx) {
    const DiscreteCurve seed = straight_curve(y, targets[sidx], tau1, cm.m, tau_a);
    const Minimum mn = minimise(cm, seed.nodes, opts);
    const double ell = mn.energy / (2.0 * std::sqrt(tau1));
    best.seed_values.push_back(ell);
    if (ell < best.ell || sidx == 0) {
      best.ell = ell;
      best.L = 4.0 * tau1 * ell;
      best.curve = seed;
      best.curve.nodes = mn.nodes;
      best.seed_used = sidx;
      best.iterations = mn.iterations;
      best.converged = mn.converged;
    }
  }
  if (!std::isfinite(best.ell)) throw NumericalFailure("reduced distance is not finite", tau1);
  return best;
}

}  // namespace

double l_phi_length(const FlowHistory& history, const DiscreteCurve& curve) {
  const CurveModel cm = flow_model(history, curve.tau_a, curve.tau1, curve.segments());
  const double v = cm.energy(curve.nodes);
  if (!std::isfinite(v)) throw NumericalFailure("curve length is not finite", curve.tau1);
  return v;
}

ReducedDistance reduce_distance(const FlowHistory& history, const Point& y, const Point& x,
                                double tau1, const CurveOptions& opts) {
  const CurveModel cm = flow_model(history, 0.0, tau1, opts.nodes);
  return reduce_with(cm, history.grid(), y, x, 0.0, tau1, opts);
}

double squared_distance(const FlowState& state, const Point& y, const Point& x,
                        const CurveOptions& opts) {
  const CurveModel cm = static_model(state, opts.nodes);
  const auto targets = winding_targets(state.metric.grid(), y, x);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& t : targets) {
    std::vector<Point> p(opts.nodes + 1);
    for (int k = 0; k <= opts.nodes; ++k)
      for (int a = 0; a < 3; ++a) p[k][a] = y[a] + (t[a] - y[a]) * k / opts.nodes;
    best = std::min(best, 2.0 * minimise(cm, p, opts).energy);
  }
  return best;
}

std::vector<std::array<int, 3>> subsample(const PeriodicGrid& grid, std::array<int, 3> center,
                                          int per_axis) {
  if (per_axis < 1) throw std::invalid_argument("subsample: per_axis must be positive");
  std::array<std::vector<int>, 3> idx;
  for (int a = 0; a < 3; ++a) {
    if (a >= grid.dim()) {
      idx[a] = {0};
      continue;
    }
    const int n = grid.points(a);
    for (int k = 0; k < per_axis; ++k)
      idx[a].push_back((center[a] + static_cast<int>(std::lround(double(k) * n / per_axis))) % n);
  }
  std::vector<std::array<int, 3>> pts;
  for (int i : idx[0])
    for (int j : idx[1])
      for (int k : idx[2]) pts.push_back({i, j, k});
  return pts;
}

ReducedDistanceField reduced_distance_field(const FlowHistory& history,
                                            std::array<int, 3> center, double tau,
                                            const std::vector<std::array<int, 3>>& points,
                                            const CurveOptions& opts) {
  const PeriodicGrid& g = history.grid();
  const CurveModel cm = flow_model(history, 0.0, tau, opts.nodes);
  const FlowState& terminal = history.snapshots().back();
  ReducedDistanceField f;
  f.center = center;
  f.tau = tau;
  f.points = points;
  const Point y = coordinates(g, center);
  for (const auto& p : points) {
    const Point x = coordinates(g, p);
    f.values.push_back(reduce_with(cm, g, y, x, 0.0, tau, opts));
    f.d2_terminal.push_back(squared_distance(terminal, y, x, opts));
  }
  return f;
}

CheckReport lphi_bounds_check(const FlowHistory& history,
                              const std::vector<ReducedDistanceField>& fields,
                              double tolerance) {
  CheckReport r;
  r.check = "lphi_bounds";
  r.tolerance = tolerance;
  const double T = history.terminal_time();
  const int n = history.dim();
  double worst = -std::numeric_limits<double>::infinity();
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& f : fields) {
    // -k1 g <= S_ij <= k2 g over [T - tau, T].
    double k1 = 0.0, k2 = 0.0;
    auto absorb = [&](double t) {
      const CoupledQuantities q = history.quantities(t);
      k1 = std::max(k1, -q.sij_min_eig);
      k2 = std::max(k2, q.sij_max_eig);
    };
    absorb(T - f.tau);
    for (const auto& s : history.snapshots())
      if (s.t >= T - f.tau) absorb(s.t);
    nlohmann::json margins = nlohmann::json::array();
    for (std::size_t i = 0; i < f.values.size(); ++i) {
      const double L = f.values[i].L;
      const double d2 = f.d2_terminal[i];
      const double lower = std::exp(-2.0 * k1 * f.tau) * d2 - 4.0 * k1 * n / 3.0 * f.tau * f.tau;
      const double upper = std::exp(2.0 * k2 * f.tau) * d2 + 4.0 * k2 * n / 3.0 * f.tau * f.tau;
      const double v = std::max(lower - L, L - upper);
      if (v > worst) {
        worst = v;
        r.slice_time = T - f.tau;
      }
      margins.push_back({{"point", f.points[i]}, {"L", L}, {"d2", d2},
                         {"lower_margin", L - lower}, {"upper_margin", upper - L}});
    }
    rows.push_back({{"tau", f.tau}, {"k1", k1}, {"k2", k2}, {"samples", margins}});
  }
  r.max_violation = worst;
  r.pass = !fields.empty() && worst <= tolerance;
  r.details["fields"] = rows;
  return r;
}

CheckReport compare_h_ell(const KernelSolution& kernel,
                          const std::vector<ReducedDistanceField>& fields, double tolerance) {
  CheckReport r;
  r.check = "h_le_ell";
  r.tolerance = tolerance;
  double worst = -std::numeric_limits<double>::infinity();
  int skipped = 0;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& f : fields) {
    if (f.center != kernel.center) throw std::invalid_argument("compare_h_ell: centre mismatch");
    const std::size_t k = kernel.nearest_slice(kernel.T - f.tau);
    if (std::abs(kernel.taus[k] - f.tau) > 1e-9 * std::max(1.0, f.tau))
      throw std::invalid_argument("compare_h_ell: no kernel slice at tau");
    const ScalarField h = kernel.h(k);
    const PeriodicGrid& g = h.grid();
    nlohmann::json samples = nlohmann::json::array();
    for (std::size_t i = 0; i < f.points.size(); ++i) {
      const auto& p = f.points[i];
      const double hv = h[g.index(p[0], p[1], p[2])];
      if (!std::isfinite(hv)) {
        ++skipped;
        continue;
      }
      const double v = (hv - f.values[i].ell) / std::max(1.0, f.values[i].ell);
      if (v > worst) {
        worst = v;
        r.slice_time = kernel.times[k];
      }
      samples.push_back({{"point", p}, {"h", hv}, {"ell", f.values[i].ell}});
    }
    rows.push_back({{"tau", f.tau}, {"samples", samples}});
  }
  r.max_violation = worst;
  r.pass = worst <= tolerance;
  r.details["fields"] = rows;
  r.details["masked_samples"] = skipped;
  return r;
}

ReducedVolume reduced_volume(const FlowHistory& history, std::array<int, 3> center, double tau,
                             int per_axis, const CurveOptions& opts) {
  const PeriodicGrid& g = history.grid();
  for (int a = 0; a < g.dim(); ++a)
    if (g.points(a) % per_axis != 0)
      throw std::invalid_argument("reduced_volume: per_axis must divide the grid");
  const double T = history.terminal_time();
  const FlowState& terminal = history.snapshots().back();
  double h = 0.0;
  for (int a = 0; a < g.dim(); ++a) h = std::max(h, g.spacing(a));
  const ScalarField dT = geodesic_distance(terminal.metric, center, 4.0 * h);

  const auto pts = subsample(g, center, per_axis);
  const ReducedDistanceField f = reduced_distance_field(history, center, tau, pts, opts);
  // Correction on the subsample, laid out [k0][k1][k2].
  const int p1 = g.dim() > 1 ? per_axis : 1, p2 = g.dim() > 2 ? per_axis : 1;
  std::vector<double> corr(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d = dT[g.index(pts[i][0], pts[i][1], pts[i][2])];
    corr[i] = f.values[i].L - d * d;
  }
  // Separable periodic spline interpolation, one axis at a time, in
  // coordinates relative to the centre.
  std::array<int, 3> counts{per_axis, p1, p2};
  std::vector<double> cur = corr;
  for (int a = 0; a < g.dim(); ++a) {
    std::array<int, 3> next_counts = counts;
    next_counts[a] = g.points(a);
    std::vector<double> next(static_cast<std::size_t>(next_counts[0]) * next_counts[1] *
                             next_counts[2]);
    auto at = [](const std::array<int, 3>& c, int i, int j, int k) {
      return (static_cast<std::size_t>(i) * c[1] + j) * c[2] + k;
    };
    std::array<int, 3> other{};
    for (other[0] = 0; other[0] < (a == 0 ? 1 : counts[0]); ++other[0])
      for (other[1] = 0; other[1] < (a == 1 ? 1 : counts[1]); ++other[1])
        for (other[2] = 0; other[2] < (a == 2 ? 1 : counts[2]); ++other[2]) {
          std::vector<double> line(per_axis);
          for (int q = 0; q < per_axis; ++q) {
            auto ix = other;
            ix[a] = q;
            line[q] = cur[at(counts, ix[0], ix[1], ix[2])];
          }
          const PeriodicSpline sp(line, g.length(a));
          for (int q = 0; q < g.points(a); ++q) {
            auto ix = other;
            ix[a] = q;
            const int rel = ((q - center[a]) % g.points(a) + g.points(a)) % g.points(a);
            next[at(next_counts, ix[0], ix[1], ix[2])] = sp(rel * g.spacing(a));
          }
        }
    cur = std::move(next);
    counts = next_counts;
  }
  const FlowState state = history.at(T - tau);
  const int n = g.dim();
  ScalarField u(g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double ell = (dT[i] * dT[i] + cur[i]) / (4.0 * tau);
    u[i] = std::pow(4.0 * std::numbers::pi * tau, -0.5 * n) * std::exp(-ell);
  }
  ReducedVolume v;
  v.tau = tau;
  v.V = integrate(u, state.metric);
  v.per_axis = per_axis;
  return v;
}

ProbeCurve probe_from_curve(const KernelSolution& kernel, const DiscreteCurve& curve,
                            std::string name) {
  ProbeCurve p;
  p.name = std::move(name);
  const int m = curve.segments();
  const double sa = std::sqrt(curve.tau_a), s1 = std::sqrt(curve.tau1);
  for (std::size_t k = 0; k < kernel.taus.size(); ++k) {
    const double tau = kernel.taus[k];
    if (tau < 2.0 * kernel.tau0 - 1e-12 || tau > curve.tau1 + 1e-12) continue;
    const double u = std::clamp((std::sqrt(tau) - sa) / (s1 - sa) * m, 0.0, double(m));
    const int j = std::min(static_cast<int>(u), m - 1);
    const double th = u - j;
    Point x{};
    for (int a = 0; a < 3; ++a) x[a] = (1.0 - th) * curve.nodes[j][a] + th * curve.nodes[j + 1][a];
    p.slices.push_back(k);
    p.points.push_back(x);
  }
  if (p.slices.size() < 3) throw std::invalid_argument("probe curve: fewer than three kernel slices");
  return p;
}

void write_reduced_csv(const std::vector<ReducedDistanceField>& fields,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "x_index,tau,ell,L,seed_used,iterations\n";
  for (const auto& f : fields)
    for (std::size_t i = 0; i < f.points.size(); ++i) {
      const auto& p = f.points[i];
      out << p[0] << ':' << p[1] << ':' << p[2] << ',' << f.tau << ',' << f.values[i].ell << ','
          << f.values[i].L << ',' << f.values[i].seed_used << ',' << f.values[i].iterations
          << '\n';
    }
}

}  // namespace rhflow
