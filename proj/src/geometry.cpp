#include "rhflow/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

#include "rhflow/errors.hpp"

namespace rhflow {

ReducedMetric::ReducedMetric(const PeriodicGrid& grid, std::vector<Profile> coefficients)
    : grid_(grid), a_(std::move(coefficients)) {
  if (static_cast<int>(a_.size()) != grid.dim())
    throw std::invalid_argument("metric needs one coefficient profile per axis");
  for (const auto& p : a_) {
    if (static_cast<int>(p.size()) != grid.points(0))
      throw std::invalid_argument("coefficient profile length does not match x1 axis");
    for (double v : p)
      if (!(v > 0.0) || !std::isfinite(v))
        throw PreconditionViolated("metric coefficient is not positive");
  }
}

ReducedMetric ReducedMetric::flat(const PeriodicGrid& grid) {
  return ReducedMetric(grid, std::vector<Profile>(grid.dim(), Profile(grid.points(0), 1.0)));
}

Profile ReducedMetric::sqrt_g() const {
  Profile w(n1(), 1.0);
  for (const auto& p : a_)
    for (int i = 0; i < n1(); ++i) w[i] *= std::sqrt(p[i]);
  return w;
}

double ReducedMetric::volume() const {
  double acc = 0.0;
  for (double v : sqrt_g()) acc += v;
  return acc * grid_.row_size() * grid_.cell_volume();
}

ReducedMetric ReducedMetric::scaled(double c) const {
  std::vector<Profile> a = a_;
  for (auto& p : a)
    for (double& v : p) v *= c;
  return ReducedMetric(grid_, std::move(a));
}

double ReducedMetric::min_coefficient() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& p : a_) m = std::min(m, *std::min_element(p.begin(), p.end()));
  return m;
}

Curvature curvature(const ReducedMetric& metric) {
  const int n = metric.dim();
  const int N = metric.n1();
  const double h = metric.grid().spacing(0);
  Curvature c;
  c.sqrt_g = metric.sqrt_g();
  std::vector<Profile> da(n);
  for (int i = 0; i < n; ++i) da[i] = periodic_derivative(metric.a(i), h, 1);

  c.g111.resize(N);
  c.g1jj.assign(n, Profile(N, 0.0));
  c.gj1j.assign(n, Profile(N, 0.0));
  for (int x = 0; x < N; ++x) {
    c.g111[x] = da[0][x] / (2.0 * metric.a(0)[x]);
    for (int j = 1; j < n; ++j) {
      c.g1jj[j][x] = -da[j][x] / (2.0 * metric.a(0)[x]);
      c.gj1j[j][x] = da[j][x] / (2.0 * metric.a(j)[x]);
    }
  }
  c.ric.assign(n, Profile(N, 0.0));
  Profile lambda = c.g111;
  for (int j = 1; j < n; ++j)
    for (int x = 0; x < N; ++x) lambda[x] += c.gj1j[j][x];
  for (int j = 1; j < n; ++j) {
    const Profile dg = periodic_derivative(c.gj1j[j], h, 1);
    const Profile db = periodic_derivative(c.g1jj[j], h, 1);
    for (int x = 0; x < N; ++x) {
      const double gj = c.gj1j[j][x];
      c.ric[0][x] += -dg[x] + gj * c.g111[x] - gj * gj;
      c.ric[j][x] = db[x] + lambda[x] * c.g1jj[j][x] - 2.0 * c.g1jj[j][x] * gj;
    }
  }
  c.scalar.assign(N, 0.0);
  for (int i = 0; i < n; ++i)
    for (int x = 0; x < N; ++x) c.scalar[x] += c.ric[i][x] / metric.a(i)[x];
  return c;
}

CoupledQuantities coupled_quantities(const ReducedMetric& metric, const ScalarMap& map,
                                     double alpha) {
  if (alpha < 0.0) throw PreconditionViolated("coupling must be nonnegative");
  const int n = metric.dim();
  const int N = metric.n1();
  const double h = metric.grid().spacing(0);
  if (static_cast<int>(map.phi.size()) != N)
    throw std::invalid_argument("map profile length does not match x1 axis");
  CoupledQuantities q;
  q.alpha = alpha;
  q.curv = curvature(metric);
  q.dphi = periodic_derivative(map.phi, h, 1);
  q.tension = laplacian_profile(metric, map.phi);
  q.energy.resize(N);
  q.S.resize(N);
  q.S_ii = q.curv.ric;
  for (int x = 0; x < N; ++x) {
    q.energy[x] = q.dphi[x] * q.dphi[x] / metric.a(0)[x];
    q.S[x] = q.curv.scalar[x] - alpha * q.energy[x];
    q.S_ii[0][x] -= alpha * q.dphi[x] * q.dphi[x];
  }
  const Profile dS = periodic_derivative(q.S, h, 1);
  q.sij_min_eig = std::numeric_limits<double>::infinity();
  q.sij_max_eig = -std::numeric_limits<double>::infinity();
  for (int x = 0; x < N; ++x) {
    for (int i = 0; i < n; ++i) {
      const double ric_eig = q.curv.ric[i][x] / metric.a(i)[x];
      const double s_eig = q.S_ii[i][x] / metric.a(i)[x];
      q.k1 = std::max(q.k1, -ric_eig);
      q.k2 = std::max(q.k2, -s_eig);
      q.sij_min_eig = std::min(q.sij_min_eig, s_eig);
      q.sij_max_eig = std::max(q.sij_max_eig, s_eig);
    }
    q.k3 = std::max(q.k3, dS[x] * dS[x] / metric.a(0)[x]);
    q.k4 = std::max(q.k4, std::abs(q.S[x]));
  }
  return q;
}

Profile sij_norm_sq(const ReducedMetric& metric, const CoupledQuantities& q) {
  Profile out(metric.n1(), 0.0);
  for (int i = 0; i < metric.dim(); ++i)
    for (int x = 0; x < metric.n1(); ++x) {
      const double s = q.S_ii[i][x] / metric.a(i)[x];
      out[x] += s * s;
    }
  return out;
}

namespace {

// Staggered fourth-order difference weights. Face f+1/2 sees points f-1..f+2.
constexpr std::array<double, 4> kFaceDiff{1.0, -27.0, 27.0, -1.0};

inline int wrap(int i, int n) { return ((i % n) + n) % n; }

double face_value(std::span<const double> q, int f) {
  const int n = static_cast<int>(q.size());
  return (-q[wrap(f - 1, n)] + 9.0 * q[wrap(f, n)] + 9.0 * q[wrap(f + 1, n)] -
          q[wrap(f + 2, n)]) /
         16.0;
}

}  // namespace

std::vector<double> x1_operator_bands(std::span<const double> w, std::span<const double> q,
                                      double h) {
  const int n = static_cast<int>(w.size());
  std::vector<double> bands(static_cast<std::size_t>(n) * 7, 0.0);
  const double scale = 1.0 / (24.0 * h * 24.0 * h);
  for (int i = 0; i < n; ++i) {
    // Faces i-3/2 .. i+3/2 are f+1/2 with f = i-2 .. i+1.
    for (int m = 0; m < 4; ++m) {
      const int f = i - 2 + m;
      const double qf = face_value(q, f) * kFaceDiff[m];
      for (int r = 0; r < 4; ++r) {
        const int off = (f - 1 + r) - i;
        bands[i * 7 + off + 3] += scale * qf * kFaceDiff[r] / w[i];
      }
    }
  }
  return bands;
}

std::vector<double> apply_x1_operator(std::span<const double> w, std::span<const double> q,
                                      double h, std::span<const double> f) {
  const int n = static_cast<int>(f.size());
  std::vector<double> flux(n);  // flux[f] lives on face f+1/2
  for (int k = 0; k < n; ++k) {
    const double d = (f[wrap(k - 1, n)] - f[wrap(k + 2, n)]) + 27.0 * (f[wrap(k + 1, n)] - f[wrap(k, n)]);
    flux[k] = face_value(q, k) * d / (24.0 * h);
  }
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    const double d = (flux[wrap(i - 2, n)] - flux[wrap(i + 1, n)]) +
                     27.0 * (flux[i] - flux[wrap(i - 1, n)]);
    out[i] = d / (24.0 * h * w[i]);
  }
  return out;
}

namespace {

void weights(const ReducedMetric& metric, Profile& w, Profile& q) {
  w = metric.sqrt_g();
  q.resize(w.size());
  for (std::size_t x = 0; x < w.size(); ++x) q[x] = w[x] / metric.a(0)[x];
}

}  // namespace

Profile laplacian_profile(const ReducedMetric& metric, std::span<const double> f) {
  Profile w, q;
  weights(metric, w, q);
  return apply_x1_operator(w, q, metric.grid().spacing(0), f);
}

ScalarField laplacian(const ReducedMetric& metric, const ScalarField& f) {
  const PeriodicGrid& g = f.grid();
  if (!(g == metric.grid())) throw std::invalid_argument("laplacian: grid mismatch");
  Profile w, q;
  weights(metric, w, q);
  const int N = g.points(0);
  const std::size_t rs = g.row_size();
  ScalarField out(g);
  std::vector<double> column(N);
  for (std::size_t c = 0; c < rs; ++c) {
    for (int i = 0; i < N; ++i) column[i] = f[i * rs + c];
    const auto lc = apply_x1_operator(w, q, g.spacing(0), column);
    for (int i = 0; i < N; ++i) out[i * rs + c] = lc[i];
  }
  for (int axis = 1; axis < g.dim(); ++axis) {
    const ScalarField d2 = derivative(f, axis, 2);
    for (int i = 0; i < N; ++i) {
      const double inv = 1.0 / metric.a(axis)[i];
      auto orow = out.row(i);
      auto drow = d2.row(i);
      for (std::size_t c = 0; c < rs; ++c) orow[c] += inv * drow[c];
    }
  }
  return out;
}

std::array<ScalarField, 3> gradient(const ScalarField& f) {
  std::array<ScalarField, 3> d;
  for (int a = 0; a < f.grid().dim(); ++a) d[a] = derivative(f, a, 1);
  return d;
}

ScalarField gradient_norm_sq(const ReducedMetric& metric, const std::array<ScalarField, 3>& df) {
  const PeriodicGrid& g = metric.grid();
  ScalarField out(g);
  const std::size_t rs = g.row_size();
  for (int i = 0; i < g.points(0); ++i)
    for (int a = 0; a < g.dim(); ++a) {
      const double inv = 1.0 / metric.a(a)[i];
      for (std::size_t c = 0; c < rs; ++c) {
        const double v = df[a][i * rs + c];
        out[i * rs + c] += v * v * inv;
      }
    }
  return out;
}

TensorField hessian(const ReducedMetric& metric, const Curvature& curv, const ScalarField& f) {
  const PeriodicGrid& g = f.grid();
  const int n = g.dim();
  const std::size_t rs = g.row_size();
  TensorField t;
  auto df = gradient(f);
  for (int a = 0; a < n; ++a) {
    t.comp[a][a] = derivative(f, a, 2);
    for (int b = a + 1; b < n; ++b) {
      t.comp[a][b] = mixed_derivative(f, a, b);
    }
  }
  for (int i = 0; i < g.points(0); ++i) {
    for (std::size_t c = 0; c < rs; ++c) {
      const std::size_t p = i * rs + c;
      t.comp[0][0][p] -= curv.g111[i] * df[0][p];
      for (int j = 1; j < n; ++j) {
        t.comp[j][j][p] -= curv.g1jj[j][i] * df[0][p];
        t.comp[0][j][p] -= curv.gj1j[j][i] * df[j][p];
      }
    }
  }
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) t.comp[b][a] = t.comp[a][b];
  return t;
}

ScalarField tensor_norm_sq(const ReducedMetric& metric, const TensorField& t) {
  const PeriodicGrid& g = metric.grid();
  const int n = g.dim();
  const std::size_t rs = g.row_size();
  ScalarField out(g);
  for (int i = 0; i < g.points(0); ++i)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        const double inv = 1.0 / (metric.a(a)[i] * metric.a(b)[i]);
        for (std::size_t c = 0; c < rs; ++c) {
          const double v = t.comp[a][b][i * rs + c];
          out[i * rs + c] += v * v * inv;
        }
      }
  return out;
}

BianchiResult bianchi_residual(const ReducedMetric& metric, const ScalarMap& map, double alpha,
                               double alpha_prime, std::span<const double> x1_component) {
  const int n = metric.dim();
  const int N = metric.n1();
  const double h = metric.grid().spacing(0);
  const CoupledQuantities q = coupled_quantities(metric, map, alpha);
  const Curvature& c = q.curv;
  const Profile dS11 = periodic_derivative(q.S_ii[0], h, 1);
  const Profile dS = periodic_derivative(q.S, h, 1);
  BianchiResult r;
  r.lhs.resize(N);
  r.rhs.resize(N);
  r.D.resize(N);
  for (int x = 0; x < N; ++x) {
    const double a1 = metric.a(0)[x];
    double div = dS11[x] / a1 - 2.0 * c.g111[x] * q.S_ii[0][x] / a1;
    for (int j = 1; j < n; ++j)
      div -= (c.g1jj[j][x] * q.S_ii[0][x] + c.gj1j[j][x] * q.S_ii[j][x]) / metric.a(j)[x];
    const double X = x1_component[x];
    r.lhs[x] = 4.0 * div * X - 2.0 * dS[x] * X;
    r.rhs[x] = -4.0 * alpha * q.tension[x] * q.dphi[x] * X;
    r.residual = std::max(r.residual, std::abs(r.lhs[x] - r.rhs[x]));
    const double dev = q.tension[x] - X * q.dphi[x];
    r.D[x] = 2.0 * alpha * dev * dev - alpha_prime * q.energy[x];
  }
  return r;
}

namespace {

// Length of the straight coordinate segment from p to p + delta, Simpson rule
// in the x1 direction along which the metric varies.
double segment_length(int n, const std::vector<PeriodicSpline>& splines,
                      std::array<double, 3> p, std::array<double, 3> delta) {
  constexpr int kPanels = 8;
  double acc = 0.0;
  for (int s = 0; s <= kPanels; ++s) {
    const double t = static_cast<double>(s) / kPanels;
    const double x1 = p[0] + t * delta[0];
    double q = 0.0;
    for (int a = 0; a < n; ++a) q += splines[a](x1) * delta[a] * delta[a];
    const double wgt = (s == 0 || s == kPanels) ? 1.0 : (s % 2 == 1 ? 4.0 : 2.0);
    acc += wgt * std::sqrt(q);
  }
  return acc / (3.0 * kPanels);
}

}  // namespace

ScalarField geodesic_distance(const ReducedMetric& metric, std::array<int, 3> source,
                              double exact_radius) {
  const PeriodicGrid& g = metric.grid();
  const int n = g.dim();
  const std::size_t total = g.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(total, inf);
  std::vector<char> state(total, 0);  // 0 far, 1 trial, 2 accepted

  std::vector<PeriodicSpline> splines;
  for (int a = 0; a < n; ++a) splines.emplace_back(metric.a(a), g.length(0));

  for (int a = 0; a < n; ++a)
    if (source[a] < 0 || source[a] >= g.points(a)) throw std::out_of_range("source outside grid");
  const std::array<double, 3> y{g.coordinate(0, source[0]), g.coordinate(1, source[1]),
                                n == 3 ? g.coordinate(2, source[2]) : 0.0};

  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;

  // Exact initial region.
  std::array<int, 3> reach{0, 0, 0};
  const double amin = metric.min_coefficient();
  for (int a = 0; a < n; ++a)
    reach[a] = static_cast<int>(std::ceil(exact_radius / (std::sqrt(amin) * g.spacing(a)))) + 1;
  for (int a = 0; a < n; ++a) reach[a] = std::min(reach[a], g.points(a) / 2 - 1);
  for (int di = -reach[0]; di <= reach[0]; ++di)
    for (int dj = -reach[1]; dj <= reach[1]; ++dj)
      for (int dk = -(n == 3 ? reach[2] : 0); dk <= (n == 3 ? reach[2] : 0); ++dk) {
        const std::array<int, 3> d{di, dj, dk};
        std::array<double, 3> delta{0, 0, 0};
        for (int a = 0; a < n; ++a) delta[a] = d[a] * g.spacing(a);
        const double len = segment_length(n, splines, y, delta);
        if (len > exact_radius && !(di == 0 && dj == 0 && dk == 0)) continue;
        const std::size_t idx =
            g.index(wrap(source[0] + di, g.points(0)), wrap(source[1] + dj, g.points(1)),
                    n == 3 ? wrap(source[2] + dk, g.points(2)) : 0);
        u[idx] = len;
        state[idx] = 2;
      }

  auto update = [&](std::size_t idx) {
    const auto p = g.unflatten(idx);
    const int i = p[0];
    std::array<double, 3> coef{}, val{};
    int m = 0;
    for (int a = 0; a < n; ++a) {
      const int na = g.points(a);
      double best = inf;
      double c = 0.0, v = 0.0;
      for (int dir : {-1, 1}) {
        std::array<int, 3> q1 = p, q2 = p;
        q1[a] = wrap(p[a] + dir, na);
        q2[a] = wrap(p[a] + 2 * dir, na);
        const std::size_t i1 = g.index(q1[0], q1[1], q1[2]);
        if (state[i1] != 2 || u[i1] >= best) continue;
        best = u[i1];
        const double hh = g.spacing(a) * g.spacing(a) * metric.a(a)[i];
        const std::size_t i2 = g.index(q2[0], q2[1], q2[2]);
        if (state[i2] == 2 && u[i2] <= u[i1]) {
          c = 2.25 / hh;
          v = (4.0 * u[i1] - u[i2]) / 3.0;
        } else {
          c = 1.0 / hh;
          v = u[i1];
        }
      }
      if (best < inf) {
        coef[m] = c;
        val[m] = v;
        ++m;
      }
    }
    // Drop the largest contributions until the quadratic has an admissible root.
    while (m > 0) {
      double A = 0, B = 0, C = -1.0, vmax = -inf;
      for (int t = 0; t < m; ++t) {
        A += coef[t];
        B -= 2.0 * coef[t] * val[t];
        C += coef[t] * val[t] * val[t];
        vmax = std::max(vmax, val[t]);
      }
      const double disc = B * B - 4.0 * A * C;
      if (disc >= 0.0) {
        const double root = (-B + std::sqrt(disc)) / (2.0 * A);
        if (root >= vmax) return root;
      }
      int worst = 0;
      for (int t = 1; t < m; ++t)
        if (val[t] > val[worst]) worst = t;
      coef[worst] = coef[m - 1];
      val[worst] = val[m - 1];
      --m;
    }
    return inf;
  };

  auto push_neighbors = [&](std::size_t idx) {
    const auto p = g.unflatten(idx);
    for (int a = 0; a < n; ++a)
      for (int dir : {-1, 1}) {
        std::array<int, 3> q = p;
        q[a] = wrap(p[a] + dir, g.points(a));
        const std::size_t qi = g.index(q[0], q[1], q[2]);
        if (state[qi] == 2) continue;
        const double cand = update(qi);
        if (cand < u[qi]) {
          u[qi] = cand;
          state[qi] = 1;
          heap.emplace(cand, qi);
        }
      }
  };

  for (std::size_t idx = 0; idx < total; ++idx)
    if (state[idx] == 2) push_neighbors(idx);
  while (!heap.empty()) {
    auto [d, idx] = heap.top();
    heap.pop();
    if (state[idx] == 2 || d > u[idx]) continue;
    state[idx] = 2;
    push_neighbors(idx);
  }
  return ScalarField(g, std::move(u));
}

}  // namespace rhflow
