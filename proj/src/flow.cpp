#include "rhflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "rhflow/errors.hpp"

namespace rhflow {

CouplingSchedule CouplingSchedule::constant(double alpha) {
  CouplingSchedule s;
  s.kind = Kind::constant;
  s.alpha0 = alpha;
  s.alpha_bar = alpha;
  return s;
}

CouplingSchedule CouplingSchedule::linear_clipped(double alpha0, double alpha_bar, double slope) {
  CouplingSchedule s;
  s.kind = Kind::linear_clipped;
  s.alpha0 = alpha0;
  s.alpha_bar = alpha_bar;
  s.slope = slope;
  return s;
}

double CouplingSchedule::alpha(double t) const {
  if (kind == Kind::constant) return alpha0;
  return std::max(alpha_bar, alpha0 + slope * t);
}

double CouplingSchedule::alpha_prime(double t) const {
  if (kind == Kind::constant) return 0.0;
  return alpha0 + slope * t > alpha_bar ? slope : 0.0;
}

void CouplingSchedule::validate() const {
  if (kind == Kind::constant) {
    if (alpha0 < 0.0) throw PreconditionViolated("coupling must be nonnegative");
    return;
  }
  if (slope > 0.0)
    throw PreconditionViolated("coupling must be a positive non-increasing function of time");
  if (!(alpha_bar > 0.0) || alpha0 < alpha_bar)
    throw PreconditionViolated("coupling needs 0 < alpha_bar <= alpha0");
}

FlowHistory::FlowHistory(std::vector<FlowState> snapshots, CouplingSchedule schedule)
    : snaps_(std::move(snapshots)), schedule_(schedule) {
  if (snaps_.empty()) throw std::invalid_argument("history needs at least one snapshot");
  for (std::size_t i = 1; i < snaps_.size(); ++i)
    if (!(snaps_[i].t > snaps_[i - 1].t))
      throw std::invalid_argument("snapshot times must increase");
}

FlowState FlowHistory::at(double t) const {
  const double T = terminal_time();
  const double eps = 1e-12 * std::max(1.0, T);
  if (t < snaps_.front().t - eps || t > T + eps)
    throw std::out_of_range("time outside the flow history");
  if (snaps_.size() == 1) return snaps_.front();
  t = std::clamp(t, snaps_.front().t, T);
  auto it = std::upper_bound(snaps_.begin(), snaps_.end(), t,
                             [](double v, const FlowState& s) { return v < s.t; });
  if (it == snaps_.end()) return snaps_.back();
  if (it == snaps_.begin()) return snaps_.front();
  const FlowState& b = *it;
  const FlowState& a = *(it - 1);
  if (t == a.t) return a;
  const double theta = (t - a.t) / (b.t - a.t);
  std::vector<Profile> coeffs = a.metric.coefficients();
  for (std::size_t i = 0; i < coeffs.size(); ++i)
    for (std::size_t x = 0; x < coeffs[i].size(); ++x)
      coeffs[i][x] += theta * (b.metric.a(static_cast<int>(i))[x] - coeffs[i][x]);
  ScalarMap m = a.map;
  for (std::size_t x = 0; x < m.phi.size(); ++x) m.phi[x] += theta * (b.map.phi[x] - m.phi[x]);
  return FlowState{t, ReducedMetric(a.metric.grid(), std::move(coeffs)), std::move(m)};
}

CoupledQuantities FlowHistory::quantities(double t) const {
  const FlowState s = at(t);
  return coupled_quantities(s.metric, s.map, schedule_.alpha(t));
}

double cfl_limit(const FlowState& state) {
  const double h = state.metric.grid().spacing(0);
  const Curvature c = curvature(state.metric);
  double ric = 0.0;
  for (int i = 0; i < state.metric.dim(); ++i)
    for (int x = 0; x < state.metric.n1(); ++x)
      ric = std::max(ric, std::abs(c.ric[i][x] / state.metric.a(i)[x]));
  return 0.2 * h * h * state.metric.min_coefficient() / std::max(1.0, ric);
}

FlowRate flow_rate(const FlowState& state, double alpha) {
  const Curvature c = curvature(state.metric);
  const int n = state.metric.dim();
  FlowRate r;
  r.da.resize(n);
  for (int i = 0; i < n; ++i) {
    r.da[i] = c.ric[i];
    for (double& v : r.da[i]) v *= -2.0;
  }
  if (alpha != 0.0) {
    const Profile dphi = periodic_derivative(state.map.phi, state.metric.grid().spacing(0), 1);
    for (std::size_t x = 0; x < dphi.size(); ++x) r.da[0][x] += 2.0 * alpha * dphi[x] * dphi[x];
  }
  r.dphi = laplacian_profile(state.metric, state.map.phi);
  return r;
}

namespace {

FlowState advance(const FlowState& base, const FlowRate& r, double dt, double t_new) {
  std::vector<Profile> a = base.metric.coefficients();
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t x = 0; x < a[i].size(); ++x) {
      a[i][x] += dt * r.da[i][x];
      if (!std::isfinite(a[i][x])) throw NumericalFailure("non-finite metric coefficient", t_new);
      if (!(a[i][x] > 0.0)) throw NumericalFailure("metric coefficient became non-positive", t_new);
    }
  ScalarMap m = base.map;
  for (std::size_t x = 0; x < m.phi.size(); ++x) {
    m.phi[x] += dt * r.dphi[x];
    if (!std::isfinite(m.phi[x])) throw NumericalFailure("non-finite map value", t_new);
  }
  return FlowState{t_new, ReducedMetric(base.metric.grid(), std::move(a)), std::move(m)};
}

}  // namespace

FlowState step(const FlowState& state, const CouplingSchedule& schedule, double dt) {
  const double t = state.t;
  const FlowRate k1 = flow_rate(state, schedule.alpha(t));
  const FlowState s2 = advance(state, k1, 0.5 * dt, t + 0.5 * dt);
  const FlowRate k2 = flow_rate(s2, schedule.alpha(t + 0.5 * dt));
  const FlowState s3 = advance(state, k2, 0.5 * dt, t + 0.5 * dt);
  const FlowRate k3 = flow_rate(s3, schedule.alpha(t + 0.5 * dt));
  const FlowState s4 = advance(state, k3, dt, t + dt);
  const FlowRate k4 = flow_rate(s4, schedule.alpha(t + dt));
  FlowRate sum = k1;
  for (std::size_t i = 0; i < sum.da.size(); ++i)
    for (std::size_t x = 0; x < sum.da[i].size(); ++x)
      sum.da[i][x] = (k1.da[i][x] + 2.0 * k2.da[i][x] + 2.0 * k3.da[i][x] + k4.da[i][x]) / 6.0;
  for (std::size_t x = 0; x < sum.dphi.size(); ++x)
    sum.dphi[x] = (k1.dphi[x] + 2.0 * k2.dphi[x] + 2.0 * k3.dphi[x] + k4.dphi[x]) / 6.0;
  return advance(state, sum, dt, t + dt);
}

FlowHistory run(const FlowState& initial, const CouplingSchedule& schedule, double T, double dt,
                int snapshot_every) {
  schedule.validate();
  if (T < 0.0) throw std::invalid_argument("terminal time must be nonnegative");
  if (snapshot_every < 1) throw std::invalid_argument("snapshot_every must be positive");
  FlowState s = initial;
  s.t = 0.0;
  std::vector<FlowState> snaps{s};
  if (T == 0.0) return FlowHistory(std::move(snaps), schedule);
  dt = std::min(dt, cfl_limit(initial));
  const long blocks = static_cast<long>(std::ceil(T / (dt * snapshot_every) - 1e-9));
  const long steps = blocks * snapshot_every;
  const double h = T / static_cast<double>(steps);
  try {
    for (long k = 1; k <= steps; ++k) {
      s = step(s, schedule, h);
      s.t = k * h;
      if (k % snapshot_every == 0) snaps.push_back(s);
    }
  } catch (const NumericalFailure& e) {
    FlowHistory partial(std::move(snaps), schedule);
    partial.failure_time = e.time();
    partial.failure_reason = e.what();
    return partial;
  }
  return FlowHistory(std::move(snaps), schedule);
}

CheckReport evolS_residual(const FlowHistory& history, double tolerance) {
  const auto& snaps = history.snapshots();
  if (snaps.size() < 3) throw std::invalid_argument("evolution check needs at least 3 snapshots");
  CheckReport r;
  r.check = "evolution_of_S";
  r.tolerance = tolerance;
  const auto& sch = history.schedule();
  std::vector<CoupledQuantities> q;
  q.reserve(snaps.size());
  for (const auto& s : snaps) q.push_back(coupled_quantities(s.metric, s.map, sch.alpha(s.t)));
  double worst = 0.0;
  double worst_t = 0.0;
  for (std::size_t k = 1; k + 1 < snaps.size(); ++k) {
    const double dt = snaps[k + 1].t - snaps[k - 1].t;
    const auto& m = snaps[k].metric;
    const Profile lapS = laplacian_profile(m, q[k].S);
    const Profile sij = sij_norm_sq(m, q[k]);
    const double al = sch.alpha(snaps[k].t);
    const double alp = sch.alpha_prime(snaps[k].t);
    for (int x = 0; x < m.n1(); ++x) {
      const double lhs = (q[k + 1].S[x] - q[k - 1].S[x]) / dt;
      const double tau = q[k].tension[x];
      const double rhs = lapS[x] + 2.0 * al * tau * tau + 2.0 * sij[x] - alp * q[k].energy[x];
      const double res = std::abs(lhs - rhs);
      if (res > worst) {
        worst = res;
        worst_t = snaps[k].t;
      }
    }
  }
  r.max_violation = worst;
  r.slice_time = worst_t;
  r.pass = worst <= tolerance;
  return r;
}

CheckReport volume_identity(const FlowHistory& history, double tolerance) {
  const auto& snaps = history.snapshots();
  if (snaps.size() < 3) throw std::invalid_argument("volume check needs at least 3 snapshots");
  CheckReport r;
  r.check = "volume_identity";
  r.tolerance = tolerance;
  const auto& sch = history.schedule();
  double worst = 0.0, worst_t = 0.0;
  for (std::size_t k = 1; k + 1 < snaps.size(); ++k) {
    const double dV = (snaps[k + 1].metric.volume() - snaps[k - 1].metric.volume()) /
                      (snaps[k + 1].t - snaps[k - 1].t);
    const auto q = coupled_quantities(snaps[k].metric, snaps[k].map, sch.alpha(snaps[k].t));
    const Profile w = snaps[k].metric.sqrt_g();
    double intS = 0.0;
    for (int x = 0; x < snaps[k].metric.n1(); ++x) intS += q.S[x] * w[x];
    intS *= snaps[k].metric.grid().row_size() * snaps[k].metric.grid().cell_volume();
    const double res = std::abs(dV + intS);
    if (res > worst) {
      worst = res;
      worst_t = snaps[k].t;
    }
  }
  r.max_violation = worst;
  r.slice_time = worst_t;
  r.pass = worst <= tolerance;
  return r;
}

double s_envelope(double s0, int n, double t) {
  if (s0 == 0.0) return 0.0;
  const double cn = 2.0 / n;
  const double denom = 1.0 / s0 - cn * t;
  if (s0 > 0.0 && denom <= 0.0) return 0.0;
  return 1.0 / denom;
}

CheckReport s_min_monotonicity(const FlowHistory& history, double tolerance) {
  CheckReport r;
  r.check = "S_lower_envelope";
  r.tolerance = tolerance;
  const auto& snaps = history.snapshots();
  const int n = history.dim();
  const auto& sch = history.schedule();
  auto inf_S = [&](const FlowState& s) {
    const auto q = coupled_quantities(s.metric, s.map, sch.alpha(s.t));
    return *std::min_element(q.S.begin(), q.S.end());
  };
  const double s0 = inf_S(snaps.front());
  double worst = -std::numeric_limits<double>::infinity();
  double worst_t = 0.0;
  double prev = s0;
  double monotone_drop = 0.0;
  nlohmann::json series = nlohmann::json::array();
  for (const auto& s : snaps) {
    const double m = inf_S(s);
    const double env = s_envelope(s0, n, s.t);
    const double viol = env - m;
    if (viol > worst) {
      worst = viol;
      worst_t = s.t;
    }
    if (s0 >= 0.0) monotone_drop = std::max(monotone_drop, prev - m);
    prev = m;
    series.push_back({{"t", s.t}, {"inf_S", m}, {"envelope", env}});
  }
  r.max_violation = std::max(worst, monotone_drop);
  r.slice_time = worst_t;
  r.pass = r.max_violation <= tolerance;
  r.details["inf_S0"] = s0;
  r.details["m0"] = s0 != 0.0 ? nlohmann::json(1.0 / s0) : nlohmann::json(nullptr);
  r.details["series"] = series;
  return r;
}

std::vector<Profile> probe_fields(const PeriodicGrid& grid) {
  const int N = grid.points(0);
  std::vector<Profile> out(4, Profile(N));
  for (int i = 0; i < N; ++i) {
    const double x = grid.coordinate(0, i) * 2.0 * std::numbers::pi / grid.length(0);
    out[0][i] = 1.0;
    out[1][i] = std::cos(x);
    out[2][i] = 2.0 * std::sin(x) - 0.5;
    out[3][i] = std::sin(2.0 * x) + 0.3 * std::cos(3.0 * x);
  }
  return out;
}

CheckReport d_nonnegativity(const FlowHistory& history, double tolerance) {
  CheckReport r;
  r.check = "D_nonnegative";
  r.tolerance = tolerance;
  const auto probes = probe_fields(history.grid());
  const auto& sch = history.schedule();
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& s : history.snapshots())
    for (const auto& X : probes) {
      const auto b = bianchi_residual(s.metric, s.map, sch.alpha(s.t), sch.alpha_prime(s.t), X);
      const double m = *std::min_element(b.D.begin(), b.D.end());
      if (-m > worst) {
        worst = -m;
        r.slice_time = s.t;
      }
    }
  r.max_violation = worst;
  r.pass = worst <= tolerance;
  return r;
}

}  // namespace rhflow
