#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "rhflow/entropy.hpp"
#include "rhflow/errors.hpp"

using namespace rhflow;

namespace {

Profile wave(const PeriodicGrid& g, double mean, double amp, int k, bool sine = false) {
  Profile p(g.points(0));
  for (int i = 0; i < g.points(0); ++i) {
    const double x = g.coordinate(0, i);
    p[i] = mean + amp * (sine ? std::sin(k * x) : std::cos(k * x));
  }
  return p;
}

FlowState flat_state(const PeriodicGrid& g) {
  return FlowState{0.0, ReducedMetric::flat(g), ScalarMap{Profile(g.points(0), 0.0)}};
}

FlowState coupled_state(const PeriodicGrid& g) {
  return FlowState{0.0, ReducedMetric(g, {wave(g, 1.0, 0.2, 1, true), wave(g, 1.0, 0.3, 1)}),
                   ScalarMap{wave(g, 0.0, 0.5, 1)}};
}

}  // namespace

TEST_CASE("constant f on the flat torus gives f* - n") {
  const auto g = PeriodicGrid::torus(2, {32, 32, 1});
  const double V = 4.0 * std::numbers::pi * std::numbers::pi;
  const double fstar = std::log(V) - std::log(4.0 * std::numbers::pi);
  CHECK(fstar - 2.0 == doctest::Approx(-0.8552).epsilon(1e-4));
  // Any constant projects onto f*.
  const double W = w_alpha(flat_state(g), 1.0, 1.0, ScalarField(g, 5.0));
  CHECK(std::abs(W - (fstar - 2.0)) < 1e-10);
}

TEST_CASE("projection enforces the constraint") {
  const auto g = PeriodicGrid::torus(2, {64, 32, 1});
  const auto s = coupled_state(g);
  const auto f = ScalarField::sample(g, [](double x, double y, double) {
    return 3.0 + std::sin(x) * std::cos(2.0 * y) + 0.5 * std::cos(x + y);
  });
  const auto p = make_probe(s.metric, 0.2, f);
  CHECK(std::abs(p.constraint - 1.0) < 1e-10);
  for (std::size_t i = 0; i < p.w.size(); ++i) REQUIRE(p.w[i] > 0.0);
  CHECK_THROWS_AS(make_probe(s.metric, 0.0, f), std::invalid_argument);
}

TEST_CASE("W is invariant under parabolic scaling") {
  const auto g = PeriodicGrid::torus(2, {64, 32, 1});
  const auto s = coupled_state(g);
  const auto f = ScalarField::sample(g, [](double x, double y, double) {
    return std::sin(x) * std::cos(y) + 0.3 * std::cos(2.0 * x);
  });
  const double tau = 0.3;
  const double W = w_alpha(s, 1.0, tau, f);
  for (double c : {0.25, 4.0}) {
    const FlowState sc{0.0, s.metric.scaled(c), s.map};
    CHECK(std::abs(w_alpha(sc, 1.0, c * tau, f) - W) < 1e-8);
  }
}

TEST_CASE("flat minimisation") {
  const auto g = PeriodicGrid::torus(2, {128, 64, 1});
  const auto s = flat_state(g);
  const auto small = minimize_mu(s, 1.0, 0.01);
  CHECK(small.mu <= 0.0);
  CHECK(small.mu >= -0.05);
  CHECK(small.el_residual < 1e-3);
  const auto large = minimize_mu(s, 1.0, 1.0);
  CHECK(large.mu <= -0.8552 + 1e-4);
  CHECK(large.el_residual < 1e-3);
  // The returned f satisfies the constraint.
  CHECK(std::abs(make_probe(s.metric, 0.01, small.f).constraint - 1.0) < 1e-8);
}

TEST_CASE("coupled minimisers are certified and below constant f") {
  const auto g = PeriodicGrid::torus(2, {128, 64, 1});
  const auto s = coupled_state(g);
  for (double tau : {0.03, 0.1}) {
    const auto m = minimize_mu(s, 1.0, tau);
    CHECK(m.el_residual < 1e-3);
    CHECK(m.converged);
    CHECK(m.mu <= w_alpha(s, 1.0, tau, ScalarField(g, 0.0)) + 1e-12);
    // The functional at the returned f reproduces mu.
    CHECK(std::abs(w_alpha(s, 1.0, tau, m.f) - m.mu) < 1e-9);
    // Independent EL residual in the f variable away from the tails.
    const ScalarField lap = laplacian(s.metric, m.f);
    const ScalarField grad2 = gradient_norm_sq(s.metric, gradient(m.f));
    const Profile S = coupled_quantities(s.metric, s.map, 1.0).S;
    double worst = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (m.w[i] * m.w[i] < 1e-3 * m.w.max() * m.w.max()) continue;
      const int x1 = g.unflatten(i)[0];
      const double el = tau * (2.0 * lap[i] - grad2[i] + S[x1]) + m.f[i] - 2.0 - m.mu;
      worst = std::max(worst, std::abs(el));
    }
    // Discrete chain rule differs from the w form at truncation level.
    CHECK(worst < 5e-2);
  }
}

TEST_CASE("mu on the static flat torus is constant") {
  const auto g = PeriodicGrid::torus(2, {256, 256, 1});
  const auto hist = run(flat_state(g), CouplingSchedule::constant(1.0), 0.05, 1e-2);
  const auto r = mu_monotonicity(hist, 0.06, 2e-3);
  CHECK(r.pass);
  double lo = 1e9, hi = -1e9;
  for (const auto& row : r.details["series"]) {
    lo = std::min(lo, row["mu"].get<double>());
    hi = std::max(hi, row["mu"].get<double>());
  }
  CHECK(hi - lo < 1e-6);
}

TEST_CASE("mu is nondecreasing along a coupled run") {
  const auto g = PeriodicGrid::torus(2, {64, 32, 1});
  const auto hist = run(coupled_state(g), CouplingSchedule::constant(1.0), 0.1, 1.0);
  const auto r = mu_monotonicity(hist, 0.05, 2e-3);
  CHECK(r.pass);
  CHECK(r.details["series"].size() == 8);
  CHECK(r.details["max_el_residual"].get<double>() < 1e-3);
}

TEST_CASE("monotonicity refuses a decreasing coupling") {
  const auto g = PeriodicGrid::torus(2, {32, 16, 1});
  const auto hist = run(coupled_state(g), CouplingSchedule::linear_clipped(1.0, 0.5, -1.0), 0.05, 1.0);
  const auto r = mu_monotonicity(hist, 0.05);
  CHECK(r.refused);
  CHECK_FALSE(r.pass);
}

TEST_CASE("mu curve, kernel bound and trend") {
  const auto g = PeriodicGrid::torus(2, {64, 32, 1});
  const auto hist = run(coupled_state(g), CouplingSchedule::constant(1.0), 0.2, 1.0);
  const double tau0 = minimum_tau0(g);
  const auto curve = mu_curve(hist, log_tau_grid(tau0, 0.2, 16));
  REQUIRE(curve.values.size() == 16);
  CHECK(curve.B >= 0.0);
  CHECK(curve.D_sobolev < 0.0);
  CHECK(curve.D_kernel == curve.D_sobolev);
  CHECK(mu_certificates(curve).pass);

  // Resolution floor of the trend: the flat torus at the same grid.
  double floor = 0.0;
  const auto flat = flat_state(g);
  for (double tau : curve.taus) floor = std::max(floor, std::abs(minimize_mu(flat, 1.0, tau).mu));
  const auto trend = mu_small_tau_trend(curve, floor);
  CHECK(trend.pass);

  HeatOptions opts;
  opts.dt = 5e-4;
  const auto K = solve_conjugate(hist, {32, 16, 0}, 0.2, tau0, opts);
  const auto bound = kernel_upper_bound_check(K, curve);
  CHECK(bound.pass);

  const auto sob = entropy_sobolev_inequality(curve);
  CHECK(sob.refused);

  const auto dir = std::filesystem::temp_directory_path() / "rhflow_mu_test";
  std::filesystem::create_directories(dir);
  write_mu_csv(curve, dir / "mu.csv");
  std::ifstream in(dir / "mu.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "tau,mu,el_residual,iterations");
  std::filesystem::remove_all(dir);
}

TEST_CASE("log tau grid") {
  const auto t = log_tau_grid(0.01, 0.1, 16);
  REQUIRE(t.size() == 16);
  CHECK(t.front() == 0.01);
  CHECK(t.back() == 0.1);
  CHECK(t[1] / t[0] == doctest::Approx(t[15] / t[14]));
  CHECK_THROWS(log_tau_grid(0.1, 0.01, 16));
}
