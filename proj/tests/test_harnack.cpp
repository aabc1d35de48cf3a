#include <doctest.h>

#include <cmath>
#include <numbers>

#include "gaussian_oracle.hpp"
#include "rhflow/errors.hpp"
#include "rhflow/harnack.hpp"

using namespace rhflow;

namespace {

FlowHistory flat_history(const PeriodicGrid& g, double T) {
  return run(FlowState{0.0, ReducedMetric::flat(g), ScalarMap{Profile(g.points(0), 0.0)}},
             CouplingSchedule::constant(1.0), T, 1e-2);
}

Profile wave(const PeriodicGrid& g, double mean, double amp, int k, bool sine = false) {
  Profile p(g.points(0));
  for (int i = 0; i < g.points(0); ++i) {
    const double x = g.coordinate(0, i);
    p[i] = mean + amp * (sine ? std::sin(k * x) : std::cos(k * x));
  }
  return p;
}

FlowHistory coupled_history(int n1, double T) {
  const auto g = PeriodicGrid::torus(2, {n1, n1 / 2, 1});
  const FlowState s{0.0, ReducedMetric(g, {wave(g, 1.0, 0.2, 1, true), wave(g, 1.0, 0.3, 1)}),
                    ScalarMap{wave(g, 0.0, 0.5, 1)}};
  return run(s, CouplingSchedule::constant(1.0), T, 1.0, 1);
}

// Kernel slices filled with the flat image sum.
KernelSolution oracle_kernel(const PeriodicGrid& g, std::array<int, 3> c, double T, double tau0,
                             double dtau, int count) {
  KernelSolution K;
  K.center = c;
  K.T = T;
  K.tau0 = tau0;
  K.dim = g.dim();
  const double L[3] = {g.length(0), g.length(1), g.length(2)};
  for (int m = 0; m < count; ++m) {
    const double tau = tau0 + m * dtau;
    ScalarField H(g);
    for (std::size_t p = 0; p < H.size(); ++p) {
      const auto ix = g.unflatten(p);
      double dx[3];
      for (int a = 0; a < g.dim(); ++a) dx[a] = (ix[a] - c[a]) * g.spacing(a);
      H[p] = oracle::periodized_gaussian(g.dim(), dx, L, tau);
    }
    K.times.push_back(T - tau);
    K.taus.push_back(tau);
    K.mass.push_back(1.0);
    K.H.push_back(std::move(H));
  }
  return K;
}

}  // namespace

TEST_CASE("exact flat kernel has vanishing v away from the cut locus") {
  const auto g = PeriodicGrid::torus(2, {128, 64, 1});
  const auto hist = flat_history(g, 0.1);
  const auto K = oracle_kernel(g, {64, 32, 0}, 0.1, 0.01, 0.005, 8);
  for (std::size_t k : harnack_slices(K)) {
    const auto v = compute_v(K, hist, k);
    CHECK(v.max_ratio < 1e-9);
    double worst = 0.0;
    for (std::size_t p = 0; p < v.v.size(); ++p) {
      const auto ix = g.unflatten(p);
      const double dx = (ix[0] - 64) * g.spacing(0), dy = (ix[1] - 32) * g.spacing(1);
      if (dx * dx + dy * dy <= 4.0 * v.tau) worst = std::max(worst, std::abs(v.v[p]) / K.H[k][p]);
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("computed flat kernel keeps v within 1e-2 H near the centre") {
  const auto g = PeriodicGrid::torus(2, {128, 64, 1});
  const auto hist = flat_history(g, 0.1);
  const auto K = solve_conjugate(hist, {64, 32, 0}, 0.1, minimum_tau0(g));
  double worst = 0.0;
  for (std::size_t k : harnack_slices(K)) {
    const auto v = compute_v(K, hist, k);
    CHECK(v.masked_fraction >= 0.0);
    for (std::size_t p = 0; p < v.v.size(); ++p) {
      if (!v.valid[p]) continue;
      CHECK(std::isfinite(v.v[p]));
      const auto ix = g.unflatten(p);
      const double dx = (ix[0] - 64) * g.spacing(0), dy = (ix[1] - 32) * g.spacing(1);
      if (dx * dx + dy * dy <= 4.0 * v.tau) worst = std::max(worst, std::abs(v.v[p]) / K.H[k][p]);
    }
  }
  MESSAGE("flat near-centre |v|/H " << worst);
  CHECK(worst <= 1e-2);
}

TEST_CASE("flat evolution identity holds on the exact kernel") {
  const auto g = PeriodicGrid::torus(2, {128, 64, 1});
  const auto hist = flat_history(g, 0.1);
  const auto K = oracle_kernel(g, {64, 32, 0}, 0.1, 0.01, 0.001, 30);
  const auto r = boxstar_v_residual(K, hist, 1e-6);
  MESSAGE("flat identity residual " << r.max_violation);
  CHECK(r.pass);
  CHECK(r.details["max_rhs"].get<double>() <= 1e-8);
}

TEST_CASE("static points on the flat torus satisfy the LYH inequality with the closed-form margin") {
  const auto g = PeriodicGrid::torus(2, {128, 64, 1});
  const auto hist = flat_history(g, 0.1);
  const auto K = oracle_kernel(g, {64, 32, 0}, 0.1, 0.01, 0.001, 60);
  const auto c = constant_curve(K, {72, 32, 0}, "offset");
  const auto r = lyh_along_curve(K, hist, {c}, 1e-6);
  CHECK(r.pass);
  const double d = 8 * g.spacing(0);
  for (const auto& s : r.details["curves"][0]["samples"]) {
    const double tau = s["tau"].get<double>();
    // -d^2/4tau^2 <= -d^2/8tau^2; the centred difference of 1/tau adds 2 (dtau/tau)^2
    CHECK(s["margin_h"].get<double>() == doctest::Approx(d * d / (8 * tau * tau)).epsilon(1e-2));
  }
}

TEST_CASE("gradient estimate holds on the exact flat kernel and for constant q") {
  const auto g = PeriodicGrid::torus(2, {64, 32, 1});
  const auto hist = flat_history(g, 0.2);
  const auto K = oracle_kernel(g, {32, 16, 0}, 0.2, 0.04, 0.01, 12);
  const auto r = gradient_estimate_check(K, hist, 0.0);
  CHECK(r.pass);
  CHECK(r.details["k2_floored"].get<bool>());

  KernelSolution C = K;
  for (auto& H : C.H) H = ScalarField(g, 1.0 / (4.0 * std::numbers::pi * std::numbers::pi));
  const auto rc = gradient_estimate_check(C, hist, 0.0);
  CHECK(rc.pass);
}

TEST_CASE("rho vanishes on the flat torus") {
  const auto g = PeriodicGrid::torus(2, {128, 64, 1});
  const auto hist = flat_history(g, 0.1);
  const auto K = solve_conjugate(hist, {64, 32, 0}, 0.1, minimum_tau0(g));
  const auto r = rho_phi_report(K, hist, {{"one", ScalarField(g, 1.0)}}, 1e-3, 1e-3);
  CHECK(r.pass);
  CHECK(r.details["terminal_abs_rho"].get<double>() < 1e-3);
}

TEST_CASE("all-masked slices are refused") {
  const auto g = PeriodicGrid::torus(2, {32, 16, 1});
  const auto hist = flat_history(g, 0.1);
  auto K = oracle_kernel(g, {16, 8, 0}, 0.1, 0.02, 0.01, 3);
  K.H[2] = ScalarField(g, -1.0);
  CHECK_THROWS_AS(compute_v(K, hist, 2), PreconditionViolated);
}

TEST_CASE("coupled Harnack checks converge under refinement") {
  const double T = 0.2;
  auto coarse_hist = coupled_history(64, T);
  auto fine_hist = coupled_history(128, T);
  const double tau0 = minimum_tau0(coarse_hist.grid());
  HeatOptions oc;
  oc.dt = 1e-3;
  oc.slice_every = 2;
  oc.seed_levels = 1;
  HeatOptions of = oc;
  of.dt = 0.5 * oc.dt;
  of.slice_every = 4;
  const auto Kc = solve_conjugate(coarse_hist, {32, 16, 0}, T, tau0, oc);
  const auto Kf = solve_conjugate(fine_hist, {64, 32, 0}, T, tau0, of);

  const auto vc = harnack_v_check(Kc, coarse_hist, 1.0);
  const auto vf = harnack_v_check(Kf, fine_hist, 1.0);
  const auto rv = refinement_check("harnack_v", vc, vf, 1e-6);
  MESSAGE("max v/H coarse " << vc.details["max_v_over_H"].get<double>() << " fine "
                            << vf.details["max_v_over_H"].get<double>());
  CHECK(rv.pass);

  const auto bc = boxstar_v_residual(Kc, coarse_hist, 1.0);
  const auto bf = boxstar_v_residual(Kf, fine_hist, 1.0);
  MESSAGE("identity residual coarse " << bc.max_violation << " fine " << bf.max_violation
                                      << " (other forms " << bf.details["residual_statement"].get<double>()
                                      << ", " << bf.details["residual_proof"].get<double>() << ")");
  CHECK(observed_order(bc.max_violation, bf.max_violation) >= 1.0);
  CHECK(bf.details["max_rhs"].get<double>() <= 1e-8);

  const auto rho = rho_phi_report(
      Kf, fine_hist,
      {{"one", ScalarField(fine_hist.grid(), 1.0)},
       {"bump", ScalarField::sample(fine_hist.grid(),
                                    [](double x, double y, double) { return 2.0 + std::cos(x + 0.4) * std::cos(y); })}},
      1e-3, 5e-3);
  MESSAGE("rho " << rho.details.dump());
  CHECK(rho.pass);
}
