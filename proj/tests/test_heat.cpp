#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "gaussian_oracle.hpp"
#include "rhflow/errors.hpp"
#include "rhflow/field_io.hpp"
#include "rhflow/heat.hpp"

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

// Worst relative error against the flat image sum over points within
// 2 sqrt(tau) of the centre.
double flat_error(const KernelSolution& K, std::size_t k) {
  const auto& g = K.H[k].grid();
  const double L[3] = {g.length(0), g.length(1), g.length(2)};
  const double tau = K.taus[k];
  double worst = 0.0;
  for (std::size_t p = 0; p < K.H[k].size(); ++p) {
    const auto ix = g.unflatten(p);
    double dx[3];
    double r2 = 0.0;
    for (int a = 0; a < g.dim(); ++a) {
      dx[a] = (ix[a] - K.center[a]) * g.spacing(a);
      r2 += dx[a] * dx[a];
    }
    if (r2 > 4.0 * tau) continue;
    const double ref = oracle::periodized_gaussian(g.dim(), dx, L, tau);
    worst = std::max(worst, std::abs(K.H[k][p] - ref) / ref);
  }
  return worst;
}

}  // namespace

TEST_CASE("flat conjugate kernel matches the image sum") {
  const auto g = PeriodicGrid::torus(2, {128, 64, 1});
  const auto hist = flat_history(g, 0.3);
  const auto K = solve_conjugate(hist, {64, 32, 0}, 0.3, 0.01);
  double worst = 0.0;
  for (std::size_t k = 1; k < K.slices(); ++k) worst = std::max(worst, flat_error(K, k));
  MESSAGE("flat kernel worst relative error " << worst);
  CHECK(worst < 1e-3);
  CHECK(mass_conservation(K).pass);
  CHECK(K.times.front() == doctest::Approx(0.29));
  CHECK(K.times.back() == doctest::Approx(0.0));
}

TEST_CASE("flat kernel on T3 matches the image sum") {
  const auto g = PeriodicGrid::torus(3, {64, 32, 32});
  const auto hist = flat_history(g, 0.2);
  HeatOptions o;
  o.dt = 1e-3;
  const auto K = solve_conjugate(hist, {32, 16, 16}, 0.2, 0.04, o);
  const double err = flat_error(K, K.slices() - 1);
  MESSAGE("T3 flat kernel relative error " << err);
  CHECK(err < 1e-3);
}

TEST_CASE("constant data stays constant under the forward flow") {
  auto hist = coupled_history(64, 0.1);
  const ScalarField c(hist.grid(), 2.5);
  const auto F = solve_forward(hist, c, 0.0, 0.1);
  double dev = 0.0;
  for (const auto& u : F.u)
    for (std::size_t p = 0; p < u.size(); ++p) dev = std::max(dev, std::abs(u[p] - 2.5));
  CHECK(dev < 1e-12);
}

TEST_CASE("forward solution obeys the maximum principle") {
  auto hist = coupled_history(64, 0.1);
  const auto& g = hist.grid();
  const auto u0 = ScalarField::sample(g, [](double x, double y, double) {
    return std::sin(x) * std::cos(2 * y) + 0.3 * std::cos(3 * x);
  });
  const auto F = solve_forward(hist, u0, 0.0, 0.1);
  for (const auto& u : F.u) {
    CHECK(u.max() <= u0.max() + 1e-10);
    CHECK(u.min() >= u0.min() - 1e-10);
  }
}

TEST_CASE("coupled conjugate kernel conserves mass") {
  auto hist = coupled_history(128, 0.2);
  const auto K = solve_conjugate(hist, {40, 20, 0}, 0.2, 0.01);
  const auto r = mass_conservation(K);
  MESSAGE("coupled mass drift " << r.max_violation);
  CHECK(r.pass);
  // The fourth-order stencil is not monotone; the far tail dips slightly below zero.
  for (const auto& H : K.H) CHECK(H.min() > -1e-7 * H.max());
}

TEST_CASE("flat semigroup and duality") {
  const auto g = PeriodicGrid::torus(2, {128, 64, 1});
  const auto hist = flat_history(g, 0.3);
  HeatOptions o;
  o.slice_every = 1;
  const auto K = solve_conjugate(hist, {64, 32, 0}, 0.3, 0.01, o);
  const std::vector<KernelPropertySample> samples{{{50, 30, 0}, 0.11, {0.11, 0.2, 0.25}},
                                                  {{70, 40, 0}, 0.06, {0.06, 0.15}}};
  const auto r = kernel_properties(hist, K, samples, 0.01, 1e-3, 1e-3, o);
  MESSAGE("flat semigroup " << r.details["semigroup_max_relative"].get<double>() << " duality "
                            << r.details["duality_max_relative"].get<double>());
  CHECK(r.pass);
}

TEST_CASE("coupled semigroup and duality") {
  auto hist = coupled_history(128, 0.3);
  HeatOptions o;
  o.slice_every = 1;
  const auto K = solve_conjugate(hist, {64, 32, 0}, 0.3, 0.01, o);
  const std::vector<KernelPropertySample> samples{{{50, 30, 0}, 0.11, {0.11, 0.2, 0.25}}};
  const auto r = kernel_properties(hist, K, samples, 0.01, 0.02, 0.02, o);
  MESSAGE("coupled semigroup " << r.details["semigroup_max_relative"].get<double>() << " duality "
                               << r.details["duality_max_relative"].get<double>());
  CHECK(r.pass);
}

TEST_CASE("mode solver agrees with the explicit reference") {
  auto hist = coupled_history(64, 0.2);
  HeatOptions o;
  o.dt = 1e-4;
  const auto K = solve_conjugate(hist, {32, 16, 0}, 0.2, 0.04, o);
  const auto E = solve_conjugate_explicit(hist, {32, 16, 0}, 0.2, 0.04, K.taus.back());
  const double diff = (K.H.back() - E).max_abs() / E.max_abs();
  MESSAGE("mode vs explicit " << diff);
  CHECK(diff < 1e-3);
}

TEST_CASE("short-time asymptotics near the centre") {
  auto hist = coupled_history(128, 0.2);
  HeatOptions o;
  o.slice_every = 1;
  const double tau0 = minimum_tau0(hist.grid());
  const auto K = solve_conjugate(hist, {40, 20, 0}, 0.2, tau0, o);
  // Leading term (4 pi tau)^{-n/2} at the centre.
  for (double want : {2.0 * tau0, 4.0 * tau0}) {
    const std::size_t k = K.nearest_slice(0.2 - want);
    const double tau = K.taus[k];
    const double lead = 1.0 / (4.0 * std::numbers::pi * tau);
    const double ratio = K.H[k].at(40, 20) / lead;
    MESSAGE("tau " << tau << " ratio " << ratio);
    CHECK(std::abs(ratio - 1.0) < 0.05);
  }
}

TEST_CASE("narrow seeds and short intervals are refused") {
  const auto g = PeriodicGrid::torus(2, {64, 32, 1});
  const auto hist = flat_history(g, 0.1);
  CHECK_THROWS_AS(solve_conjugate(hist, {0, 0, 0}, 0.1, 1e-4), PreconditionViolated);
  CHECK_THROWS_AS(solve_conjugate(hist, {0, 0, 0}, 0.1, 0.04), PreconditionViolated);
}

TEST_CASE("kernel export writes an index and slices") {
  const auto g = PeriodicGrid::torus(2, {64, 32, 1});
  const auto hist = flat_history(g, 0.2);
  HeatOptions o;
  o.slice_every = 40;
  const auto K = solve_conjugate(hist, {0, 0, 0}, 0.2, 0.04, o);
  const auto dir = std::filesystem::temp_directory_path() / "rhflow_kernel_export";
  std::filesystem::remove_all(dir);
  export_kernel(K, dir);
  CHECK(std::filesystem::exists(dir / "index.json"));
  const auto back = read_field(dir / "H_1.bin");
  CHECK((back - K.H[1]).max_abs() == 0.0);
}

TEST_CASE("conjugate tau nodes are graded then uniform") {
  HeatOptions o;
  o.dt = 1e-3;
  o.grading_tau = 0.05;
  const auto nodes = conjugate_tau_nodes(0.01, 0.2, o);
  CHECK(nodes.front() == 0.01);
  CHECK(nodes.back() == doctest::Approx(0.2).epsilon(1e-14));
  for (std::size_t k = 1; k < nodes.size(); ++k) {
    const double step = nodes[k] - nodes[k - 1];
    CHECK(step > 0.0);
    CHECK(step <= o.dt * std::min(1.0, nodes[k - 1] / o.grading_tau) * (1.0 + 1e-9));
    if (nodes[k - 1] >= o.grading_tau) CHECK(step == doctest::Approx(o.dt));
  }
}

TEST_CASE("nested seed reproduces the flat kernel") {
  const auto g = PeriodicGrid::torus(2, {64, 32, 1});
  const auto hist = flat_history(g, 0.3);
  HeatOptions o;
  o.seed_levels = 1;
  const auto K = solve_conjugate(hist, {32, 16, 0}, 0.3, 0.04, o);
  CHECK(K.seed_levels == 1);
  const double err = flat_error(K, K.slices() - 1);
  MESSAGE("nested seed flat error " << err);
  CHECK(err < 1e-3);
  CHECK(mass_conservation(K).pass);
}
