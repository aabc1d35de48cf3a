#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "rhflow/errors.hpp"
#include "rhflow/sobolev.hpp"

using namespace rhflow;

namespace {

Profile wave(const PeriodicGrid& g, double mean, double amp, bool sine = false) {
  Profile p(g.points(0));
  for (int i = 0; i < g.points(0); ++i) {
    const double x = g.coordinate(0, i);
    p[i] = mean + amp * (sine ? std::sin(x) : std::cos(x));
  }
  return p;
}

FlowHistory flat3(const PeriodicGrid& g, double T) {
  const FlowState s{0.0, ReducedMetric::flat(g), ScalarMap{Profile(g.points(0), 0.0)}};
  return run(s, CouplingSchedule::constant(1.0), T, 1e-1);
}

FlowHistory warped3(const PeriodicGrid& g, double T) {
  const FlowState s{0.0,
                    ReducedMetric(g, {Profile(g.points(0), 1.0), wave(g, 1.0, 0.3),
                                      wave(g, 1.0, 0.2, true)}),
                    ScalarMap{wave(g, 0.0, 0.1)}};
  return run(s, CouplingSchedule::constant(1.0), T, 1.0);
}

FlowHistory coupled2(const PeriodicGrid& g, double T) {
  const FlowState s{0.0, ReducedMetric(g, {wave(g, 1.0, 0.2, true), wave(g, 1.0, 0.3)}),
                    ScalarMap{wave(g, 0.0, 0.5)}};
  return run(s, CouplingSchedule::constant(1.0), T, 1.0);
}

}  // namespace

TEST_CASE("Sobolev constants") {
  CHECK(std::abs(talenti_constant(3) - 0.427270) < 1e-5);
  // Gamma-function form of the same constant.
  for (int n = 3; n <= 8; ++n) {
    const double K2 = std::pow(std::tgamma(n) / std::tgamma(0.5 * n), 2.0 / n) /
                      (std::numbers::pi * n * (n - 2));
    CHECK(std::abs(talenti_constant(n) - std::sqrt(K2)) < 1e-12);
    if (n > 3) CHECK(talenti_constant(n) < talenti_constant(n - 1));
  }
  CHECK(std::abs(kernel_bound_constant(3) - 0.4300) < 1e-4);
  CHECK(std::abs(heat_bound_constant(3) - std::pow(2.0 / 3.0, 1.5)) < 1e-15);
  // The Euclidean kernel sits below the uniform constant C_tilde.
  CHECK(std::pow(4.0 * std::numbers::pi, -1.5) < kernel_bound_constant(3));
  CHECK_THROWS_AS(talenti_constant(2), PreconditionViolated);
  CHECK_THROWS_AS(constant_sobolev(3, 0.0, 0.0), std::invalid_argument);
}

TEST_CASE("time-dependent bound reduces to the uniform one with A = K, B = 0 and S >= 0") {
  const auto g = PeriodicGrid::torus(3, {32, 16, 16});
  const auto h = flat3(g, 1.0);
  const auto c = constant_sobolev(3, talenti_constant(3), 0.0);
  for (double s : {0.0, 0.3}) {
    const auto ing = bound_ingredients(h, {0, 0, 0}, s, s + 0.5, 0.16);
    CHECK_FALSE(ing.envelope);
    CHECK(ing.chi(s + 0.2) == 1.0);
    const double b = sobolev_kernel_bound(ing, c);
    CHECK(std::abs(b * std::pow(0.5, 1.5) - kernel_bound_constant(3)) < 1e-10);
  }
  // t - s -> 0: the bound diverges.
  const auto a = bound_ingredients(h, {0, 0, 0}, 0.0, 0.2, 0.16);
  const auto b = bound_ingredients(h, {0, 0, 0}, 0.0, 0.02, 0.16);
  CHECK(sobolev_kernel_bound(b, c) / sobolev_kernel_bound(a, c) == doctest::Approx(std::pow(10.0, 1.5)));
}

TEST_CASE("F integral and envelope with negative inf S") {
  const auto g = PeriodicGrid::torus(2, {64, 32, 1});
  const auto h = coupled2(g, 0.1);
  const auto ing = bound_ingredients(h, {32, 16, 0}, 0.0, 0.1, minimum_tau0(g));
  REQUIRE(ing.inf_S0 < 0.0);
  CHECK(ing.envelope);
  CHECK(ing.m0 == doctest::Approx(1.0 / ing.inf_S0));
  CHECK(ing.chi(0.0) == 1.0);
  CHECK(ing.chi(0.1) > 1.0);
  // Closed form with constant A, B: F = (B/A)(tau - s) + (3n/8) ln((m0 - c tau)/(m0 - c s)).
  // F does not involve the dimension of the constants.
  const auto c = constant_sobolev(3, 0.5, 0.2);
  const double tau = 0.08;
  const double exact = 0.4 * tau + 0.75 / ing.c_n * std::log((ing.m0 - ing.c_n * tau) / ing.m0);
  CHECK(std::abs(f_integral(ing, c, tau) - exact) < 1e-6);
  // J stays below chi^{n/2}.
  const auto r = j_bound_check(h, ing, 1e-3);
  CHECK(r.pass);
  CHECK(r.details["envelope_active"].get<bool>());
}

TEST_CASE("J is conserved on a flat torus") {
  const auto g = PeriodicGrid::torus(3, {32, 16, 16});
  const auto h = flat3(g, 0.5);
  const auto ing = bound_ingredients(h, {3, 2, 5}, 0.1, 0.5, 0.16);
  for (double J : ing.J) CHECK(std::abs(J - 1.0) < 1e-6);
  const auto r = j_bound_check(h, ing, 1e-3);
  CHECK(r.pass);
  CHECK(r.details["monotone_required"].get<bool>());
}

TEST_CASE("uniform kernel bound refuses without positive S") {
  {
    const auto g = PeriodicGrid::torus(3, {32, 16, 16});
    const auto h = flat3(g, 1.0);
    const auto K = solve_conjugate(h, {16, 8, 8}, 1.0, minimum_tau0(g));
    const auto r = uniform_kernel_bound_check(h, {K});
    CHECK(r.refused);
    CHECK_FALSE(r.pass);
    // The flat kernel itself respects the constant.
    double worst = 0.0;
    for (std::size_t k = 0; k < K.taus.size(); ++k)
      worst = std::max(worst, K.H[k].max() * std::pow(K.taus[k], 1.5));
    CHECK(worst < kernel_bound_constant(3));
  }
  {
    const auto g = PeriodicGrid::torus(3, {32, 16, 16});
    const auto h = warped3(g, 0.1);
    const auto r = uniform_kernel_bound_check(h, {});
    CHECK(r.refused);
    CHECK(r.details["inf_S0"].get<double>() < 0.0);
  }
  const auto g2 = PeriodicGrid::torus(2, {32, 16, 1});
  CHECK(uniform_kernel_bound_check(coupled2(g2, 0.05), {}).refused);
}

TEST_CASE("time-dependent bound on the flat torus with fitted constants") {
  const auto g = PeriodicGrid::torus(3, {32, 16, 16});
  const auto h = flat3(g, 1.0);
  FitOptions fo;
  fo.test_functions = 16;
  const auto c = fit_sobolev_constants(h, fo);
  CHECK(c.source == "heuristic");
  REQUIRE(!c.B.empty());
  for (double b : c.B) CHECK(b > 0.0);
  for (double a : c.A) CHECK(a == doctest::Approx(std::pow(talenti_constant(3), 2)));
  // Same seed, same constants.
  const auto c2 = fit_sobolev_constants(h, fo);
  CHECK(c2.B == c.B);

  const auto K = solve_conjugate(h, {16, 8, 8}, 1.0, minimum_tau0(g));
  const auto r = sobolev_kernel_bound_check(h, K, c, {0.2, 0.3, 0.4, 0.5, 0.7, 0.8});
  CHECK(r.pass);
  CHECK(r.details["pairs"].size() == 6);
  CHECK(r.details["pairs"][0]["constants_source"] == "heuristic");
  CHECK(r.note.find("HEURISTIC") != std::string::npos);

  const auto eb = kernel_energy_backward(h, K);
  CHECK(eb.values.size() == K.taus.size());
  // Spreading lowers the L2 energy.
  CHECK(eb.values.back() < eb.values.front());
  HeatOptions ho;
  const auto F = solve_forward(h, gaussian_seed(h.at(0.0).metric, {16, 8, 8}, 0.16), 0.0, 0.5, ho);
  const auto ef = kernel_energy_forward(h, F);
  for (std::size_t k = 1; k < ef.values.size(); ++k) CHECK(ef.values[k] <= ef.values[k - 1] + 1e-14);
}

TEST_CASE("J CSV") {
  const auto g = PeriodicGrid::torus(3, {32, 16, 16});
  const auto h = flat3(g, 0.5);
  const auto ing = bound_ingredients(h, {0, 0, 0}, 0.0, 0.5, 0.16);
  const auto dir = std::filesystem::temp_directory_path() / "rhflow_sobolev_test";
  std::filesystem::create_directories(dir);
  write_j_csv(ing, dir / "J.csv");
  std::ifstream in(dir / "J.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "t,J,chi_bound");
  std::filesystem::remove_all(dir);
}
