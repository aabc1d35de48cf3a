#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rhflow/errors.hpp"
#include "rhflow/scenario.hpp"

using namespace rhflow;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string l;
  std::getline(in, l);
  return l;
}

int error_line(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.line();
  }
  return -1;
}

// Coarse flat torus on which every stage finishes in seconds.
const char* kSmallFlat = R"(
[scenario]
name = small-flat
[grid]
dim = 2
points = 32 16
[flow]
T = 1.0
dt = 0.1
[kernel]
center = 16 8
dt = 2e-3
slice_every = 2
[checks]
stages = flow kernel harnack entropy lgeo
entropy_taus = 5
lgeo_per_axis = 3
[tolerances]
harnack.identity = 0.5
)";

}  // namespace

TEST_CASE("minimal flat config records every default") {
  const Scenario s = parse_config_text("[grid]\ndim = 2\npoints = 64 32\n");
  CHECK(s.dim == 2);
  CHECK(s.points == std::array<int, 3>{64, 32, 1});
  REQUIRE(s.metric.size() == 2);
  CHECK(s.metric[0].mean == 1.0);
  CHECK(s.coupling.alpha(0.5) == 1.0);
  const std::string text = to_config(s);
  for (const auto& [k, v] : default_tolerances()) CHECK(text.find(k + " = ") != std::string::npos);
  CHECK(to_config(parse_config_text(text)) == text);
}

TEST_CASE("Fourier data and comments") {
  const Scenario s = parse_config_text(R"(
[grid]   # T^2
dim = 2
points = 32 16
[metric]
a1 = 1.0
a1.sin1 = 0.2
a2 = 1
a2.cos2 = -0.1
[map]
phi.cos1 = 0.5
)");
  const PeriodicGrid g = s.grid();
  const Profile a1 = s.metric[0].sample(g);
  const Profile a2 = s.metric[1].sample(g);
  const Profile phi = s.phi.sample(g);
  for (int i = 0; i < g.points(0); ++i) {
    const double x = g.coordinate(0, i);
    CHECK(a1[i] == doctest::Approx(1.0 + 0.2 * std::sin(x)));
    CHECK(a2[i] == doctest::Approx(1.0 - 0.1 * std::cos(2.0 * x)));
    CHECK(phi[i] == doctest::Approx(0.5 * std::cos(x)));
  }
}

TEST_CASE("parse errors carry line numbers") {
  CHECK(error_line("[grid]\ndim = 2\nbogus = 1\n") == 3);
  CHECK(error_line("[grid]\n\n[nowhere]\n") == 3);
  CHECK(error_line("[flow]\nT = abc\n") == 2);
  CHECK(error_line("[grid]\npoints 64 32\n") == 2);
  CHECK(error_line("[metric]\na1.tan1 = 0.1\n") == 2);
  CHECK(error_line("dim = 2\n") == 1);
  CHECK_THROWS_AS(parse_config("/nonexistent/rhflow.cfg"), ConfigError);
}

TEST_CASE("increasing coupling is rejected as not positive non-increasing") {
  const char* text = "[coupling]\nkind = linear_clipped\nalpha0 = 1\nalpha_bar = 0.5\nslope = 0.3\n";
  try {
    parse_config_text(text);
    FAIL("accepted an increasing coupling");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("positive non-increasing") != std::string::npos);
    CHECK(e.line() == 5);
  }
  CHECK_THROWS_AS(parse_config_text("[coupling]\nalpha = -1\n"), ConfigError);
  CHECK_NOTHROW(parse_config_text("[coupling]\nkind = linear_clipped\nalpha0 = 2\nalpha_bar = 1\nslope = -1\n"));
}

TEST_CASE("validation: dimension mismatch, grid sizes, centre") {
  CHECK_THROWS_AS(parse_config_text("[grid]\ndim = 3\npoints = 32 16 16\n[metric]\na1 = 1\na2 = 1\n"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config_text("[grid]\ndim = 2\npoints = 30 15\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[grid]\ndim = 2\npoints = 32 16\n[kernel]\ncenter = 40 0\n"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config_text("[metric]\na1 = 1\na3 = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[tolerances]\nflow.nothing = 1\n"), ConfigError);
}

TEST_CASE("full T^3 config enables the sobolev checks") {
  const Scenario s = parse_config_text(R"(
[scenario]
name = t3
[grid]
dim = 3
points = 64 32 32
[metric]
a1 = 1
a2 = 1
a2.cos1 = 0.3
a3 = 1
a3.sin1 = 0.2
[map]
phi.cos1 = 0.1
[coupling]
alpha = 1
[flow]
T = 0.2
[kernel]
center = 32 16 16
dt = 5e-4
[checks]
stages = flow kernel sobolev
[tolerances]
sobolev.J = 2e-3
)");
  CHECK(s.dim == 3);
  CHECK(s.checks.count("sobolev") == 1);
  CHECK(s.checks.count("harnack") == 0);
  CHECK(s.tol("sobolev.J") == 2e-3);
  CHECK(s.tol("kernel.mass") == 1e-4);
  const Scenario t3 = builtin_scenario("t3-positive-S");
  CHECK(s.points == t3.points);
  CHECK(s.center == t3.center);
  CHECK(s.metric[1].cos.at(1) == t3.metric[1].cos.at(1));
  CHECK(s.metric[2].sin.at(1) == t3.metric[2].sin.at(1));
  CHECK(s.T == t3.T);
}

TEST_CASE("built-in scenarios validate and refine") {
  for (const auto& n : builtin_names()) CHECK_NOTHROW(validate(builtin_scenario(n)));
  CHECK_THROWS_AS(builtin_scenario("nope"), ConfigError);
  const Scenario s = builtin_scenario("t2-coupled").refined(2.0);
  CHECK(s.points == std::array<int, 3>{256, 128, 1});
  CHECK(s.center == std::array<int, 3>{128, 64, 0});
  CHECK(s.kernel_dt == doctest::Approx(1.25e-4));
}

TEST_CASE("empty check selection gives an empty passing report") {
  Scenario s = parse_config_text("[grid]\ndim = 2\npoints = 32 16\n[flow]\nT = 0.5\n[checks]\nstages =\n");
  const fs::path out = fs::temp_directory_path() / "rhflow_test_empty";
  fs::remove_all(out);
  const RunResult r = run_scenario(s, {{}, out, 1.0});
  CHECK(r.checks.empty());
  CHECK(r.exit_code == 0);
  CHECK(r.report["schema"] == 1);
  CHECK(r.report["pass"] == true);
  CHECK(fs::exists(out / "report.json"));
}

TEST_CASE("full bundle: JSON plus CSV series with headers, deterministic") {
  const Scenario s = parse_config_text(kSmallFlat);
  const fs::path a = fs::temp_directory_path() / "rhflow_test_bundle_a";
  const fs::path b = fs::temp_directory_path() / "rhflow_test_bundle_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const RunResult ra = run_scenario(s, {{}, a, 1.0});
  const RunResult rb = run_scenario(s, {{}, b, 1.0});
  for (const auto& c : ra.checks) {
    INFO(c.check << " violation " << c.max_violation << " tol " << c.tolerance << ' ' << c.note);
    CHECK(c.pass);
  }
  CHECK(ra.exit_code == 0);

  int csvs = 0;
  for (const auto& f : ra.files)
    if (f.extension() == ".csv") ++csvs;
  CHECK(csvs >= 5);
  CHECK(first_line(a / "flow.csv") == "t,alpha,inf_S,volume");
  CHECK(first_line(a / "kernel_mass.csv") == "t,tau,mass");
  CHECK(first_line(a / "rho_phi.csv") == "seed,t,rho,entropy_like");
  CHECK(first_line(a / "lyh_margins.csv") == "curve,t,tau,h,margin_h,margin_sqrt_tau_h");
  CHECK(first_line(a / "mu.csv") == "tau,mu,el_residual,iterations");
  CHECK(first_line(a / "reduced_volume.csv") == "tau,V,per_axis");

  CHECK(slurp(a / "report.json") == slurp(b / "report.json"));
  for (const auto& f : ra.files) CHECK(slurp(f) == slurp(b / f.filename()));
}

TEST_CASE("tol-scale tightens every check") {
  const Scenario s = parse_config_text("[grid]\ndim = 2\npoints = 32 16\n[flow]\nT = 0.5\n[checks]\nstages = flow\n");
  const fs::path out = fs::temp_directory_path() / "rhflow_test_tolscale";
  const RunResult r = run_scenario(s, {{}, out, 0.5});
  for (const auto& c : r.checks)
    if (c.check == "evolution_of_S") CHECK(c.tolerance == doctest::Approx(0.5 * s.tol("flow.evolS")));
}
