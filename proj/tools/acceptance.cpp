#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>

#include "rhflow/harnack.hpp"
#include "rhflow/lgeodesic.hpp"
#include "rhflow/scenario.hpp"
#include "rhflow/sobolev.hpp"

using namespace rhflow;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kOracleRel = 1e-3;        // kernel vs image sum near the centre
constexpr double kFlatVOverH = 1e-2;
constexpr double kFlatEllRel = 2e-2;
constexpr double kFlatSeconds = 60.0;
constexpr double kVShrink = 2.0;
constexpr double kRefineSeconds = 600.0;
constexpr double kIdentityOrder = 1.0;
constexpr double kRhsSign = 1e-8;
constexpr double kLyhFloor = 1e-3;
constexpr int kLyhProbes = 5;
constexpr double kEvolOrder = 2.0;
constexpr double kWScaling = 1e-8;
constexpr double kMuMonotone = 2e-3;
constexpr double kElResidual = 1e-3;
constexpr double kMuTrend = 1e-4;
constexpr double kKernelBound = 1e-3;
constexpr double kLgeoBounds = 1e-6;
constexpr double kHEll = 1e-2;
constexpr double kEnvelope = 5e-3;
constexpr double kJBound = 1e-3;
constexpr double kUniformBound = 1e-3;
constexpr double kTalenti = 1e-5;
constexpr double kTalentiQuoted = 0.42727;
constexpr double kEntropySobolev = 1e-3;
constexpr double kMass = 1e-4;
constexpr double kSemigroupFlat = 1e-3;
constexpr double kSemigroupCoupled = 2e-2;

struct Outcome {
  bool pass = false;
  std::string summary;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rhflow_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

FlowHistory flow_of(const Scenario& s) {
  return run(s.initial_state(), s.coupling, s.T, s.flow_dt, s.snapshot_every);
}

HeatOptions heat_of(const Scenario& s) {
  HeatOptions o;
  o.dt = s.kernel_dt;
  o.seed_levels = s.seed_levels;
  o.slice_every = s.slice_every;
  return o;
}

// Coupled T^2 run and kernel at a refinement factor, with the tau0 of the
// unrefined grid so that both levels start from the same seed width.
struct Level {
  Scenario sc;
  FlowHistory history;
  KernelSolution kernel;
};

Level coupled_level(double factor) {
  const Scenario base = builtin_scenario("t2-coupled");
  Level L;
  L.sc = factor == 1.0 ? base : base.refined(factor);
  L.history = flow_of(L.sc);
  HeatOptions o = heat_of(L.sc);
  o.slice_every = static_cast<int>(std::lround(base.slice_every * factor));
  L.kernel = solve_conjugate(L.history, L.sc.center, L.sc.T, minimum_tau0(base.grid()), o);
  return L;
}

bool all_pass(const RunResult& r, std::string& detail) {
  bool ok = true;
  for (const auto& c : r.checks) {
    if (!c.pass) {
      ok = false;
      detail += (c.refused ? " refused:" : " failed:") + c.check;
    }
  }
  return ok && !r.checks.empty();
}

const CheckReport& find(const RunResult& r, const std::string& name) {
  for (const auto& c : r.checks)
    if (c.check == name) return c;
  throw std::runtime_error("missing check " + name);
}

// 1. Flat static torus: image-sum kernel oracle, v ~ 0, ell = d^2 / 4 tau.
Outcome criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  const Scenario s = builtin_scenario("flat-static");
  const FlowHistory h = flow_of(s);
  const KernelSolution K = solve_conjugate(h, s.center, s.T, s.tau0, heat_of(s));
  const PeriodicGrid g = s.grid();
  const double y1 = g.coordinate(0, s.center[0]), y2 = g.coordinate(1, s.center[1]);
  const double L1 = g.length(0), L2 = g.length(1);
  double worst = 0.0;
  for (std::size_t k = 0; k < K.slices(); ++k) {
    const double tau = K.taus[k];
    for (int i = 0; i < g.points(0); ++i)
      for (int j = 0; j < g.points(1); ++j) {
        double dx = g.coordinate(0, i) - y1, dy = g.coordinate(1, j) - y2;
        if (dx * dx + dy * dy > 4.0 * tau) continue;
        double sum = 0.0;
        for (int m1 = -3; m1 <= 3; ++m1)
          for (int m2 = -3; m2 <= 3; ++m2) {
            const double a = dx + m1 * L1, b = dy + m2 * L2;
            sum += std::exp(-(a * a + b * b) / (4.0 * tau));
          }
        const double oracle = sum / (4.0 * std::numbers::pi * tau);
        worst = std::max(worst, std::abs(K.H[k].at(i, j) - oracle) / oracle);
      }
  }
  const CheckReport v = harnack_v_check(K, h, kFlatVOverH);
  const double vmax = v.details["max_v_over_H"].get<double>();
  double ell_err = 0.0;
  const Point y{y1, y2, 0.0};
  for (const Point x : {Point{y1 + 0.5, y2, 0.0}, Point{y1 - 0.3, y2 + 0.8, 0.0}, Point{y1 + 1.2, y2 - 1.0, 0.0}}) {
    const double d2 = (x[0] - y1) * (x[0] - y1) + (x[1] - y2) * (x[1] - y2);
    const double ell = reduce_distance(h, y, x, s.T).ell;
    ell_err = std::max(ell_err, std::abs(ell - d2 / (4.0 * s.T)) / (d2 / (4.0 * s.T)));
  }
  const double secs = seconds_since(t0);
  const bool pass = worst <= kOracleRel && vmax <= kFlatVOverH && ell_err <= kFlatEllRel && secs < kFlatSeconds;
  return {pass, fmt("kernel vs image sum %.2e (tol %.0e); max v/H %.2e (tol %.0e); ell rel err %.2e (tol %.0e); %.1f s (< %.0f)",
                    worst, kOracleRel, vmax, kFlatVOverH, ell_err, kFlatEllRel, secs, kFlatSeconds)};
}

// 2. v <= 0 with a violation that shrinks under one joint (h, dt) refinement.
Outcome criterion2() {
  const auto t0 = std::chrono::steady_clock::now();
  const Level c = coupled_level(1.0), f = coupled_level(2.0);
  const CheckReport rc = harnack_v_check(c.kernel, c.history, 1.0);
  const CheckReport rf = harnack_v_check(f.kernel, f.history, 1.0);
  const double vc = std::max(0.0, rc.details["max_v_over_H"].get<double>());
  const double vf = std::max(0.0, rf.details["max_v_over_H"].get<double>());
  const double shrink = vf > 0.0 ? vc / vf : INFINITY;
  const double secs = seconds_since(t0);
  return {vc > 0.0 && shrink >= kVShrink && secs < kRefineSeconds,
          fmt("max v/H %.3e at 128x64 -> %.3e at 256x128, shrink %.1fx (>= %.0fx); %.0f s (< %.0f)", vc, vf,
              shrink, kVShrink, secs, kRefineSeconds)};
}

// 3. Evolution identity of v: residual order and sign of the right-hand side.
Outcome criterion3() {
  const Level c = coupled_level(1.0), f = coupled_level(2.0);
  const CheckReport rc = boxstar_v_residual(c.kernel, c.history, 1.0);
  const CheckReport rf = boxstar_v_residual(f.kernel, f.history, 1.0);
  const auto order = observed_order(rc.max_violation, rf.max_violation);
  const double rhs = std::max(rc.details["max_rhs"].get<double>(), rf.details["max_rhs"].get<double>());
  const double p = order.value_or(-INFINITY);
  return {p >= kIdentityOrder && rhs <= kRhsSign,
          fmt("residual %.3e -> %.3e, order %.2f (>= %.0f); max RHS %.2e (<= %.0e)", rc.max_violation,
              rf.max_violation, p, kIdentityOrder, rhs, kRhsSign)};
}

// 4. Both LYH forms along constant, straight and L-minimising curves.
Outcome criterion4() {
  const Level c = coupled_level(1.0), f = coupled_level(2.0);
  const auto pc = lyh_probes(c.kernel, lyh_curves(c.history, c.sc.center, c.sc.T));
  const auto pf = lyh_probes(f.kernel, lyh_curves(f.history, f.sc.center, f.sc.T));
  const CheckReport rc = lyh_along_curve(c.kernel, c.history, pc, 0.0);
  const CheckReport rf = lyh_along_curve(f.kernel, f.history, pf, 0.0);
  double spread = 0.0;
  std::ostringstream per;
  for (std::size_t i = 0; i < rc.details["curves"].size(); ++i) {
    const auto& a = rc.details["curves"][i];
    const auto& b = rf.details["curves"][i];
    for (const char* key : {"min_margin_h", "min_margin_sqrt_tau_h"})
      spread = std::max(spread, std::abs(a[key].get<double>() - b[key].get<double>()));
    per << ' ' << a["name"].get<std::string>() << '='
        << std::min(a["min_margin_h"].get<double>(), a["min_margin_sqrt_tau_h"].get<double>());
  }
  const double tol = spread + kLyhFloor;
  const double mc = rc.details["min_margin"].get<double>();
  const double mf = rf.details["min_margin"].get<double>();
  const bool pass = static_cast<int>(pc.size()) >= kLyhProbes && mc >= -tol && mf >= -tol;
  return {pass, fmt("%zu probes; min margin %.3e at 128x64, %.3e at 256x128; tol %.3e (refinement spread + %.0e);",
                    pc.size(), mc, mf, tol, kLyhFloor) + per.str()};
}

// 5. Evolution of S and the volume identity over two refinement levels.
Outcome criterion5() {
  double es[3], vs[3];
  const double factors[3] = {0.5, 1.0, 2.0};
  for (int i = 0; i < 3; ++i) {
    const Scenario s = builtin_scenario("t2-coupled").refined(factors[i]);
    const FlowHistory h = flow_of(s);
    es[i] = evolS_residual(h, 1.0).max_violation;
    vs[i] = volume_identity(h, 1.0).max_violation;
  }
  double pe = INFINITY, pv = INFINITY;
  for (int i = 0; i < 2; ++i) {
    pe = std::min(pe, observed_order(es[i], es[i + 1]).value_or(-INFINITY));
    pv = std::min(pv, observed_order(vs[i], vs[i + 1]).value_or(-INFINITY));
  }
  return {pe >= kEvolOrder && pv >= kEvolOrder,
          fmt("evolS residual %.2e, %.2e, %.2e (min order %.2f); volume %.2e, %.2e, %.2e (min order %.2f); required >= %.0f",
              es[0], es[1], es[2], pe, vs[0], vs[1], vs[2], pv, kEvolOrder)};
}

Scenario pinned(const std::string& name, std::map<std::string, double> tol) {
  Scenario s = builtin_scenario(name);
  s.tolerances = std::move(tol);
  return s;
}

// 6. Entropy suite on the coupled run.
Outcome criterion6() {
  const Scenario s = pinned("t2-coupled", {{"entropy.scaling", kWScaling},
                                           {"entropy.monotone", kMuMonotone},
                                           {"entropy.el", kElResidual},
                                           {"entropy.trend", kMuTrend},
                                           {"entropy.kernel_bound", kKernelBound}});
  const RunResult r = run_scenario(s, {{"entropy"}, scratch("6"), 1.0});
  std::string detail;
  const bool ok = all_pass(r, detail);
  return {ok, fmt("W scaling %.1e; mu monotone %.1e; EL %.1e; trend %.1e (tol %.1e); kernel bound %.1e;",
                  find(r, "w_scaling_invariance").max_violation, find(r, "mu_monotonicity").max_violation,
                  find(r, "mu_el_certificates").max_violation, find(r, "mu_small_tau_trend").max_violation,
                  find(r, "mu_small_tau_trend").tolerance, find(r, "kernel_upper_bound").max_violation) +
                  detail};
}

// 7. Reduced-distance sandwich and h <= ell on the coupled run.
Outcome criterion7() {
  const Scenario s = pinned("t2-coupled", {{"lgeo.bounds", kLgeoBounds}, {"lgeo.h_ell", kHEll}});
  const RunResult r = run_scenario(s, {{"lgeo"}, scratch("7"), 1.0});
  const CheckReport& b = find(r, "lphi_bounds");
  const CheckReport& c = find(r, "h_le_ell");
  std::size_t samples = 0;
  for (const auto& f : b.details["fields"]) samples += f["samples"].size();
  const bool ok = b.pass && c.pass && samples >= 100;
  return {ok, fmt("%zu samples (25 points x 4 tau); sandwich %.2e (tol %.0e); h - ell %.2e relative (tol %.0e)",
                  samples, b.max_violation, kLgeoBounds, c.max_violation, kHEll)};
}

// 8. Sobolev suite on T^3 with positive scalar curvature.
Outcome criterion8() {
  const Scenario s = pinned("t3-positive-S", {{"sobolev.envelope", kEnvelope},
                                              {"sobolev.J", kJBound},
                                              {"sobolev.uniform", kUniformBound},
                                              {"sobolev.entropy", kEntropySobolev}});
  const RunResult r = run_scenario(s, {{"sobolev"}, scratch("8"), 1.0});
  std::string detail;
  bool ok = all_pass(r, detail);
  const double K = talenti_constant(3);
  ok = ok && std::abs(K - kTalentiQuoted) <= kTalenti;
  const FlowState s0 = s.initial_state();
  const Profile S = coupled_quantities(s0.metric, s0.map, s.coupling.alpha(0.0)).S;
  return {ok, fmt("inf S(0) = %.4f; K(3,2) = %.7f vs %.5f (tol %.0e); C_tilde = %.4f;",
                  *std::min_element(S.begin(), S.end()), K, kTalentiQuoted, kTalenti,
                  kernel_bound_constant(3)) +
                  detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 9. Mass, semigroup and determinism.
Outcome criterion9() {
  const Scenario flat = pinned("flat-static", {{"kernel.mass", kMass},
                                               {"kernel.semigroup", kSemigroupFlat},
                                               {"kernel.duality", kSemigroupFlat}});
  const Scenario coupled = pinned("t2-coupled", {{"kernel.mass", kMass},
                                                 {"kernel.semigroup", kSemigroupCoupled},
                                                 {"kernel.duality", kSemigroupCoupled}});
  const RunResult rf = run_scenario(flat, {{"kernel"}, scratch("9_flat"), 1.0});
  const fs::path a = scratch("9_a"), b = scratch("9_b");
  const RunResult ra = run_scenario(coupled, {{"kernel"}, a, 1.0});
  const RunResult rb = run_scenario(coupled, {{"kernel"}, b, 1.0});
  bool same = ra.files.size() == rb.files.size();
  for (const auto& f : ra.files) same = same && slurp(f) == slurp(b / f.filename());
  std::string detail;
  const bool ok = all_pass(rf, detail) && all_pass(ra, detail) && same;
  return {ok, fmt("mass drift flat %.1e coupled %.1e (tol %.0e); semigroup flat %.1e (tol %.0e) coupled %.1e (tol %.0e); rerun %s;",
                  find(rf, "conjugate_mass").max_violation, find(ra, "conjugate_mass").max_violation, kMass,
                  find(rf, "kernel_semigroup_duality").max_violation, kSemigroupFlat,
                  find(ra, "kernel_semigroup_duality").max_violation, kSemigroupCoupled,
                  same ? "byte-identical" : "DIFFERS") +
                  detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  int only = 0;
  app.add_option("--criterion", only, "Run one criterion (1-9)")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);

  const std::function<Outcome()> criteria[] = {criterion1, criterion2, criterion3, criterion4, criterion5,
                                               criterion6, criterion7, criterion8, criterion9};
  bool all = true;
  for (int i = 1; i <= 9; ++i) {
    if (only && i != only) continue;
    Outcome o;
    try {
      o = criteria[i - 1]();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::printf("criterion %d: %s  %s\n", i, o.pass ? "PASS" : "FAIL", o.summary.c_str());
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
