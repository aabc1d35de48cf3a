#include "rhflow/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <regex>
#include <sstream>

#include "rhflow/entropy.hpp"
#include "rhflow/errors.hpp"
#include "rhflow/geometry.hpp"
#include "rhflow/harnack.hpp"
#include "rhflow/heat.hpp"
#include "rhflow/lgeodesic.hpp"
#include "rhflow/sobolev.hpp"

namespace rhflow {

Profile FourierProfile::sample(const PeriodicGrid& grid) const {
  Profile p(grid.points(0), mean);
  for (int i = 0; i < grid.points(0); ++i) {
    const double x = grid.coordinate(0, i);
    for (const auto& [k, c] : cos) p[i] += c * std::cos(k * x);
    for (const auto& [k, s] : sin) p[i] += s * std::sin(k * x);
  }
  return p;
}

PeriodicGrid Scenario::grid() const { return PeriodicGrid::torus(dim, points); }

FlowState Scenario::initial_state() const {
  const PeriodicGrid g = grid();
  std::vector<Profile> a;
  for (const auto& m : metric) a.push_back(m.sample(g));
  return FlowState{0.0, ReducedMetric(g, std::move(a)), ScalarMap{phi.sample(g)}};
}

const std::map<std::string, double>& default_tolerances() {
  static const std::map<std::string, double> t{
      {"flow.evolS", 5e-3},         {"flow.volume", 5e-3},
      {"flow.envelope", 5e-3},      {"flow.D", 1e-10},
      {"kernel.mass", 1e-4},        {"kernel.semigroup", 2e-2},
      {"kernel.duality", 2e-2},     {"harnack.v", 1e-2},
      {"harnack.identity", 0.1},    {"harnack.rhs_sign", 1e-8},
      {"harnack.lyh", 1e-3},        {"harnack.gradient", 0.0},
      {"harnack.rho", 1e-3},        {"harnack.rho_terminal", 5e-3},
      {"entropy.scaling", 1e-8},    {"entropy.monotone", 2e-3},
      {"entropy.el", 1e-3},         {"entropy.trend", 1e-4},
      {"entropy.kernel_bound", 1e-3}, {"lgeo.bounds", 1e-6},
      {"lgeo.h_ell", 1e-2},         {"sobolev.envelope", 5e-3},
      {"sobolev.J", 1e-3},          {"sobolev.uniform", 1e-3},
      {"sobolev.kernel", 0.0},     {"sobolev.entropy", 1e-3},
  };
  return t;
}

double Scenario::tol(const std::string& key) const {
  const auto it = tolerances.find(key);
  if (it != tolerances.end()) return it->second;
  return default_tolerances().at(key);
}

Scenario Scenario::refined(double factor) const {
  Scenario s = *this;
  for (int a = 0; a < dim; ++a) {
    const int n = static_cast<int>(std::lround(points[a] * factor / 2.0)) * 2;
    s.center[a] = static_cast<int>(std::lround(double(center[a]) * n / points[a])) % n;
    s.points[a] = n;
  }
  s.kernel_dt = kernel_dt / factor;
  s.flow_dt = flow_dt / factor;
  return s;
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> s{"flow", "kernel", "harnack", "entropy", "lgeo", "sobolev"};
  return s;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& v, int line) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + v + "'", line);
  }
}

int to_int(const std::string& v, int line) {
  const double d = to_double(v, line);
  if (d != std::floor(d)) throw ConfigError("expected an integer, got '" + v + "'", line);
  return static_cast<int>(d);
}

std::vector<std::string> words(const std::string& v) {
  std::istringstream in(v);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::array<int, 3> triple(const std::string& v, int line) {
  const auto w = words(v);
  if (w.empty() || w.size() > 3) throw ConfigError("expected one to three integers", line);
  std::array<int, 3> out{0, 0, 0};
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = to_int(w[i], line);
  return out;
}

struct CouplingSpec {
  std::string kind = "constant";
  double alpha = 1.0, alpha0 = 1.0, alpha_bar = 1.0, slope = 0.0;
  int line = 0;
};

void apply_fourier(FourierProfile& p, const std::string& term, double value, int line) {
  static const std::regex re(R"((cos|sin)([0-9]+))");
  std::smatch m;
  if (!std::regex_match(term, m, re)) throw ConfigError("unknown Fourier term '" + term + "'", line);
  const int k = std::stoi(m[2]);
  if (k < 1) throw ConfigError("Fourier mode must be positive", line);
  (m[1] == "cos" ? p.cos : p.sin)[k] = value;
}

std::string fmt(double v) {
  std::ostringstream o;
  o << std::setprecision(17) << v;
  return o.str();
}

}  // namespace

void validate(const Scenario& s) {
  if (s.dim < 2 || s.dim > 3) throw ConfigError("[grid] dim must be 2 or 3");
  for (int a = 0; a < s.dim; ++a)
    if (s.points[a] < 16 || s.points[a] % 2) throw ConfigError("[grid] point counts must be even and >= 16");
  if (static_cast<int>(s.metric.size()) != s.dim)
    throw ConfigError("[metric] needs exactly " + std::to_string(s.dim) + " coefficients a1..a" +
                      std::to_string(s.dim));
  for (int a = 0; a < 3; ++a) {
    const int n = a < s.dim ? s.points[a] : 1;
    if (s.center[a] < 0 || s.center[a] >= n) throw ConfigError("[kernel] center lies off the grid");
  }
  const auto& c = s.coupling;
  if (c.alpha0 <= 0.0 || (c.kind == CouplingSchedule::Kind::linear_clipped && c.alpha_bar <= 0.0))
    throw ConfigError("[coupling] alpha must be a positive non-increasing function of t");
  if (c.slope > 0.0 || (c.kind == CouplingSchedule::Kind::linear_clipped && c.alpha_bar > c.alpha0))
    throw ConfigError("[coupling] alpha must be a positive non-increasing function of t");
  if (!(s.T > 0.0) || !(s.kernel_dt > 0.0) || !(s.flow_dt > 0.0))
    throw ConfigError("[flow]/[kernel] T and time steps must be positive");
  if (s.snapshot_every < 1 || s.slice_every < 1 || s.seed_levels < 0 || s.entropy_taus < 2 ||
      s.lgeo_per_axis < 1)
    throw ConfigError("counts must be positive");
  for (const auto& st : s.checks)
    if (std::find(stage_names().begin(), stage_names().end(), st) == stage_names().end())
      throw ConfigError("[checks] unknown stage '" + st + "'");
  for (const auto& [k, v] : s.tolerances) {
    if (!default_tolerances().count(k)) throw ConfigError("[tolerances] unknown key '" + k + "'");
    if (!(v >= 0.0)) throw ConfigError("[tolerances] values must be nonnegative");
  }
}

Scenario parse_config_text(const std::string& text) {
  Scenario s;
  s.metric.clear();
  std::map<int, FourierProfile> metric;
  CouplingSpec cs;
  bool center_set = false;
  std::istringstream in(text);
  std::string section;
  std::string raw;
  int line = 0;
  static const std::regex metric_key(R"(a([1-3])(?:\.(\w+))?)");
  static const std::regex phi_key(R"(phi(?:\.(\w+))?)");
  while (std::getline(in, raw)) {
    ++line;
    std::string l = raw.substr(0, raw.find('#'));
    l = trim(l);
    if (l.empty()) continue;
    if (l.front() == '[') {
      if (l.back() != ']') throw ConfigError("malformed section header", line);
      section = trim(l.substr(1, l.size() - 2));
      static const std::set<std::string> known{"scenario", "grid", "metric", "map", "coupling",
                                               "flow", "kernel", "checks", "tolerances"};
      if (!known.count(section)) throw ConfigError("unknown section [" + section + "]", line);
      continue;
    }
    const auto eq = l.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key = value", line);
    const std::string key = trim(l.substr(0, eq));
    const std::string val = trim(l.substr(eq + 1));
    if (section.empty()) throw ConfigError("key outside a section", line);
    auto unknown = [&] { throw ConfigError("unknown key '" + key + "' in [" + section + "]", line); };
    std::smatch m;
    if (section == "scenario") {
      if (key == "name") s.name = val; else unknown();
    } else if (section == "grid") {
      if (key == "dim") s.dim = to_int(val, line);
      else if (key == "points") s.points = triple(val, line);
      else unknown();
    } else if (section == "metric") {
      if (!std::regex_match(key, m, metric_key)) unknown();
      auto& p = metric[std::stoi(m[1])];
      const double v = to_double(val, line);
      if (m[2].matched) apply_fourier(p, m[2], v, line); else p.mean = v;
    } else if (section == "map") {
      if (!std::regex_match(key, m, phi_key)) unknown();
      const double v = to_double(val, line);
      if (m[1].matched) apply_fourier(s.phi, m[1], v, line); else s.phi.mean = v;
    } else if (section == "coupling") {
      cs.line = line;
      if (key == "kind") {
        if (val != "constant" && val != "linear_clipped") throw ConfigError("unknown coupling kind '" + val + "'", line);
        cs.kind = val;
      } else if (key == "alpha") cs.alpha = to_double(val, line);
      else if (key == "alpha0") cs.alpha0 = to_double(val, line);
      else if (key == "alpha_bar") cs.alpha_bar = to_double(val, line);
      else if (key == "slope") cs.slope = to_double(val, line);
      else unknown();
    } else if (section == "flow") {
      if (key == "T") s.T = to_double(val, line);
      else if (key == "dt") s.flow_dt = to_double(val, line);
      else if (key == "snapshot_every") s.snapshot_every = to_int(val, line);
      else unknown();
    } else if (section == "kernel") {
      if (key == "center") {
        s.center = triple(val, line);
        center_set = true;
      }
      else if (key == "dt") s.kernel_dt = to_double(val, line);
      else if (key == "seed_levels") s.seed_levels = to_int(val, line);
      else if (key == "slice_every") s.slice_every = to_int(val, line);
      else if (key == "tau0") s.tau0 = to_double(val, line);
      else unknown();
    } else if (section == "checks") {
      if (key == "stages") {
        s.checks.clear();
        for (const auto& w : words(val)) {
          if (std::find(stage_names().begin(), stage_names().end(), w) == stage_names().end())
            throw ConfigError("unknown stage '" + w + "'", line);
          s.checks.insert(w);
        }
      } else if (key == "entropy_taus") s.entropy_taus = to_int(val, line);
      else if (key == "lgeo_per_axis") s.lgeo_per_axis = to_int(val, line);
      else unknown();
    } else if (section == "tolerances") {
      if (!default_tolerances().count(key)) unknown();
      s.tolerances[key] = to_double(val, line);
    }
  }
  if (metric.empty()) {
    for (int a = 0; a < s.dim; ++a) s.metric.push_back(FourierProfile{1.0, {}, {}});
  } else {
    for (int a = 1; a <= static_cast<int>(metric.size()); ++a) {
      if (!metric.count(a)) throw ConfigError("[metric] coefficients must be a1..an without gaps");
      s.metric.push_back(metric[a]);
    }
  }
  if (s.dim == 2) s.points[2] = 1;
  if (!center_set) s.center = {s.points[0] / 2, s.points[1] / 2, s.dim == 3 ? s.points[2] / 2 : 0};
  if (cs.kind == "constant") {
    if (cs.alpha <= 0.0) throw ConfigError("coupling alpha must be positive (positive non-increasing)", cs.line);
    s.coupling = CouplingSchedule::constant(cs.alpha);
  } else {
    if (cs.slope > 0.0 || cs.alpha_bar > cs.alpha0)
      throw ConfigError("coupling must be positive non-increasing: slope > 0 or alpha_bar > alpha0", cs.line);
    s.coupling = CouplingSchedule::linear_clipped(cs.alpha0, cs.alpha_bar, cs.slope);
  }
  validate(s);
  return s;
}

Scenario parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string to_config(const Scenario& s) {
  std::ostringstream o;
  o << "[scenario]\nname = " << s.name << "\n\n[grid]\ndim = " << s.dim << "\npoints = "
    << s.points[0] << ' ' << s.points[1] << ' ' << s.points[2] << "\n\n[metric]\n";
  auto fourier = [&](const std::string& base, const FourierProfile& p) {
    o << base << " = " << fmt(p.mean) << '\n';
    for (const auto& [k, c] : p.cos) o << base << ".cos" << k << " = " << fmt(c) << '\n';
    for (const auto& [k, c] : p.sin) o << base << ".sin" << k << " = " << fmt(c) << '\n';
  };
  for (std::size_t a = 0; a < s.metric.size(); ++a) fourier("a" + std::to_string(a + 1), s.metric[a]);
  o << "\n[map]\n";
  fourier("phi", s.phi);
  o << "\n[coupling]\n";
  if (s.coupling.kind == CouplingSchedule::Kind::constant) {
    o << "kind = constant\nalpha = " << fmt(s.coupling.alpha0) << '\n';
  } else {
    o << "kind = linear_clipped\nalpha0 = " << fmt(s.coupling.alpha0) << "\nalpha_bar = "
      << fmt(s.coupling.alpha_bar) << "\nslope = " << fmt(s.coupling.slope) << '\n';
  }
  o << "\n[flow]\nT = " << fmt(s.T) << "\ndt = " << fmt(s.flow_dt)
    << "\nsnapshot_every = " << s.snapshot_every << "\n\n[kernel]\ncenter = " << s.center[0] << ' '
    << s.center[1] << ' ' << s.center[2] << "\ndt = " << fmt(s.kernel_dt)
    << "\nseed_levels = " << s.seed_levels << "\nslice_every = " << s.slice_every
    << "\ntau0 = " << fmt(s.tau0) << "\n\n[checks]\nstages =";
  for (const auto& st : stage_names())
    if (s.checks.count(st)) o << ' ' << st;
  o << "\nentropy_taus = " << s.entropy_taus << "\nlgeo_per_axis = " << s.lgeo_per_axis
    << "\n\n[tolerances]\n";
  for (const auto& [k, v] : default_tolerances()) o << k << " = " << fmt(s.tol(k)) << '\n';
  return o.str();
}

Scenario builtin_scenario(const std::string& name) {
  Scenario s;
  s.name = name;
  if (name == "flat-static") {
    s.metric = {FourierProfile{1.0, {}, {}}, FourierProfile{1.0, {}, {}}};
    s.flow_dt = 1e-2;
    // x2 spacing is twice x1 spacing; two cells per seed width along x2.
    s.tau0 = 0.02;
  } else if (name == "t2-coupled") {
    s.metric = {FourierProfile{1.0, {}, {{1, 0.2}}}, FourierProfile{1.0, {{1, 0.3}}, {}}};
    s.phi = FourierProfile{0.0, {{1, 0.5}}, {}};
    s.seed_levels = 1;
  } else if (name == "t3-positive-S") {
    // No metric on T^3 has positive scalar curvature; this is the closest
    // admissible warped configuration and the positivity checks refuse.
    s.dim = 3;
    s.points = {64, 32, 32};
    s.metric = {FourierProfile{1.0, {}, {}}, FourierProfile{1.0, {{1, 0.3}}, {}},
                FourierProfile{1.0, {}, {{1, 0.2}}}};
    s.phi = FourierProfile{0.0, {{1, 0.1}}, {}};
    s.T = 0.2;
    s.center = {32, 16, 16};
    s.kernel_dt = 5e-4;
    s.checks = {"flow", "kernel", "sobolev"};
  } else {
    throw ConfigError("unknown built-in scenario '" + name + "'");
  }
  validate(s);
  return s;
}

std::vector<std::string> builtin_names() { return {"flat-static", "t2-coupled", "t3-positive-S"}; }

// ---------------------------------------------------------------------------
// Pipeline

namespace {

struct Context {
  const Scenario& sc;
  const RunOptions& opts;
  FlowHistory history;
  std::optional<KernelSolution> kernel;
  HeatOptions heat;
  double tau0 = 0.0;
  std::vector<CheckReport> checks;
  std::vector<std::filesystem::path> files;

  double tol(const std::string& key) const { return sc.tol(key) * opts.tol_scale; }

  void add(CheckReport r, const std::string& stage) {
    r.details["stage"] = stage;
    checks.push_back(std::move(r));
  }

  std::ofstream csv(const std::string& name, const std::string& header) {
    const auto p = opts.out / name;
    std::ofstream f(p);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f.precision(17);
    f << header << '\n';
    files.push_back(p);
    return f;
  }

  const KernelSolution& K() {
    if (!kernel) kernel = solve_conjugate(history, sc.center, sc.T, tau0, heat);
    return *kernel;
  }
};

Point coords(const PeriodicGrid& g, std::array<int, 3> p) {
  Point x{0.0, 0.0, 0.0};
  for (int a = 0; a < g.dim(); ++a) x[a] = g.coordinate(a, p[a]);
  return x;
}

void stage_flow(Context& c) {
  c.add(evolS_residual(c.history, c.tol("flow.evolS")), "flow");
  c.add(volume_identity(c.history, c.tol("flow.volume")), "flow");
  c.add(s_min_monotonicity(c.history, c.tol("flow.envelope")), "flow");
  c.add(d_nonnegativity(c.history, c.tol("flow.D")), "flow");
  auto f = c.csv("flow.csv", "t,alpha,inf_S,volume");
  for (const auto& s : c.history.snapshots()) {
    const double alpha = c.history.schedule().alpha(s.t);
    const Profile S = coupled_quantities(s.metric, s.map, alpha).S;
    f << s.t << ',' << alpha << ',' << *std::min_element(S.begin(), S.end()) << ','
      << s.metric.volume() << '\n';
  }
}

void stage_kernel(Context& c) {
  const KernelSolution& K = c.K();
  c.add(mass_conservation(K, c.tol("kernel.mass")), "kernel");
  {
    auto f = c.csv("kernel_mass.csv", "t,tau,mass");
    for (std::size_t k = 0; k < K.slices(); ++k) f << K.times[k] << ',' << K.taus[k] << ',' << K.mass[k] << '\n';
  }
  // Semigroup and duality on a kernel with a uniform tail in tau so that the
  // forward slices land on kernel slices.
  const double dt = c.sc.kernel_dt, T = c.sc.T;
  auto lattice = [&](double t) { return dt * std::round(t / dt); };
  HeatOptions o = c.heat;
  o.slice_every = 1;
  o.grading_tau = 0.25 * T;
  const KernelSolution Ks = solve_conjugate(c.history, c.sc.center, T, c.tau0, o);
  const PeriodicGrid g = c.sc.grid();
  std::array<int, 3> x = c.sc.center;
  x[0] = (x[0] + g.points(0) - g.points(0) / 10) % g.points(0);
  x[1] = (x[1] + g.points(1) - g.points(1) / 8) % g.points(1);
  const double tf = lattice(0.1 * T);
  const KernelPropertySample smp{x, lattice(0.4 * T), {lattice(0.4 * T), lattice(0.55 * T), lattice(0.7 * T)}};
  c.add(kernel_properties(c.history, Ks, {smp}, tf, c.tol("kernel.semigroup"), c.tol("kernel.duality"), o),
        "kernel");
}

}  // namespace

std::vector<DiscreteCurve> lyh_curves(const FlowHistory& history, std::array<int, 3> center, double tau1) {
  const PeriodicGrid& g = history.grid();
  const Point y = coords(g, center);
  Point x = y;
  x[0] += g.length(0) / 16.0;
  if (g.dim() > 1) x[1] += g.length(1) / 16.0;
  return {straight_curve(y, x, tau1), reduce_distance(history, y, x, tau1).curve};
}

std::vector<ProbeCurve> lyh_probes(const KernelSolution& K, const std::vector<DiscreteCurve>& curves) {
  const PeriodicGrid& g = K.H[0].grid();
  std::vector<ProbeCurve> out;
  out.push_back(constant_curve(K, K.center, "constant_center"));
  std::array<int, 3> p = K.center;
  p[0] = (p[0] + g.points(0) / 16) % g.points(0);
  out.push_back(constant_curve(K, p, "constant_x1_offset"));
  p = K.center;
  p[1] = (p[1] + g.points(1) / 16) % g.points(1);
  out.push_back(constant_curve(K, p, "constant_x2_offset"));
  const char* names[] = {"straight_segment", "lphi_minimiser"};
  for (std::size_t i = 0; i < curves.size(); ++i) out.push_back(probe_from_curve(K, curves[i], names[i]));
  return out;
}


namespace {

void stage_harnack(Context& c) {
  const KernelSolution& K = c.K();
  c.add(harnack_v_check(K, c.history, c.tol("harnack.v")), "harnack");
  CheckReport id = boxstar_v_residual(K, c.history, c.tol("harnack.identity"));
  CheckReport sign;
  sign.check = "boxstar_v_rhs_sign";
  sign.tolerance = c.tol("harnack.rhs_sign");
  sign.max_violation = id.details["max_rhs"].get<double>();
  sign.pass = sign.max_violation <= sign.tolerance;
  c.add(std::move(id), "harnack");
  c.add(std::move(sign), "harnack");

  // LYH along probe curves. The tolerance is the change of the per-curve
  // minimum margins under one spatial refinement at the same tau0.
  const Scenario fs = c.sc.refined(2.0);
  const FlowHistory hf = run(fs.initial_state(), fs.coupling, fs.T, fs.flow_dt, fs.snapshot_every);
  HeatOptions fine = c.heat;
  fine.dt *= 0.5;
  fine.slice_every *= 2;
  const KernelSolution Kf = solve_conjugate(hf, fs.center, fs.T, c.tau0, fine);
  CheckReport lyh = lyh_along_curve(K, c.history, lyh_probes(K, lyh_curves(c.history, c.sc.center, c.sc.T)), 0.0);
  const CheckReport ref = lyh_along_curve(Kf, hf, lyh_probes(Kf, lyh_curves(hf, fs.center, fs.T)), 0.0);
  double spread = 0.0;
  for (std::size_t i = 0; i < lyh.details["curves"].size(); ++i)
    for (const char* key : {"min_margin_h", "min_margin_sqrt_tau_h"})
      spread = std::max(spread, std::abs(lyh.details["curves"][i][key].get<double>() -
                                         ref.details["curves"][i][key].get<double>()));
  lyh.details["refined_min_margin"] = ref.details["min_margin"];
  lyh.tolerance = spread + c.tol("harnack.lyh");
  lyh.pass = lyh.details["min_margin"].get<double>() >= -lyh.tolerance;
  lyh.details["refinement_spread"] = spread;
  {
    auto f = c.csv("lyh_margins.csv", "curve,t,tau,h,margin_h,margin_sqrt_tau_h");
    for (const auto& cv : lyh.details["curves"])
      for (const auto& s : cv["samples"])
        f << cv["name"].get<std::string>() << ',' << s["t"].get<double>() << ',' << s["tau"].get<double>()
          << ',' << s["h"].get<double>() << ',' << s["margin_h"].get<double>() << ','
          << s["margin_sqrt_tau_h"].get<double>() << '\n';
  }
  c.add(std::move(lyh), "harnack");

  c.add(gradient_estimate_check(K, c.history, c.tol("harnack.gradient"), 1e-8), "harnack");

  const PeriodicGrid g = c.sc.grid();
  std::vector<RhoSeries> series;
  const ScalarField bump = ScalarField::sample(g, [](double x, double y, double z) {
    return 2.0 + std::cos(x + 0.4) * std::cos(y) * std::cos(z);
  });
  c.add(rho_phi_report(K, c.history, {{"one", ScalarField(g, 1.0)}, {"bump", bump}}, c.tol("harnack.rho"),
                       c.tol("harnack.rho_terminal"), &series, c.heat),
        "harnack");
  auto f = c.csv("rho_phi.csv", "seed,t,rho,entropy_like");
  for (const auto& s : series)
    for (std::size_t k = 0; k < s.t.size(); ++k)
      f << s.name << ',' << s.t[k] << ',' << s.rho[k] << ','
        << (k < s.entropy_like.size() ? s.entropy_like[k] : std::nan("")) << '\n';
}

void stage_entropy(Context& c) {
  const FlowState& s0 = c.history.snapshots().front();
  const PeriodicGrid g = c.sc.grid();
  const double alpha0 = c.history.schedule().alpha(s0.t);
  {
    CheckReport r;
    r.check = "w_scaling_invariance";
    r.tolerance = c.tol("entropy.scaling");
    const ScalarField f = ScalarField::sample(g, [](double x, double y, double z) {
      return std::sin(x) * std::cos(y) + 0.3 * std::cos(2.0 * x) + 0.2 * std::sin(z);
    });
    const double tau = 0.3;
    const double W = w_alpha(s0, alpha0, tau, f);
    for (double k : {0.25, 4.0}) {
      const FlowState sc{s0.t, s0.metric.scaled(k), s0.map};
      const double Wk = w_alpha(sc, alpha0, k * tau, f);
      r.max_violation = std::max(r.max_violation, std::abs(Wk - W));
      r.details["W_scaled_" + fmt(k)] = Wk;
    }
    r.details["W"] = W;
    r.pass = r.max_violation <= r.tolerance;
    c.add(std::move(r), "entropy");
  }
  c.add(mu_monotonicity(c.history, 0.5 * c.sc.T, c.tol("entropy.monotone")), "entropy");

  const double floor_tau = minimum_tau0(g);
  const MuCurve curve = mu_curve(c.history, log_tau_grid(floor_tau, c.sc.T, c.sc.entropy_taus));
  c.add(mu_certificates(curve, c.tol("entropy.el")), "entropy");
  // Resolution floor of the trend: mu of the flat torus on the same grid.
  const FlowState flat{0.0, ReducedMetric::flat(g), ScalarMap{Profile(g.points(0), 0.0)}};
  double bias = 0.0;
  for (double tau : curve.taus) bias = std::max(bias, std::abs(minimize_mu(flat, 1.0, tau).mu));
  CheckReport trend = mu_small_tau_trend(curve, std::max(c.tol("entropy.trend"), bias * c.opts.tol_scale));
  trend.details["flat_bias"] = bias;
  c.add(std::move(trend), "entropy");
  c.add(kernel_upper_bound_check(c.K(), curve, c.tol("entropy.kernel_bound")), "entropy");
  write_mu_csv(curve, c.opts.out / "mu.csv");
  c.files.push_back(c.opts.out / "mu.csv");
}

void stage_lgeo(Context& c) {
  const KernelSolution& K = c.K();
  const PeriodicGrid g = c.sc.grid();
  const auto pts = subsample(g, c.sc.center, c.sc.lgeo_per_axis);
  std::vector<ReducedDistanceField> fields;
  // The kernel tail next to the seed is the least accurate part of h; stay
  // at tau >= 4 tau0.
  for (double frac : {0.25, 0.5, 0.75, 1.0}) {
    const double target = std::max(frac * c.sc.T, 4.0 * K.tau0);
    const std::size_t k = K.nearest_slice(K.T - target);
    fields.push_back(reduced_distance_field(c.history, c.sc.center, K.taus[k], pts));
  }
  c.add(lphi_bounds_check(c.history, fields, c.tol("lgeo.bounds")), "lgeo");
  c.add(compare_h_ell(K, fields, c.tol("lgeo.h_ell")), "lgeo");
  write_reduced_csv(fields, c.opts.out / "reduced_distance.csv");
  c.files.push_back(c.opts.out / "reduced_distance.csv");

  int per_axis = 8;
  for (int a = 0; a < g.dim(); ++a)
    while (g.points(a) % per_axis) --per_axis;
  CheckReport vr;
  vr.check = "reduced_volume_series";
  vr.tolerance = 0.0;
  vr.pass = true;
  auto f = c.csv("reduced_volume.csv", "tau,V,per_axis");
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& fd : fields) {
    const ReducedVolume v = reduced_volume(c.history, c.sc.center, fd.tau, per_axis);
    f << v.tau << ',' << v.V << ',' << v.per_axis << '\n';
    rows.push_back({{"tau", v.tau}, {"V", v.V}});
    vr.pass = vr.pass && std::isfinite(v.V) && v.V > 0.0;
  }
  vr.details["series"] = rows;
  vr.details["per_axis"] = per_axis;
  vr.note = "finite and positive; no monotonicity asserted";
  c.add(std::move(vr), "lgeo");
}

void stage_sobolev(Context& c) {
  const int n = c.sc.dim;
  {
    CheckReport r;
    r.check = "talenti_constant";
    r.tolerance = 1e-12;
    // (Gamma(n)/Gamma(n/2))^{1/n} / sqrt(pi n (n-2)) at n = 3
    const double gamma_form = std::cbrt(std::tgamma(3.0) / std::tgamma(1.5)) / std::sqrt(3.0 * std::numbers::pi);
    r.max_violation = std::abs(talenti_constant(3) - gamma_form);
    r.details["K3"] = talenti_constant(3);
    r.details["C_tilde_3"] = kernel_bound_constant(3);
    r.pass = r.max_violation <= r.tolerance;
    c.add(std::move(r), "sobolev");
  }
  c.add(s_min_monotonicity(c.history, c.tol("sobolev.envelope")), "sobolev");
  const KernelSolution& K = c.K();
  const BoundIngredients ing = bound_ingredients(c.history, c.sc.center, 0.0, c.sc.T, c.tau0, c.heat);
  c.add(j_bound_check(c.history, ing, c.tol("sobolev.J")), "sobolev");
  write_j_csv(ing, c.opts.out / "J.csv");
  c.files.push_back(c.opts.out / "J.csv");
  c.add(uniform_kernel_bound_check(c.history, {K}, c.tol("sobolev.uniform")), "sobolev");

  if (n >= 3) {
    const SobolevConstants sc = fit_sobolev_constants(c.history);
    std::vector<double> taus;
    for (int i = 0; i < 6; ++i) taus.push_back(2.0 * K.tau0 + (c.sc.T - 2.0 * K.tau0) * i / 5.0);
    CheckReport th = sobolev_kernel_bound_check(c.history, K, sc, taus, c.tol("sobolev.kernel"));
    const auto p = c.opts.out / "sobolev_bounds.json";
    std::ofstream(p) << th.details["pairs"].dump(2) << '\n';
    c.files.push_back(p);
    c.add(std::move(th), "sobolev");
  } else {
    CheckReport th;
    th.check = "sobolev_kernel_bound";
    th.refused = true;
    th.note = "needs n >= 3";
    c.add(std::move(th), "sobolev");
  }

  // Entropy/Sobolev inequality at three tau values when its hypotheses hold.
  MuCurve curve;
  curve.dim = n;
  {
    const FlowState& s0 = c.history.snapshots().front();
    const Profile S = coupled_quantities(s0.metric, s0.map, c.history.schedule().alpha(s0.t)).S;
    curve.D_sobolev = *std::min_element(S.begin(), S.end());
  }
  if (n >= 3 && curve.D_sobolev > 0.0)
    curve = mu_curve(c.history, {0.25 * c.sc.T, 0.5 * c.sc.T, c.sc.T});
  c.add(entropy_sobolev_inequality(curve, c.tol("sobolev.entropy")), "sobolev");
}

}  // namespace

RunResult run_scenario(const Scenario& s, const RunOptions& opts) {
  validate(s);
  std::filesystem::create_directories(opts.out);
  std::set<std::string> stages = opts.stages.empty() ? s.checks : opts.stages;
  RunResult out;
  Context c{s, opts, {}, std::nullopt, {}, 0.0, {}, {}};
  c.heat.dt = s.kernel_dt;
  c.heat.seed_levels = s.seed_levels;
  c.heat.slice_every = s.slice_every;
  c.tau0 = s.tau0 > 0.0 ? s.tau0 : minimum_tau0(s.grid());
  std::string failure;
  try {
    c.history = run(s.initial_state(), s.coupling, s.T, s.flow_dt, s.snapshot_every);
    if (c.history.failure_time)
      throw NumericalFailure("flow: " + c.history.failure_reason, *c.history.failure_time);
    for (const auto& st : stage_names()) {
      if (!stages.count(st)) continue;
      if (st == "flow") stage_flow(c);
      if (st == "kernel") stage_kernel(c);
      if (st == "harnack") stage_harnack(c);
      if (st == "entropy") stage_entropy(c);
      if (st == "lgeo") stage_lgeo(c);
      if (st == "sobolev") stage_sobolev(c);
    }
  } catch (const NumericalFailure& e) {
    failure = std::string(e.what()) + " at t = " + fmt(e.time());
  }
  out.checks = c.checks;
  out.files = c.files;
  out.report = master_report(s.name, out.checks);
  nlohmann::json st = nlohmann::json::array();
  for (const auto& name : stage_names())
    if (stages.count(name)) st.push_back(name);
  out.report["stages"] = st;
  out.report["config"] = to_config(s);
  out.report["tol_scale"] = opts.tol_scale;
  nlohmann::json files = nlohmann::json::array();
  for (const auto& f : out.files) files.push_back(f.filename().string());
  out.report["files"] = files;
  if (!failure.empty()) {
    out.report["numerical_failure"] = failure;
    out.report["pass"] = false;
    out.exit_code = 3;
  } else {
    out.exit_code = out.report["pass"].get<bool>() ? 0 : 1;
  }
  const auto p = opts.out / "report.json";
  std::ofstream(p) << out.report.dump(2) << '\n';
  out.files.push_back(p);
  return out;
}

}  // namespace rhflow
