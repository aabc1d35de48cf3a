#include <CLI11.hpp>

#include <iostream>

#include "rhflow/errors.hpp"
#include "rhflow/scenario.hpp"

namespace {

int run_stages(const std::string& config, const std::string& builtin, double resolution,
               const rhflow::RunOptions& opts, bool print_config) {
  using namespace rhflow;
  Scenario s = config.empty() ? builtin_scenario(builtin) : parse_config(config);
  if (resolution != 1.0) s = s.refined(resolution);
  validate(s);
  if (print_config) {
    std::cout << to_config(s);
    return 0;
  }
  const RunResult r = run_scenario(s, opts);
  for (const auto& c : r.checks) {
    std::cout << (c.refused ? "REFUSED" : c.pass ? "PASS   " : "FAIL   ") << ' ' << c.check
              << "  violation=" << c.max_violation << " tol=" << c.tolerance;
    if (!c.note.empty()) std::cout << "  (" << c.note << ')';
    std::cout << '\n';
  }
  if (r.report.contains("numerical_failure"))
    std::cout << "numerical failure: " << r.report["numerical_failure"].get<std::string>() << '\n';
  std::cout << "report: " << (opts.out / "report.json").string() << '\n';
  return r.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical checks for the coupled Ricci-harmonic map flow on flat tori"};
  app.require_subcommand(1);

  std::string config;
  std::string builtin = "t2-coupled";
  std::string out = "rhflow_out";
  double resolution = 1.0;
  double tol_scale = 1.0;
  bool print_config = false;

  auto common = [&](CLI::App* sub) {
    auto* c = sub->add_option("--config", config, "Scenario config file");
    sub->add_option("--scenario", builtin, "Built-in scenario")
        ->check(CLI::IsMember(rhflow::builtin_names()))
        ->excludes(c);
    sub->add_option("--out", out, "Output directory");
    sub->add_option("--resolution-scale", resolution, "Multiply grid points, divide time steps")
        ->check(CLI::PositiveNumber);
    sub->add_option("--tol-scale", tol_scale, "Multiply every tolerance")->check(CLI::PositiveNumber);
    sub->add_flag("--print-config", print_config, "Print the resolved config and exit");
  };

  std::vector<std::pair<CLI::App*, std::string>> subs;
  for (const auto& st : rhflow::stage_names())
    subs.emplace_back(app.add_subcommand(st, "Run the flow and the " + st + " checks"), st);
  subs.emplace_back(app.add_subcommand("all", "Run every stage enabled in the scenario"), "");
  for (auto& [sub, name] : subs) common(sub);

  CLI11_PARSE(app, argc, argv);

  rhflow::RunOptions opts;
  opts.out = out;
  opts.tol_scale = tol_scale;
  for (auto& [sub, name] : subs)
    if (sub->parsed() && !name.empty()) opts.stages = {name};

  try {
    return run_stages(config, builtin, resolution, opts, print_config);
  } catch (const rhflow::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const rhflow::NumericalFailure& e) {
    std::cerr << "numerical failure at t = " << e.time() << ": " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
