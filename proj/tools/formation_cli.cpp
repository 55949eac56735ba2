// Command-line front end: validate scenarios, run simulations, export plot data.
//
// Exit codes: 0 success, 1 failed validation or safety violation, 2 parse/usage error.

#include "formation/check.hpp"
#include "formation/scenario_io.hpp"
#include "formation/sim.hpp"
#include "formation/trace_io.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace formation;

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

struct Options {
  std::string scenario;
  std::string out = "out";
  std::vector<std::string> overrides;
  bool force = false;
  bool quiet = false;
  std::string trace;
  std::string kind;
};

int cmd_check(const Options& opt) {
  LoadedScenario loaded;
  try {
    loaded = load_scenario(opt.scenario, opt.overrides);
  } catch (const ScenarioParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  const auto report = check_convergence(loaded.scenario);
  std::cout << "scenario: " << loaded.scenario.name << '\n' << report.text();
  std::cout << (report.passed() ? "check passed\n" : "check FAILED\n");
  return report.passed() ? kOk : kFailed;
}

int cmd_run(const Options& opt) {
  LoadedScenario loaded;
  try {
    loaded = load_scenario(opt.scenario, opt.overrides);
  } catch (const ScenarioParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  auto& sc = loaded.scenario;
  const auto report = check_convergence(sc);
  if (!report.passed()) {
    std::cerr << report.text();
    if (!opt.force || !report.scenario.structural_ok) {
      std::cerr << "run aborted: scenario check failed" << (report.scenario.structural_ok ? " (use --force)" : "") << '\n';
      return kFailed;
    }
    sc.control.strict = false;
  }

  const auto t0 = std::chrono::steady_clock::now();
  Simulation sim(sc);
  std::vector<StepTrace> trace;
  trace.reserve(sc.control.duration_steps);
  for (int k = 0; k < sc.control.duration_steps; ++k) {
    trace.push_back(sim.step());
    if (!opt.quiet && (k + 1) % 200 == 0) std::cerr << "  step " << k + 1 << "/" << sc.control.duration_steps << '\n';
  }
  const auto metrics = compute_metrics(sc, trace);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json header;
  header["scenario"] = loaded.document;
  header["overrides"] = opt.overrides;
  header["forced"] = opt.force && !report.passed();
  header["files"] = {"trace.csv", "metrics.csv", "constraints.csv"};
  try {
    fs::create_directories(opt.out);
    const fs::path dir(opt.out);
    write_atomic(dir / "trace.csv", trace_csv(trace));
    write_atomic(dir / "metrics.csv", metrics_csv(metrics, trace));
    write_atomic(dir / "constraints.csv", constraints_csv(trace));
    write_atomic(dir / "header.json", header.dump(2) + "\n");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }

  std::map<std::string, int> histogram;
  int first_pair_violation = -1, first_obstacle_violation = -1;
  double min_dij = std::numeric_limits<double>::infinity(), min_dim = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < metrics.size(); ++r) {
    for (const auto& v : trace[r].vehicles) ++histogram[to_string(v.status)];
    min_dij = std::min(min_dij, metrics.min_pairwise[r]);
    min_dim = std::min(min_dim, metrics.min_obstacle[r]);
    if (first_pair_violation < 0 && !(metrics.min_pairwise[r] > 1.0)) first_pair_violation = trace[r].k;
    if (first_obstacle_violation < 0 && !(metrics.min_obstacle[r] > 0.0)) first_obstacle_violation = trace[r].k;
  }
  std::cout << "scenario: " << sc.name << " (" << sc.size() << " vehicles, " << trace.size() << " steps)\n"
            << "final eps_f: " << metrics.formation_error.back() << " m\n"
            << "min d_ij: " << min_dij << "   min d_im: " << min_dim << " m\n"
            << "solver status:";
  for (const auto& [k, v] : histogram) std::cout << ' ' << k << '=' << v;
  std::cout << "\nwall time: " << wall << " s\noutput: " << opt.out << '\n';

  if (first_pair_violation >= 0 || first_obstacle_violation >= 0) {
    std::cout << "SAFETY VIOLATION:";
    if (first_pair_violation >= 0) std::cout << " d_ij <= 1 first at k=" << first_pair_violation << ';';
    if (first_obstacle_violation >= 0) std::cout << " d_im <= 0 first at k=" << first_obstacle_violation << ';';
    std::cout << '\n';
    return kFailed;
  }
  return kOk;
}

int cmd_export(const Options& opt) {
  static const std::vector<std::string> kinds{"trajectory3d", "metrics", "clearances"};
  if (std::find(kinds.begin(), kinds.end(), opt.kind) == kinds.end()) {
    std::cerr << "error: unknown export kind '" << opt.kind << "' (expected trajectory3d, metrics or clearances)\n";
    return kUsage;
  }
  fs::path dir(opt.trace);
  if (!fs::is_directory(dir)) dir = dir.parent_path();
  try {
    std::string text;
    if (opt.kind == "trajectory3d") {
      const auto t = read_csv(fs::is_directory(opt.trace) ? dir / "trace.csv" : fs::path(opt.trace));
      auto projected = t;
      for (auto& h : projected.header) {
        if (h == "p_x") h = "x";
        if (h == "p_y") h = "y";
        if (h == "p_z") h = "z";
      }
      text = project_columns(projected, {"k", "vehicle_id", "x", "y", "z"});
    } else {
      const auto t = read_csv(dir / "metrics.csv");
      if (opt.kind == "metrics") {
        std::vector<std::string> cols;
        for (const auto& h : t.header) {
          if (h == "k" || h == "eps_f" || h.rfind("eps_v_", 0) == 0) cols.push_back(h);
        }
        text = project_columns(t, cols);
      } else {
        text = project_columns(t, {"k", "min_d_ij", "min_d_im"});
      }
    }
    fs::create_directories(opt.out);
    write_atomic(fs::path(opt.out) / (opt.kind + ".csv"), text);
    if (!opt.quiet) std::cout << "wrote " << (fs::path(opt.out) / (opt.kind + ".csv")).string() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed formation flight with model-predictive tracking"};
  app.require_subcommand(1);
  Options opt;

  auto* check = app.add_subcommand("check", "Validate a scenario and its convergence conditions");
  check->add_option("--scenario", opt.scenario, "Scenario JSON file")->required();
  check->add_option("--override", opt.overrides, "Dotted-key override, e.g. control.gamma=2.5");

  auto* run = app.add_subcommand("run", "Simulate a scenario and write trace/metrics CSVs");
  run->add_option("--scenario", opt.scenario, "Scenario JSON file")->required();
  run->add_option("--out", opt.out, "Output directory");
  run->add_option("--override", opt.overrides, "Dotted-key override, e.g. control.N=5");
  run->add_flag("--force", opt.force, "Run even if the scenario check fails");
  run->add_flag("--quiet", opt.quiet, "Suppress progress output");

  auto* exp = app.add_subcommand("export", "Project a run's CSVs into plot-ready files");
  exp->add_option("--trace", opt.trace, "Run directory or trace.csv")->required();
  exp->add_option("--kind", opt.kind, "trajectory3d | metrics | clearances")->required();
  exp->add_option("--out", opt.out, "Output directory");
  exp->add_flag("--quiet", opt.quiet, "Suppress output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  if (check->parsed()) return cmd_check(opt);
  if (run->parsed()) return cmd_run(opt);
  return cmd_export(opt);
}
