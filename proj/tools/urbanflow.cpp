// Command-line front end: simulate, validate, partition, --print-config.
// Exit codes: 0 success, 1 scenario validation failure, 2 runtime error.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "urbanflow/urbanflow.hpp"

namespace uf = urbanflow;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kRuntime = 2;

nlohmann::json default_config() {
  const uf::Scenario s;
  return nlohmann::json{{"dt_s", s.dt},       {"steps", s.steps},
                        {"seed", s.seed},     {"cycle_s", s.cycle},
                        {"control", uf::control_to_json(s.control)}};
}

std::vector<uf::StrategyKind> parse_strategies(const std::string& list) {
  std::vector<uf::StrategyKind> out;
  std::stringstream in(list);
  std::string name;
  while (std::getline(in, name, ','))
    if (!name.empty()) out.push_back(uf::parse_strategy(name));
  if (out.empty()) throw std::invalid_argument("no strategies given");
  return out;
}

std::string summary_path(const std::string& metrics) {
  std::filesystem::path p(metrics);
  return (p.parent_path() / (p.stem().string() + ".summary.csv")).string();
}

int run_validate(const std::string& path) {
  const uf::Scenario s = uf::load_scenario(path);
  std::cout << "scenario '" << s.name << "' is valid: " << s.network.link_count() << " links, "
            << s.network.intersection_count() << " intersections, " << s.network.movement_count() << " movements, "
            << s.network.source_count() << " sources, " << s.network.sinks().size() << " sinks\n";
  nlohmann::json echo{{"dt_s", s.dt}, {"steps", s.steps}, {"seed", s.seed}, {"cycle_s", s.cycle},
                      {"control", uf::control_to_json(s.control)}};
  std::cout << echo.dump(2) << '\n';
  return kOk;
}

int run_simulate(const std::string& path, const std::string& strategies, std::optional<long> steps,
                 std::optional<std::uint64_t> seed, const std::string& out, bool verbose) {
  const uf::Scenario s = uf::load_scenario(path);
  const auto kinds = parse_strategies(strategies);
  uf::RunOptions opt;
  opt.steps = steps;
  opt.seed = seed;
  if (steps && *steps < 1) throw uf::ValidationError("simulation-length", "--steps must be positive");
  const auto traces = uf::run_experiment(s, kinds, opt);
  uf::write_metrics(traces, out, verbose);
  uf::write_summary(traces, summary_path(out));

  double optimized_wall = -1.0;
  for (const auto& t : traces)
    if (t.strategy == uf::StrategyKind::Optimized) optimized_wall = t.controller_wall_s;
  std::printf("%-10s %18s %12s %14s %10s\n", "strategy", "cumulative_delay", "throughput", "controller_s", "vs_opt");
  for (const auto& t : traces) {
    std::printf("%-10s %18.1f %12.1f %14.4f", uf::to_string(t.strategy), t.final_delay(),
                t.rows.empty() ? 0.0 : t.rows.back().throughput, t.controller_wall_s);
    if (optimized_wall > 0.0)
      std::printf(" %10.3f", t.controller_wall_s / optimized_wall);
    std::printf("\n");
  }
  std::cout << "metrics written to " << out << " (summary: " << summary_path(out) << ")\n";
  return kOk;
}

int run_partition(const std::string& path, long at_step) {
  const uf::Scenario s = uf::load_scenario(path);
  if (at_step < 0) throw uf::ValidationError("partition", "--at-step must be non-negative");
  uf::RunOptions opt;
  opt.steps = std::max<long>(at_step, 1);
  uf::Partition part;
  std::vector<uf::StrategyKind> assignments;
  opt.after_cycle = [&](const uf::Controller& c, const uf::CycleRecord&) {
    const auto& h = dynamic_cast<const uf::HybridController&>(c);
    part = h.partition();
    assignments.assign(h.assignments().begin(), h.assignments().end());
  };
  uf::run_strategy(s, uf::StrategyKind::Hybrid, opt);

  std::cout << "partition in force at step " << at_step << ": " << part.regions.size() << " regions\n";
  for (std::size_t r = 0; r < part.regions.size(); ++r) {
    const auto& region = part.regions[r];
    std::cout << "region " << region.id << " level=" << uf::to_string(region.level)
              << " strategy=" << uf::to_string(assignments[r]) << "\n  links:";
    for (int l : region.links) std::cout << ' ' << l;
    std::cout << "\n  intersections:";
    for (int x : region.intersections) std::cout << ' ' << x;
    std::cout << '\n';
  }
  std::cout << "boundary links:";
  for (const auto& b : part.boundary_links)
    std::cout << ' ' << b.link << '(' << b.exporting_region << "->" << b.importing_region << ')';
  std::cout << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Macroscopic traffic network simulator with hybrid signal control"};
  app.require_subcommand(0, 1);
  bool print_config = false;
  app.add_flag("--print-config", print_config, "Print every default parameter as JSON and exit");

  std::string scenario;
  auto* simulate = app.add_subcommand("simulate", "Run strategies on a scenario and write per-cycle metrics");
  std::string strategies = "pretimed,scats,optimized,hybrid";
  std::optional<long> steps;
  std::optional<std::uint64_t> seed;
  std::string out = "metrics.csv";
  bool verbose = false;
  simulate->add_option("--scenario", scenario, "Scenario JSON file")->required();
  simulate->add_option("--strategies", strategies, "Comma-separated subset of pretimed,scats,optimized,hybrid")
      ->capture_default_str();
  simulate->add_option("--steps", steps, "Simulation length in steps (default: scenario value)");
  simulate->add_option("--seed", seed, "Demand noise seed (default: scenario value)");
  simulate->add_option("--out", out, "Metrics CSV path")->capture_default_str();
  simulate->add_flag("--verbose", verbose, "Append per-boundary coordination residual columns");

  auto* validate = app.add_subcommand("validate", "Load a scenario and report invariant violations");
  validate->add_option("--scenario", scenario, "Scenario JSON file")->required();

  auto* partition = app.add_subcommand("partition", "Show the hybrid partition in force at a given step");
  long at_step = 0;
  partition->add_option("--scenario", scenario, "Scenario JSON file")->required();
  partition->add_option("--at-step", at_step, "Step at which to inspect the partition")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kRuntime;
  }

  try {
    if (print_config) {
      std::cout << default_config().dump(2) << '\n';
      return kOk;
    }
    if (*validate) return run_validate(scenario);
    if (*simulate) return run_simulate(scenario, strategies, steps, seed, out, verbose);
    if (*partition) return run_partition(scenario, at_step);
    std::cout << app.help();
    return kOk;
  } catch (const uf::ScenarioError& e) {
    std::cerr << "invalid scenario: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
}
