#pragma once

// Small fixtures shared by the unit tests and the acceptance binary.

#include <array>
#include <random>
#include <string>
#include <vector>

#include "urbanflow/urbanflow.hpp"

namespace urbanflow::testing {

inline CellParams cell(double n_max, double q_max, double delta) { return CellParams{n_max, q_max, delta}; }

// One link of `cells` identical cells that is both source and sink.
inline Network single_link(std::size_t cells, CellParams p, double demand_vps = 0.0) {
  std::vector<Link> links{Link{0, std::vector<CellParams>(cells, p), 1}};
  std::vector<Source> sources{{0, DemandProfile::constant(demand_vps)}};
  return Network(std::move(links), {}, std::move(sources), {0});
}

// Links 0 (entry) -> X0 -> links 1 and 2 (sinks). Movement 0: 0->1 on phase
// 0, movement 1: 0->2 on phase 1.
inline Network three_link_intersection(double demand_vps, std::size_t cells = 2, CellParams p = {20.0, 1.0, 0.5}) {
  std::vector<Link> links;
  for (int i = 0; i < 3; ++i) links.push_back(Link{i, std::vector<CellParams>(cells, p), 2});
  Intersection x;
  x.id = 0;
  x.movements = {make_movement(0, 0, 1, 2, 2.0), make_movement(1, 0, 2, 1, 2.0)};
  x.phases = {{0}, {1}};
  x.lost_time_per_phase = 2.0;
  return Network(std::move(links), {x}, {{0, DemandProfile::constant(demand_vps)}}, {1, 2});
}

// A randomized grid scenario: size, cell layout, wave ratio, demand, turning
// ratios and base plans all drawn from `rng`.
inline Scenario random_grid(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dim(1, 3);
  std::uniform_int_distribution<int> cells(1, 3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GridOptions o;
  o.rows = dim(rng);
  o.cols = dim(rng);
  o.cells_per_link = static_cast<std::size_t>(cells(rng));
  o.cell_capacity = 5.0 + 40.0 * u(rng);
  o.max_flow_vph = 1800.0 + 1800.0 * u(rng);
  o.delta = 0.2 + 0.8 * u(rng);
  o.background_vph = 1500.0 * u(rng);
  o.cross_vph = 1500.0 * u(rng);
  o.cross_columns = {0};
  o.corridor_row = o.rows > 1 ? 1 : 0;
  o.corridor_breakpoints = {0.0, 200.0};
  o.corridor_vph = {3000.0 * u(rng), 3000.0 * u(rng)};
  o.corridor_period = 400.0;
  o.through_ratio = 0.2 + 0.7 * u(rng);
  o.corridor_through_ratio = 0.2 + 0.7 * u(rng);
  o.protected_lefts = u(rng) < 0.5;
  const std::size_t P = o.protected_lefts ? 4 : 2;
  o.cycle = 60.0;
  o.lost_time = 2.0;
  auto random_greens = [&] {
    // Integer greens of at least 5 s summing to the budget.
    const int budget = static_cast<int>(o.cycle - o.lost_time * static_cast<double>(P));
    std::vector<double> g(P, 5.0);
    for (int extra = budget - 5 * static_cast<int>(P); extra > 0; --extra)
      g[static_cast<std::size_t>(rng() % P)] += 1.0;
    return g;
  };
  o.base_greens = random_greens();
  o.cross_greens = random_greens();
  o.steps = 600;
  return make_grid_scenario(o);
}

// Random initial occupancy of every link.
inline void random_load(const Scenario& s, SimState& st, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t l = 0; l < s.network.link_count(); ++l) {
    const auto& link = s.network.link(static_cast<int>(l));
    std::vector<double> per_cell;
    for (const auto& c : link.cells) per_cell.push_back(c.n_max * u(rng));
    preload_link(s.network, st, static_cast<int>(l), per_cell, s.true_ratios);
  }
}

// Joint enumeration of every intersection's split on the optimizer's grid:
// the exact optimum of the discrete problem.
inline double joint_enumeration(const RegionProblem& p, const OptimizerConfig& cfg,
                                std::vector<SignalPlan>* best_plans = nullptr) {
  std::vector<std::vector<std::vector<double>>> grids;
  for (const auto& plan : p.incumbent)
    grids.push_back(enumerate_splits(plan.phase_count(), plan.green_budget(), cfg.g_min, cfg.g_step));
  std::vector<SignalPlan> trial = p.incumbent;
  double best = evaluate(p, trial, p.imports, cfg.horizon_cycles);
  if (best_plans) *best_plans = trial;
  std::vector<std::size_t> idx(grids.size(), 0);
  while (true) {
    for (std::size_t x = 0; x < grids.size(); ++x) trial[x].greens = grids[x][idx[x]];
    const double v = evaluate(p, trial, p.imports, cfg.horizon_cycles);
    if (v < best) {
      best = v;
      if (best_plans) *best_plans = trial;
    }
    std::size_t k = 0;
    while (k < idx.size() && ++idx[k] == grids[k].size()) idx[k++] = 0;
    if (k == idx.size()) break;
  }
  return best;
}

// Closed pre-timed run of one intersection whose two turning movements are
// served on different phases, under a cyclic demand profile. Returns the
// estimator error after every signal cycle.
struct ConvergenceRun {
  std::vector<double> errors;  // per cycle
  std::size_t cycles_per_period = 0;
};

inline ConvergenceRun estimator_convergence_run(std::size_t periods, std::size_t window = 10,
                                                double true_left = 0.3) {
  const double cycle = 40.0, period = 120.0;
  std::vector<Link> links;
  for (int i = 0; i < 3; ++i) links.push_back(Link{i, std::vector<CellParams>(2, CellParams{20.0, 1.0, 0.5}), 2});
  Intersection x;
  x.id = 0;
  x.movements = {make_movement(0, 0, 1, 2, 2.0), make_movement(1, 0, 2, 1, 2.0)};
  x.phases = {{0}, {1}};
  x.lost_time_per_phase = 2.0;
  const DemandProfile demand({0.0, 40.0, 80.0}, {0.25, 0.55, 0.1}, period);
  const Network net(std::move(links), {x}, {{0, demand}}, {1, 2});
  const std::vector<double> truth{1.0 - true_left, true_left};
  const SignalPlan plan{cycle, {20.0, 16.0}, 0.0, 2.0};

  Simulator sim(net);
  SimState s = make_initial_state(net, 1.0);
  NetworkBranchingEstimator est(net, window);
  ConvergenceRun run;
  run.cycles_per_period = static_cast<std::size_t>(period / cycle);
  const std::size_t cycles = periods * run.cycles_per_period;
  for (std::size_t c = 0; c < cycles; ++c) {
    std::vector<double> discharged(net.movement_count(), 0.0);
    for (int k = 0; k < static_cast<int>(cycle); ++k) {
      const std::vector<int> phases{pretimed_decide(plan, s.time())};
      sim.advance(s, phases, truth);
      for (std::size_t m = 0; m < discharged.size(); ++m) discharged[m] += s.movement_outflow[m];
    }
    est.record_cycle(static_cast<long>(c), discharged);
    run.errors.push_back(estimate_error(est.ratios(), truth));
  }
  return run;
}

}  // namespace urbanflow::testing

namespace urbanflow::testing {

// Largest relative gap between the BPTT gradient and central differences.
inline double gradient_check(ElmanNetwork net, std::span<const TrainingSample> samples, double eps = 1e-5) {
  const auto analytic = loss_gradient(net, samples);
  double worst = 0.0;
  auto p = net.parameters();
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double keep = p[k];
    p[k] = keep + eps;
    const double up = training_loss(net, samples);
    p[k] = keep - eps;
    const double down = training_loss(net, samples);
    p[k] = keep;
    const double numeric = (up - down) / (2.0 * eps);
    const double scale = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(analytic[k] - numeric) / scale);
  }
  return worst;
}

inline std::vector<TrainingSample> random_samples(std::mt19937_64& rng, std::size_t count, std::size_t context,
                                                  std::size_t horizon) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<TrainingSample> out(count);
  for (auto& s : out) {
    for (std::size_t t = 0; t < context; ++t) s.inputs.push_back(u(rng));
    for (std::size_t j = 0; j < horizon; ++j) s.targets.push_back(u(rng));
  }
  return out;
}

}  // namespace urbanflow::testing

namespace urbanflow::testing {

// n links in a chain: link i -> X_i -> link i+1. Link 0 is fed by a source,
// link n-1 is the sink.
inline Network line_network(int n) {
  std::vector<Link> links;
  for (int i = 0; i < n; ++i) links.push_back(Link{i, {CellParams{20.0, 1.0, 0.5}}, 1});
  std::vector<Intersection> xs;
  for (int i = 0; i + 1 < n; ++i) {
    Intersection x;
    x.id = i;
    x.movements = {make_movement(i, i, i + 1, 1, 2.0)};
    x.phases = {{i}};
    xs.push_back(std::move(x));
  }
  return Network(std::move(links), std::move(xs), {{0, DemandProfile::constant(0.1)}}, {n - 1});
}

// Structural checks every partition must pass; returns a description of the
// first violation, or an empty string.
inline std::string partition_violation(const Network& net, const Partition& p) {
  std::vector<int> seen(net.link_count(), -1);
  for (std::size_t r = 0; r < p.regions.size(); ++r) {
    const auto& links = p.regions[r].links;
    if (links.empty()) return "empty region " + std::to_string(r);
    for (int l : links) {
      if (seen[static_cast<std::size_t>(l)] != -1) return "link " + std::to_string(l) + " in two regions";
      seen[static_cast<std::size_t>(l)] = static_cast<int>(r);
      if (p.region_of_link[static_cast<std::size_t>(l)] != static_cast<int>(r)) return "region_of_link mismatch";
    }
    // Connectivity by BFS restricted to the region.
    std::vector<char> inside(net.link_count(), 0), reached(net.link_count(), 0);
    for (int l : links) inside[static_cast<std::size_t>(l)] = 1;
    std::vector<int> stack{links.front()};
    reached[static_cast<std::size_t>(links.front())] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
      const int l = stack.back();
      stack.pop_back();
      for (int nb : net.adjacent_links(l))
        if (inside[static_cast<std::size_t>(nb)] && !reached[static_cast<std::size_t>(nb)]) {
          reached[static_cast<std::size_t>(nb)] = 1;
          ++count;
          stack.push_back(nb);
        }
    }
    if (count != links.size()) return "region " + std::to_string(r) + " is not connected";
  }
  for (std::size_t l = 0; l < net.link_count(); ++l)
    if (seen[l] == -1) return "link " + std::to_string(l) + " uncovered";

  // Boundary links: exactly the links whose two intersections are controlled
  // by different regions, each listed once with both regions.
  std::vector<int> listed(net.link_count(), 0);
  for (const auto& b : p.boundary_links) {
    if (listed[static_cast<std::size_t>(b.link)]++) return "boundary link listed twice";
    const int up = net.upstream_intersection(b.link), down = net.downstream_intersection(b.link);
    if (up == kNone || down == kNone) return "boundary link without two intersections";
    if (b.exporting_region != p.region_of_intersection[static_cast<std::size_t>(up)] ||
        b.importing_region != p.region_of_intersection[static_cast<std::size_t>(down)] ||
        b.exporting_region == b.importing_region)
      return "boundary link regions wrong";
  }
  for (std::size_t l = 0; l < net.link_count(); ++l) {
    const int up = net.upstream_intersection(static_cast<int>(l)), down = net.downstream_intersection(static_cast<int>(l));
    if (up == kNone || down == kNone) continue;
    const bool cut = p.region_of_intersection[static_cast<std::size_t>(up)] !=
                     p.region_of_intersection[static_cast<std::size_t>(down)];
    if (cut != (listed[l] == 1)) return "boundary list incomplete at link " + std::to_string(l);
  }
  for (std::size_t x = 0; x < net.intersection_count(); ++x)
    if (p.region_of_intersection[x] == kNone) return "intersection without region";
  return "";
}

inline std::vector<CongestionLevel> random_levels(std::size_t n, std::mt19937_64& rng) {
  std::vector<CongestionLevel> out(n);
  for (auto& l : out) l = static_cast<CongestionLevel>(rng() % 3);
  return out;
}

}  // namespace urbanflow::testing

namespace urbanflow::testing {

// A small optimizer instance: the whole scenario is one region starting
// from a loaded state.
struct OracleInstance {
  std::string name;
  Scenario scenario;
  SimState state;
};

inline std::vector<OracleInstance> optimizer_oracle_instances() {
  std::vector<OracleInstance> out;
  const std::vector<std::pair<double, double>> single_demands{
      {900.0, 0.0}, {1500.0, 400.0}, {600.0, 600.0}, {300.0, 1400.0}, {1700.0, 1700.0}};
  for (std::size_t i = 0; i < single_demands.size(); ++i) {
    SingleIntersectionOptions o;
    o.demand_a_vph = single_demands[i].first;
    o.demand_b_vph = single_demands[i].second;
    o.cycle = 40.0 + 10.0 * static_cast<double>(i % 2);
    Scenario s = make_single_intersection(o);
    SimState st = make_initial_state(s.network, s.dt);
    preload_link(s.network, st, 0, std::vector<double>{4.0 * static_cast<double>(i), 10.0}, s.true_ratios);
    preload_link(s.network, st, 1, std::vector<double>{2.0, 3.0 * static_cast<double>(i)}, s.true_ratios);
    out.push_back({"single-" + std::to_string(i), std::move(s), std::move(st)});
  }
  const std::vector<std::array<double, 3>> line_demands{{1000.0, 500.0, 500.0}, {1600.0, 300.0, 900.0},
                                                        {400.0, 1200.0, 700.0}};
  for (std::size_t i = 0; i < line_demands.size(); ++i) {
    LineOptions o;
    o.west_vph = line_demands[i][0];
    o.north0_vph = line_demands[i][1];
    o.north1_vph = line_demands[i][2];
    Scenario s = make_two_intersection_line(o);
    SimState st = make_initial_state(s.network, s.dt);
    preload_link(s.network, st, 0, std::vector<double>{8.0, 12.0}, s.true_ratios);
    preload_link(s.network, st, 2, std::vector<double>{3.0 * static_cast<double>(i), 6.0}, s.true_ratios);
    preload_link(s.network, st, 4, std::vector<double>{5.0, 9.0}, s.true_ratios);
    out.push_back({"line-" + std::to_string(i), std::move(s), std::move(st)});
  }
  return out;
}

inline std::vector<int> all_intersections(const Network& net) {
  std::vector<int> xs(net.intersection_count());
  for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = static_cast<int>(i);
  return xs;
}

struct OracleComparison {
  double descent = 0.0;
  double joint = 0.0;
  std::size_t rollouts = 0;
  bool budget_exhausted = false;
};

inline OracleComparison compare_with_enumeration(const OracleInstance& inst, const OptimizerConfig& cfg) {
  const Scenario& s = inst.scenario;
  const RegionModel model(s.network, all_intersections(s.network));
  const RegionProblem p = make_problem(model, inst.state, s.true_ratios, s.base_plans, cfg.horizon_cycles);
  const OptimizeResult r = optimize_region(p, cfg);
  return {r.objective, joint_enumeration(p, cfg), r.rollouts, r.budget_exhausted};
}

}  // namespace urbanflow::testing

namespace urbanflow::testing {

// Two-intersection line split into regions {X0} and {X1}, both optimized and
// coupled through link 2.
struct DeskRun {
  Scenario scenario;
  SimState state;
  Partition partition;
  CycleOutcome outcome;
  double coordinated = 0.0;  // centralized objective of the coordinated plans
  double centralized = 0.0;  // brute-force optimum over both intersections
  std::size_t joint_size = 0;
};

inline Partition desk_partition(const Network& net) {
  using L = CongestionLevel;
  const std::vector<L> levels{L::Congested, L::Congested, L::Free, L::Congested, L::Free, L::Free, L::Free};
  return cluster_links(net, levels);
}

// The state is reached by running the base plans for `warmup_cycles` from
// empty, so boundary inflows of the last cycle are realistic warm starts.
inline DeskRun desk_coordination(const LineOptions& o, std::size_t warmup_cycles = 4,
                                 const OptimizerConfig& opt = {}, const CoordinationConfig& coord = {}) {
  DeskRun run;
  run.scenario = make_two_intersection_line(o);
  const Scenario& s = run.scenario;
  SimState st = make_initial_state(s.network, s.dt);
  Simulator sim(s.network);
  const auto S = steps_per_cycle(s.cycle, s.dt);
  std::vector<double> previous(s.network.link_count(), 0.0);
  std::vector<int> phases(s.network.intersection_count());
  for (std::size_t c = 0; c < warmup_cycles; ++c) {
    const auto d = decide_cycle(s.base_plans, st.step, S, s.dt);
    std::fill(previous.begin(), previous.end(), 0.0);
    for (std::size_t k = 0; k < S; ++k) {
      for (std::size_t x = 0; x < phases.size(); ++x) phases[x] = d[x][k];
      sim.advance(st, phases, s.true_ratios);
      for (std::size_t l = 0; l < previous.size(); ++l) previous[l] += st.link_inflow[l];
    }
  }
  run.state = st;
  run.partition = desk_partition(s.network);
  const std::vector<StrategyKind> assign(run.partition.regions.size(), StrategyKind::Optimized);
  RegionModelCache cache(s.network);
  CycleInputs in;
  in.network = &s.network;
  in.state = &st;
  in.ratios = s.true_ratios;
  in.partition = &run.partition;
  in.assignments = assign;
  in.plans = s.base_plans;
  in.previous_inflow = previous;
  run.outcome = run_control_cycle(in, cache, MultiplierState{}, opt, coord);

  const RegionModel whole(s.network, all_intersections(s.network));
  const RegionProblem p = make_problem(whole, st, s.true_ratios, s.base_plans, opt.horizon_cycles);
  run.coordinated = evaluate(p, run.outcome.plans, p.imports, opt.horizon_cycles);
  run.centralized = joint_enumeration(p, opt);
  run.joint_size = 1;
  for (const auto& plan : s.base_plans)
    run.joint_size *= enumerate_splits(plan.phase_count(), plan.green_budget(), opt.g_min, opt.g_step).size();
  return run;
}

}  // namespace urbanflow::testing
