#include <gtest/gtest.h>

#include "support.hpp"

using namespace urbanflow;
using namespace urbanflow::testing;

TEST(Multipliers, UpdateArithmetic) {
  BoundaryCoupling c;
  c.link = 4;
  MultiplierState m = make_multipliers(std::vector<BoundaryCoupling>{c}, 1, 1.0);
  EXPECT_EQ(m.lambda[0][0], 0.0);
  update_multipliers(m, {{3.0 - 1.0}});
  EXPECT_EQ(m.lambda[0][0], 2.0);
  // Second step uses alpha0 / 2.
  update_multipliers(m, {{-1.0}});
  EXPECT_EQ(m.lambda[0][0], 1.5);
  EXPECT_EQ(replay_multipliers(m), m.lambda);
}

TEST(Multipliers, ReplayAfterWarmStart) {
  BoundaryCoupling c;
  MultiplierState m = make_multipliers(std::vector<BoundaryCoupling>{c, c}, 2, 0.5);
  m.lambda = {{1.0, -2.0}, {0.25, 0.0}};
  m.initial = m.lambda;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int t = 0; t < 7; ++t) update_multipliers(m, {{n(rng), n(rng)}, {n(rng), n(rng)}});
  EXPECT_EQ(replay_multipliers(m), m.lambda);
}

TEST(Assign, StrategyMapping) {
  EXPECT_EQ(strategy_for(CongestionLevel::Congested), StrategyKind::Optimized);
  EXPECT_EQ(strategy_for(CongestionLevel::Moderate), StrategyKind::ScatsLike);
  EXPECT_EQ(strategy_for(CongestionLevel::Free), StrategyKind::PreTimed);
}

TEST(Desk, PartitionHasOneCouplingLink) {
  const Scenario s = make_two_intersection_line();
  const Partition p = desk_partition(s.network);
  ASSERT_EQ(p.regions.size(), 2u);
  EXPECT_EQ(p.region_of_intersection, (std::vector<int>{0, 1}));
  ASSERT_EQ(p.boundary_links.size(), 1u);
  EXPECT_EQ(p.boundary_links[0].link, 2);
}

TEST(Coordination, ZeroDemandConvergesImmediately) {
  LineOptions o;
  o.west_vph = o.north0_vph = o.north1_vph = 0.0;
  const DeskRun run = desk_coordination(o);
  ASSERT_TRUE(run.outcome.report.has_value());
  EXPECT_EQ(run.outcome.report->iterations, 1u);
  EXPECT_EQ(run.outcome.report->residual, 0.0);
  EXPECT_TRUE(run.outcome.report->converged);
  EXPECT_EQ(run.outcome.multipliers.lambda, run.outcome.multipliers.initial);
  EXPECT_EQ(run.outcome.plans, run.scenario.base_plans);
}

TEST(Coordination, DeskInstanceNearCentralizedOptimum) {
  const std::vector<LineOptions> cases = [] {
    std::vector<LineOptions> v(3);
    v[1].west_vph = 1500.0;
    v[1].north1_vph = 900.0;
    v[2].west_vph = 600.0;
    v[2].north0_vph = 1100.0;
    return v;
  }();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const DeskRun run = desk_coordination(cases[i]);
    ASSERT_TRUE(run.outcome.report.has_value());
    const auto& rep = *run.outcome.report;
    EXPECT_LE(run.joint_size, 10000u);
    EXPECT_GE(run.coordinated, run.centralized - 1e-9) << i;
    EXPECT_LE(run.coordinated, 1.05 * run.centralized) << i;
    EXPECT_TRUE(rep.converged) << i;
    EXPECT_LT(rep.residual, CoordinationConfig{}.tol) << i;
    EXPECT_LE(rep.iterations, 20u);
    EXPECT_EQ(rep.residual_trace.size(), rep.iterations);
    EXPECT_EQ(rep.residual_trace.back(), rep.dual_residual);
    EXPECT_EQ(replay_multipliers(run.outcome.multipliers), run.outcome.multipliers.lambda) << i;
  }
}

TEST(Coordination, PlainDualIterationIsReported) {
  LineOptions o;
  o.west_vph = 1500.0;
  CoordinationConfig cfg;
  cfg.rho = 0.0;
  const DeskRun run = desk_coordination(o, 4, {}, cfg);
  const auto& rep = *run.outcome.report;
  EXPECT_EQ(rep.residual_trace.size(), rep.iterations);
  // No update follows the last iterate.
  EXPECT_EQ(run.outcome.multipliers.residual_history.size() + 1, rep.iterations);
  EXPECT_EQ(replay_multipliers(run.outcome.multipliers), run.outcome.multipliers.lambda);
}

TEST(Coordination, RepairedPlansAreConsistentOnALine) {
  // The importer re-solves against the exporter's realized outflow, so the
  // returned boundary flows agree exactly.
  LineOptions o;
  o.west_vph = 1400.0;
  o.north1_vph = 800.0;
  const DeskRun run = desk_coordination(o);
  const auto& rep = *run.outcome.report;
  if (rep.repaired_from) {
    EXPECT_EQ(rep.residual, 0.0);
  }
  ASSERT_EQ(rep.link_residuals.size(), 1u);
  EXPECT_EQ(rep.link_residuals[0].first, 2);
  EXPECT_EQ(rep.link_residuals[0].second, rep.residual);
}

TEST(Coordination, UpstreamFirstOrder) {
  std::vector<BoundaryCoupling> c(3);
  c[0].exporting_region = 2;
  c[0].importing_region = 0;
  c[1].exporting_region = 0;
  c[1].importing_region = 1;
  c[2].exporting_region = 3;
  c[2].importing_region = 2;
  EXPECT_EQ(detail::upstream_first(4, c), (std::vector<std::size_t>{3, 2, 0, 1}));
  // A cycle falls back to index order.
  std::vector<BoundaryCoupling> loop(2);
  loop[0].exporting_region = 0;
  loop[0].importing_region = 1;
  loop[1].exporting_region = 1;
  loop[1].importing_region = 0;
  EXPECT_EQ(detail::upstream_first(2, loop), (std::vector<std::size_t>{0, 1}));
}

TEST(Coordination, ParallelMatchesSequential) {
  CoordinationConfig seq, par;
  par.parallel = true;
  OptimizerConfig opt_par;
  opt_par.parallel = true;
  LineOptions o;
  o.west_vph = 1500.0;
  const DeskRun a = desk_coordination(o, 4, {}, seq);
  const DeskRun b = desk_coordination(o, 4, opt_par, par);
  EXPECT_EQ(a.outcome.plans, b.outcome.plans);
  EXPECT_EQ(a.outcome.multipliers.lambda, b.outcome.multipliers.lambda);
  EXPECT_EQ(a.outcome.report->residual_trace, b.outcome.report->residual_trace);
}

TEST(Coordination, SingleRegionEqualsPlainOptimizer) {
  const Scenario s = make_grid_scenario();
  SimState st = make_initial_state(s.network, s.dt);
  std::mt19937_64 rng(3);
  random_load(s, st, rng);
  const Partition p = single_region(s.network, CongestionLevel::Congested);
  const std::vector<StrategyKind> assign{StrategyKind::Optimized};
  const std::vector<double> previous(s.network.link_count(), 0.0);
  RegionModelCache cache(s.network);
  const OptimizerConfig opt;
  CycleInputs in{&s.network, &st, s.true_ratios, &p, assign, s.base_plans, previous};
  const CycleOutcome out = run_control_cycle(in, cache, MultiplierState{}, opt, CoordinationConfig{});
  ASSERT_TRUE(out.report.has_value());
  EXPECT_EQ(out.report->iterations, 1u);
  EXPECT_TRUE(out.multipliers.lambda.empty());
  EXPECT_TRUE(out.multipliers.residual_history.empty());

  const RegionModel whole(s.network, all_intersections(s.network));
  const auto plain = optimize_region(make_problem(whole, st, s.true_ratios, s.base_plans, opt.horizon_cycles), opt);
  EXPECT_EQ(out.plans, plain.plans);
}

TEST(Staging, NoStagedRegionsGiveEmptyInputs) {
  const Scenario s = make_two_intersection_line();
  const Partition p = desk_partition(s.network);
  const std::vector<StrategyKind> assign{StrategyKind::Optimized, StrategyKind::Optimized};
  RegionModelCache cache(s.network);
  const std::vector<double> previous(s.network.link_count(), 0.0);
  const SimState st = make_initial_state(s.network, s.dt);
  EXPECT_TRUE(stage_pretimed(p, assign, cache, st, s.true_ratios, s.base_plans, previous, 2).empty());
}

TEST(Staging, ZeroDemandExportsNothing) {
  LineOptions o;
  o.west_vph = o.north0_vph = o.north1_vph = 0.0;
  const Scenario s = make_two_intersection_line(o);
  const Partition p = desk_partition(s.network);
  const std::vector<StrategyKind> assign{StrategyKind::PreTimed, StrategyKind::Optimized};
  RegionModelCache cache(s.network);
  const std::vector<double> previous(s.network.link_count(), 0.0);
  const auto fixed = stage_pretimed(p, assign, cache, make_initial_state(s.network, s.dt), s.true_ratios,
                                    s.base_plans, previous, 2);
  ASSERT_EQ(fixed.size(), 1u);
  EXPECT_EQ(fixed.at(2), (std::vector<double>{0.0, 0.0}));
}

TEST(Staging, ExportMatchesStandaloneSimulation) {
  // Staged region {X0} under its plan; oracle: the whole line simulated
  // directly, counting vehicles that enter link 2 per cycle.
  const Scenario s = make_two_intersection_line();
  SimState st = make_initial_state(s.network, s.dt);
  preload_link(s.network, st, 0, std::vector<double>{10.0, 14.0}, s.true_ratios);
  preload_link(s.network, st, 1, std::vector<double>{5.0, 9.0}, s.true_ratios);
  const Partition p = desk_partition(s.network);
  const std::vector<StrategyKind> assign{StrategyKind::PreTimed, StrategyKind::Optimized};
  RegionModelCache cache(s.network);
  const std::vector<double> previous(s.network.link_count(), 0.0);
  const auto fixed = stage_pretimed(p, assign, cache, st, s.true_ratios, s.base_plans, previous, 2);

  Simulator sim(s.network);
  const auto S = steps_per_cycle(s.cycle, s.dt);
  const auto d = decide_cycle(s.base_plans, st.step, 2 * S, s.dt);
  std::vector<double> per_cycle(2, 0.0);
  std::vector<int> phases(2);
  for (std::size_t k = 0; k < 2 * S; ++k) {
    phases = {d[0][k], d[1][k]};
    sim.advance(st, phases, s.true_ratios);
    per_cycle[k / S] += st.link_inflow[2];
  }
  // Link 2 never backs up into X0 within two cycles here, so the staged
  // region's free exit equals the coupled network's inflow.
  ASSERT_EQ(fixed.count(2), 1u);
  EXPECT_NEAR(fixed.at(2)[0], per_cycle[0], 1e-9);
  EXPECT_NEAR(fixed.at(2)[1], per_cycle[1], 1e-9);
  EXPECT_GT(per_cycle[0], 0.0);
}

TEST(ControlCycle, AllPreTimedMatchesGlobalPreTimed) {
  const Scenario s = make_grid_scenario();
  const SimState st = make_initial_state(s.network, s.dt);
  const Partition p = single_region(s.network, CongestionLevel::Free);
  const std::vector<StrategyKind> assign{StrategyKind::PreTimed};
  const std::vector<double> previous(s.network.link_count(), 0.0);
  RegionModelCache cache(s.network);
  CycleInputs in{&s.network, &st, s.true_ratios, &p, assign, s.base_plans, previous};
  const auto out = run_control_cycle(in, cache, MultiplierState{}, OptimizerConfig{}, CoordinationConfig{});
  EXPECT_FALSE(out.report.has_value());
  const auto S = steps_per_cycle(s.cycle, s.dt);
  EXPECT_EQ(out.decisions, decide_cycle(s.base_plans, st.step, S, s.dt));
  for (std::size_t x = 0; x < s.base_plans.size(); ++x)
    for (std::size_t k = 0; k < S; ++k)
      EXPECT_EQ(out.decisions[x][k], pretimed_decide(s.base_plans[x], s.dt * static_cast<double>(k)));
}

TEST(ControlCycle, MixedLineCoversEveryIntersectionOnce) {
  const Scenario s = make_two_intersection_line();
  const SimState st = make_initial_state(s.network, s.dt);
  const Partition p = desk_partition(s.network);
  const std::vector<StrategyKind> assign{StrategyKind::Optimized, StrategyKind::PreTimed};
  const std::vector<double> previous(s.network.link_count(), 0.0);
  RegionModelCache cache(s.network);
  CycleInputs in{&s.network, &st, s.true_ratios, &p, assign, s.base_plans, previous};
  const auto out = run_control_cycle(in, cache, MultiplierState{}, OptimizerConfig{}, CoordinationConfig{});
  ASSERT_EQ(out.decisions.size(), s.network.intersection_count());
  ASSERT_EQ(out.plans.size(), s.network.intersection_count());
  const auto S = steps_per_cycle(s.cycle, s.dt);
  for (const auto& d : out.decisions) EXPECT_EQ(d.size(), S);
  EXPECT_EQ(out.plans[1], s.base_plans[1]);  // staged region keeps its plan
  // No responsive pair, so nothing to coordinate.
  EXPECT_TRUE(out.multipliers.lambda.empty());
}

TEST(ControlCycle, WarmMultipliersResetWhenCouplingsChange) {
  LineOptions o;
  o.west_vph = 1500.0;
  const DeskRun first = desk_coordination(o);
  MultiplierState stale = first.outcome.multipliers;
  stale.links = {99};
  const Scenario& s = first.scenario;
  SimState st = make_initial_state(s.network, s.dt);
  const std::vector<StrategyKind> assign{StrategyKind::Optimized, StrategyKind::Optimized};
  const std::vector<double> previous(s.network.link_count(), 0.0);
  RegionModelCache cache(s.network);
  CycleInputs in{&s.network, &st, s.true_ratios, &first.partition, assign, s.base_plans, previous};
  const auto out = run_control_cycle(in, cache, stale, OptimizerConfig{}, CoordinationConfig{});
  for (const auto& row : out.multipliers.initial)
    for (double v : row) EXPECT_EQ(v, 0.0);
}
