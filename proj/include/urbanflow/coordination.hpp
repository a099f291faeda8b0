#pragma once

// Distributed per-cycle control: pre-timed (and SCATS-like) regions are
// simulated first and their boundary outflows become fixed inputs; traffic
// responsive regions are then solved in parallel and reconciled on shared
// boundary links by Lagrangian multipliers updated with diminishing
// subgradient steps.

#include <chrono>
#include <cmath>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "urbanflow/optimizer.hpp"
#include "urbanflow/partition.hpp"

namespace urbanflow {

// Highly congested regions are optimized, free ones run their fixed plan and
// everything in between adapts SCATS-style.
inline StrategyKind strategy_for(CongestionLevel level) {
  switch (level) {
    case CongestionLevel::Congested: return StrategyKind::Optimized;
    case CongestionLevel::Free: return StrategyKind::PreTimed;
    case CongestionLevel::Moderate: return StrategyKind::ScatsLike;
  }
  return StrategyKind::PreTimed;
}

inline std::vector<StrategyKind> hybrid_assign(Partition& partition) {
  std::vector<StrategyKind> out;
  for (auto& r : partition.regions) {
    r.strategy = strategy_for(r.level);
    out.push_back(r.strategy);
  }
  return out;
}

inline bool is_responsive(StrategyKind k) { return k == StrategyKind::Optimized; }

struct CoordinationConfig {
  double alpha0 = 5.0;
  double tol = 0.5;  // vehicles per cycle
  double rho = 2.0;  // pull of the importer's copy toward the exporter's last outflow; 0 = off
  std::size_t max_iters = 20;
  bool parallel = false;
};

// Boundary link shared by two responsive regions. Indices refer to the
// exporter's export list and the importer's import list.
struct BoundaryCoupling {
  int link = 0;
  std::size_t exporting_region = 0;
  std::size_t importing_region = 0;
  std::size_t export_index = 0;
  std::size_t import_index = 0;
  double import_cap = 0.0;
  std::vector<double> f_out;
  std::vector<double> f_in;
};

struct MultiplierState {
  std::vector<int> links;                  // coupling link per row
  std::vector<std::vector<double>> lambda;  // [coupling][horizon cycle]
  std::vector<std::vector<double>> initial;
  std::size_t iteration = 0;
  double alpha0 = 0.5;
  std::vector<std::vector<std::vector<double>>> residual_history;  // one entry per update

  double step_size(std::size_t t) const { return alpha0 / (1.0 + static_cast<double>(t)); }
};

inline MultiplierState make_multipliers(std::span<const BoundaryCoupling> couplings, std::size_t horizon, double alpha0) {
  MultiplierState m;
  m.alpha0 = alpha0;
  for (const auto& c : couplings) {
    m.links.push_back(c.link);
    m.lambda.emplace_back(horizon, 0.0);
  }
  m.initial = m.lambda;
  return m;
}

// lambda <- lambda + alpha_t * (f_out - f_in)
inline void update_multipliers(MultiplierState& m, const std::vector<std::vector<double>>& residuals) {
  const double a = m.step_size(m.iteration);
  for (std::size_t k = 0; k < m.lambda.size(); ++k)
    for (std::size_t c = 0; c < m.lambda[k].size(); ++c) m.lambda[k][c] += a * residuals[k][c];
  m.residual_history.push_back(residuals);
  ++m.iteration;
}

// Re-applies the recorded residual sequence to the initial multipliers.
inline std::vector<std::vector<double>> replay_multipliers(const MultiplierState& m) {
  auto lambda = m.initial;
  const std::size_t first = m.iteration - m.residual_history.size();
  for (std::size_t t = 0; t < m.residual_history.size(); ++t) {
    const double a = m.step_size(first + t);
    for (std::size_t k = 0; k < lambda.size(); ++k)
      for (std::size_t c = 0; c < lambda[k].size(); ++c) lambda[k][c] += a * m.residual_history[t][k][c];
  }
  return lambda;
}

struct CoordinationReport {
  std::size_t iterations = 0;  // multiplier iterations run
  double residual = 0.0;       // max |f_out - f_in| of the returned plans
  double dual_residual = 0.0;  // the same for the last multiplier iterate
  std::vector<double> region_wall_seconds;
  bool converged = false;  // returned plans are consistent within tol
  std::optional<std::size_t> repaired_from;  // iteration whose repaired plans were returned
  std::vector<double> residual_trace;        // max residual per multiplier iterate
  std::vector<std::pair<int, double>> link_residuals;  // returned plans, per coupling link
};

struct CoordinationResult {
  std::vector<OptimizeResult> regions;
  std::vector<BoundaryCoupling> couplings;
  MultiplierState multipliers;
  CoordinationReport report;
};

namespace detail {

// Exporters before importers (Kahn, lowest index first); regions on a cycle
// of couplings follow in index order.
inline std::vector<std::size_t> upstream_first(std::size_t n, std::span<const BoundaryCoupling> couplings) {
  std::vector<std::size_t> indegree(n, 0), order;
  for (const auto& c : couplings)
    if (c.exporting_region != c.importing_region) ++indegree[c.importing_region];
  std::vector<char> done(n, 0);
  while (order.size() < n) {
    std::size_t pick = n;
    for (std::size_t r = 0; r < n && pick == n; ++r)
      if (!done[r] && indegree[r] == 0) pick = r;
    if (pick == n)
      for (std::size_t r = 0; r < n && pick == n; ++r)
        if (!done[r]) pick = r;
    done[pick] = 1;
    order.push_back(pick);
    for (const auto& c : couplings)
      if (c.exporting_region == pick && c.importing_region != pick && indegree[c.importing_region] > 0)
        --indegree[c.importing_region];
  }
  return order;
}

inline double coupling_residual(const std::vector<OptimizeResult>& solved, const BoundaryCoupling& c) {
  const auto& out = solved[c.exporting_region].record.exports[c.export_index];
  const auto& in = solved[c.importing_region].imports[c.import_index];
  double worst = 0.0;
  for (std::size_t h = 0; h < out.size() && h < in.size(); ++h) worst = std::max(worst, std::abs(out[h] - in[h]));
  return worst;
}

}  // namespace detail

// Multiplier iterations plus a repair step per iteration: importers re-solve
// their splits against the exporters' realized outflow, upstream first, so
// every iteration also yields a consistent plan set. The consistent set with
// the least total delay is returned; the multiplier iterate itself competes
// when its residual is below tol.
inline CoordinationResult coordinate_responsive(std::vector<RegionProblem> regions,
                                                std::vector<BoundaryCoupling> couplings, MultiplierState lambda,
                                                const OptimizerConfig& opt, const CoordinationConfig& cfg) {
  using Clock = std::chrono::steady_clock;
  const std::size_t H = opt.horizon_cycles;
  if (lambda.lambda.size() != couplings.size()) lambda = make_multipliers(couplings, H, cfg.alpha0);
  for (const auto& c : couplings) {
    regions[c.importing_region].import_free[c.import_index] = 1;
    regions[c.importing_region].import_cap[c.import_index] = c.import_cap;
  }
  for (auto& r : regions) r.rho = cfg.rho;
  // Latest exporter outflow per coupling; the importer's warm start stands
  // in before the first solve.
  std::vector<std::vector<double>> last_out;
  for (const auto& c : couplings) last_out.push_back(regions[c.importing_region].imports[c.import_index]);
  const auto order = detail::upstream_first(regions.size(), couplings);

  CoordinationResult out;
  out.report.region_wall_seconds.assign(regions.size(), 0.0);
  const std::size_t max_iters = std::max<std::size_t>(cfg.max_iters, 1);

  std::optional<std::vector<OptimizeResult>> best;
  double best_delay = 0.0;
  auto offer = [&](const std::vector<OptimizeResult>& candidate, std::optional<std::size_t> repaired_at) {
    double worst = 0.0, delay = 0.0;
    for (const auto& c : couplings) worst = std::max(worst, detail::coupling_residual(candidate, c));
    for (const auto& r : candidate) delay += r.record.delay;
    if (worst >= cfg.tol || (best && !(delay < best_delay))) return;
    best = candidate;
    best_delay = delay;
    out.report.repaired_from = repaired_at;
  };

  std::vector<OptimizeResult> solved;
  for (std::size_t t = 0; t < max_iters; ++t) {
    for (std::size_t k = 0; k < couplings.size(); ++k) {
      const auto& c = couplings[k];
      regions[c.exporting_region].export_prices[c.export_index] = lambda.lambda[k];
      regions[c.importing_region].import_prices[c.import_index] = lambda.lambda[k];
      if (cfg.rho > 0.0) regions[c.importing_region].import_targets[c.import_index] = last_out[k];
    }

    solved.assign(regions.size(), OptimizeResult{});
    std::vector<double> seconds(regions.size(), 0.0);
    auto solve = [&](std::size_t r) {
      const auto t0 = Clock::now();
      solved[r] = optimize_region(regions[r], opt);
      seconds[r] = std::chrono::duration<double>(Clock::now() - t0).count();
    };
    if (cfg.parallel && regions.size() > 1) {
      std::vector<std::future<void>> jobs;
      for (std::size_t r = 0; r < regions.size(); ++r) jobs.push_back(std::async(std::launch::async, solve, r));
      for (auto& j : jobs) j.get();
    } else {
      for (std::size_t r = 0; r < regions.size(); ++r) solve(r);
    }
    for (std::size_t r = 0; r < regions.size(); ++r) {
      out.report.region_wall_seconds[r] += seconds[r];
      regions[r].incumbent = solved[r].plans;
      regions[r].imports = solved[r].imports;
    }

    std::vector<std::vector<double>> residuals(couplings.size(), std::vector<double>(H, 0.0));
    double worst = 0.0;
    for (std::size_t k = 0; k < couplings.size(); ++k) {
      const auto& c = couplings[k];
      const auto& f_out = solved[c.exporting_region].record.exports[c.export_index];
      const auto& f_in = solved[c.importing_region].imports[c.import_index];
      for (std::size_t h = 0; h < H; ++h) {
        residuals[k][h] = f_out[h] - f_in[h];
        worst = std::max(worst, std::abs(residuals[k][h]));
      }
      last_out[k] = f_out;
      // Imports arrive the way the exporter's last rollout released them.
      const auto& profile = solved[c.exporting_region].record.export_profile[c.export_index];
      regions[c.importing_region].import_shapes[c.import_index] = arrival_shape(profile, profile.size() / std::max<std::size_t>(H, 1));
    }
    out.report.iterations = t + 1;
    out.report.dual_residual = worst;
    out.report.residual_trace.push_back(worst);

    offer(solved, std::nullopt);
    if (!couplings.empty()) {
      std::vector<OptimizeResult> repaired = solved;
      for (std::size_t r : order) {
        RegionProblem q = regions[r];
        bool importer = false;
        for (const auto& c : couplings) {
          if (c.importing_region != r) continue;
          const auto& src = repaired[c.exporting_region].record;
          q.imports[c.import_index] = src.exports[c.export_index];
          q.import_shapes[c.import_index] =
              arrival_shape(src.export_profile[c.export_index], src.export_profile[c.export_index].size() / std::max<std::size_t>(H, 1));
          q.import_free[c.import_index] = 0;
          importer = true;
        }
        if (!importer) continue;
        for (auto& v : q.import_prices) v.clear();
        for (auto& v : q.export_prices) v.clear();
        for (auto& v : q.import_targets) v.clear();
        q.rho = 0.0;
        const auto t0 = Clock::now();
        repaired[r] = optimize_region(q, opt);
        out.report.region_wall_seconds[r] += std::chrono::duration<double>(Clock::now() - t0).count();
      }
      offer(repaired, t);
    }

    if (worst < cfg.tol) break;
    if (t + 1 == max_iters) break;
    update_multipliers(lambda, residuals);
  }

  out.regions = best ? std::move(*best) : std::move(solved);
  out.report.converged = best.has_value();
  out.report.residual = 0.0;
  for (auto& c : couplings) {
    c.f_out = out.regions[c.exporting_region].record.exports[c.export_index];
    c.f_in = out.regions[c.importing_region].imports[c.import_index];
    const double r = detail::coupling_residual(out.regions, c);
    out.report.residual = std::max(out.report.residual, r);
    out.report.link_residuals.emplace_back(c.link, r);
  }
  out.couplings = std::move(couplings);
  out.multipliers = std::move(lambda);
  return out;
}

// Region models keyed by their intersection set, reused across cycles.
class RegionModelCache {
 public:
  explicit RegionModelCache(const Network& net) : net_(&net) {}

  const RegionModel& get(const std::vector<int>& intersections) {
    auto it = models_.find(intersections);
    if (it == models_.end())
      it = models_.emplace(intersections, std::make_unique<RegionModel>(*net_, intersections)).first;
    return *it->second;
  }

 private:
  const Network* net_;
  std::map<std::vector<int>, std::unique_ptr<RegionModel>> models_;
};

// Per-cycle exported flow on each boundary link feeding a responsive region,
// from simulating every staged (PreTimed / ScatsLike) region under its plan.
// Imports of staged regions use the previous cycle's realized inflow.
inline std::map<int, std::vector<double>> stage_pretimed(const Partition& partition,
                                                         std::span<const StrategyKind> assignments,
                                                         RegionModelCache& models, const SimState& state,
                                                         std::span<const double> ratios,
                                                         std::span<const SignalPlan> plans,
                                                         std::span<const double> previous_inflow, std::size_t H) {
  std::map<int, std::vector<double>> fixed;
  for (std::size_t r = 0; r < partition.regions.size(); ++r) {
    const Region& region = partition.regions[r];
    if (is_responsive(assignments[r]) || region.intersections.empty()) continue;
    const RegionModel& model = models.get(region.intersections);
    std::vector<SignalPlan> own;
    for (int x : model.intersections()) own.push_back(plans[static_cast<std::size_t>(x)]);
    RegionProblem p = make_problem(model, state, ratios, own, H);
    for (std::size_t b = 0; b < model.import_count(); ++b)
      p.imports[b].assign(H, previous_inflow[static_cast<std::size_t>(model.import_link(b))]);
    RolloutRecord rec;
    evaluate(p, p.incumbent, p.imports, H, &rec);
    for (std::size_t b = 0; b < model.export_count(); ++b) {
      const int link = model.export_link(b);
      const int down = model.global().downstream_intersection(link);
      const int target = partition.region_of_intersection[static_cast<std::size_t>(down)];
      if (target != kNone && is_responsive(assignments[static_cast<std::size_t>(target)])) fixed[link] = rec.exports[b];
    }
  }
  return fixed;
}

struct CycleInputs {
  const Network* network = nullptr;
  const SimState* state = nullptr;
  std::span<const double> ratios;                        // estimated, per movement
  const Partition* partition = nullptr;
  std::span<const StrategyKind> assignments;             // per region
  std::span<const SignalPlan> plans;                     // per intersection: current / staged plans
  std::span<const double> previous_inflow;               // per link, vehicles entering last cycle
};

struct CycleOutcome {
  std::vector<SignalPlan> plans;  // per intersection
  ControlDecision decisions;      // per intersection, per step of the cycle
  std::optional<CoordinationReport> report;
  MultiplierState multipliers;
  std::map<int, std::vector<double>> staged_inflows;
};

// One pass of the hybrid pipeline. `inputs.plans` must already hold the plan
// each PreTimed / ScatsLike intersection will run; responsive intersections
// use theirs as warm starts.
inline CycleOutcome run_control_cycle(const CycleInputs& in, RegionModelCache& models, MultiplierState warm,
                                      const OptimizerConfig& opt, const CoordinationConfig& coord) {
  const Network& net = *in.network;
  const Partition& part = *in.partition;
  const std::size_t H = opt.horizon_cycles;
  CycleOutcome out;
  out.plans.assign(in.plans.begin(), in.plans.end());

  out.staged_inflows =
      stage_pretimed(part, in.assignments, models, *in.state, in.ratios, in.plans, in.previous_inflow, H);

  std::vector<std::size_t> responsive;  // partition region index per problem
  std::vector<RegionProblem> problems;
  std::map<int, std::size_t> problem_of_region;
  for (std::size_t r = 0; r < part.regions.size(); ++r) {
    if (!is_responsive(in.assignments[r]) || part.regions[r].intersections.empty()) continue;
    const RegionModel& model = models.get(part.regions[r].intersections);
    std::vector<SignalPlan> own;
    for (int x : model.intersections()) own.push_back(in.plans[static_cast<std::size_t>(x)]);
    problem_of_region[static_cast<int>(r)] = problems.size();
    responsive.push_back(r);
    problems.push_back(make_problem(model, *in.state, in.ratios, std::move(own), H));
  }

  std::vector<BoundaryCoupling> couplings;
  for (std::size_t k = 0; k < problems.size(); ++k) {
    const RegionModel& model = *problems[k].model;
    for (std::size_t b = 0; b < model.import_count(); ++b) {
      const int link = model.import_link(b);
      const double previous = in.previous_inflow[static_cast<std::size_t>(link)];
      if (auto it = out.staged_inflows.find(link); it != out.staged_inflows.end()) {
        problems[k].imports[b] = it->second;
        continue;
      }
      const int up = net.upstream_intersection(link);
      const int source_region = part.region_of_intersection[static_cast<std::size_t>(up)];
      auto exp = problem_of_region.find(source_region);
      if (exp == problem_of_region.end()) {
        problems[k].imports[b].assign(H, previous);
        continue;
      }
      const RegionModel& exporter = *problems[exp->second].model;
      BoundaryCoupling c;
      c.link = link;
      c.exporting_region = exp->second;
      c.importing_region = k;
      for (std::size_t e = 0; e < exporter.export_count(); ++e)
        if (exporter.export_link(e) == link) c.export_index = e;
      c.import_index = b;
      const std::size_t entry = net.first_cell(link);
      c.import_cap = std::floor(net.cell(entry).q_max * static_cast<double>(steps_per_cycle(
                                                              in.plans.empty() ? 1.0 : in.plans.front().cycle,
                                                              in.state->dt)) + 1e-9);
      const double snapped = std::clamp(std::round(previous / opt.import_step) * opt.import_step, 0.0, c.import_cap);
      problems[k].imports[b].assign(H, snapped);
      couplings.push_back(std::move(c));
    }
  }
  std::sort(couplings.begin(), couplings.end(), [](const auto& a, const auto& b) { return a.link < b.link; });

  if (!problems.empty()) {
    // Carry multipliers only when the coupling set is unchanged.
    MultiplierState start = make_multipliers(couplings, H, coord.alpha0);
    if (warm.links == start.links && warm.lambda.size() == start.lambda.size()) {
      start.lambda = warm.lambda;
      start.initial = warm.lambda;
    }
    auto result = coordinate_responsive(std::move(problems), std::move(couplings), std::move(start), opt, coord);
    for (std::size_t k = 0; k < result.regions.size(); ++k) {
      const RegionModel& model = models.get(part.regions[responsive[k]].intersections);
      for (std::size_t x = 0; x < model.intersections().size(); ++x)
        out.plans[static_cast<std::size_t>(model.intersections()[x])] = result.regions[k].plans[x];
    }
    out.report = result.report;
    out.multipliers = std::move(result.multipliers);
  } else {
    out.multipliers = std::move(warm);
  }

  const std::size_t S = steps_per_cycle(out.plans.empty() ? 1.0 : out.plans.front().cycle, in.state->dt);
  out.decisions = decide_cycle(out.plans, in.state->step, S, in.state->dt);
  return out;
}

}  // namespace urbanflow
