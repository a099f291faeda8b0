#pragma once

// Finite-horizon green-split selection on a discrete grid, solved by cyclic
// coordinate descent with exhaustive enumeration of each coordinate and
// simulation rollouts as the objective.

#include <algorithm>
#include <future>
#include <limits>
#include <span>
#include <thread>
#include <vector>

#include "urbanflow/region.hpp"

namespace urbanflow {

struct OptimizerConfig {
  double g_min = 5.0;
  double g_step = 5.0;
  std::size_t horizon_cycles = 2;
  std::size_t budget = 2000;  // max rollouts per call
  double import_step = 1.0;   // grid for import decisions, vehicles per cycle
  bool parallel = false;      // evaluate a coordinate's candidates concurrently
};

// One region's subproblem. Imports marked free are decision variables on the
// grid {0, import_step, ..., import_cap}; the others are fixed inputs.
struct RegionProblem {
  const RegionModel* model = nullptr;
  SimState state;
  std::vector<double> ratios;
  std::vector<SignalPlan> incumbent;  // per region intersection
  CycleFlows imports;                 // per import, per horizon cycle
  std::vector<char> import_free;
  std::vector<double> import_cap;
  CycleFlows import_prices;  // per import (empty = unpriced)
  CycleFlows export_prices;  // per export (empty = unpriced)
  CycleFlows import_targets;  // per import (empty = no proximal term)
  CycleFlows export_targets;
  double rho = 0.0;
  CycleFlows import_shapes;  // per import (empty = even spread)
};

struct OptimizeResult {
  std::vector<SignalPlan> plans;
  CycleFlows imports;
  double objective = 0.0;
  double incumbent_objective = 0.0;
  RolloutRecord record;
  std::size_t rollouts = 0;
  std::size_t sweeps = 0;
  bool budget_exhausted = false;  // the incumbent at that point is returned
};

// Fills default-sized import/price tables for a problem whose model is set.
inline RegionProblem make_problem(const RegionModel& model, const SimState& global_state,
                                  std::span<const double> global_ratios, std::vector<SignalPlan> incumbent,
                                  std::size_t horizon_cycles) {
  RegionProblem p;
  p.model = &model;
  p.state = model.project(global_state);
  p.ratios = model.project_ratios(global_ratios);
  p.incumbent = std::move(incumbent);
  p.imports.assign(model.import_count(), std::vector<double>(horizon_cycles, 0.0));
  p.import_free.assign(model.import_count(), 0);
  p.import_cap.assign(model.import_count(), 0.0);
  p.import_prices.assign(model.import_count(), {});
  p.export_prices.assign(model.export_count(), {});
  p.import_targets.assign(model.import_count(), {});
  p.export_targets.assign(model.export_count(), {});
  p.import_shapes.assign(model.import_count(), {});
  return p;
}

inline double evaluate(const RegionProblem& p, std::span<const SignalPlan> plans, const CycleFlows& imports,
                       std::size_t horizon_cycles, RolloutRecord* record = nullptr) {
  RolloutInputs in;
  in.plans = plans;
  in.imports = &imports;
  in.import_prices = &p.import_prices;
  in.export_prices = &p.export_prices;
  in.import_targets = &p.import_targets;
  in.export_targets = &p.export_targets;
  in.rho = p.rho;
  in.import_shapes = &p.import_shapes;
  const double cycle = plans.empty() ? 1.0 : plans.front().cycle;
  return rollout_objective(*p.model, p.state, p.ratios, in, horizon_cycles, cycle, record);
}

namespace detail {

// Scores `count` candidates produced by `score(i)`; the reduction is by
// index, so the outcome does not depend on completion order.
template <typename Score>
std::vector<double> score_all(std::size_t count, bool parallel, Score&& score) {
  std::vector<double> out(count, 0.0);
  const std::size_t workers = parallel ? std::max(1u, std::thread::hardware_concurrency()) : 1;
  if (workers <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) out[i] = score(i);
    return out;
  }
  std::vector<std::future<void>> jobs;
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t begin = 0; begin < count; begin += chunk) {
    const std::size_t end = std::min(count, begin + chunk);
    jobs.push_back(std::async(std::launch::async, [&, begin, end] {
      for (std::size_t i = begin; i < end; ++i) out[i] = score(i);
    }));
  }
  for (auto& j : jobs) j.get();
  return out;
}

// Index of the smallest score strictly below `incumbent` (ties: lowest
// index), or npos.
inline std::size_t strict_argmin(std::span<const double> scores, double incumbent) {
  std::size_t best = static_cast<std::size_t>(-1);
  double best_score = incumbent;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i] < best_score) {
      best_score = scores[i];
      best = i;
    }
  return best;
}

}  // namespace detail

inline OptimizeResult optimize_region(const RegionProblem& p, const OptimizerConfig& cfg) {
  OptimizeResult r;
  r.plans = p.incumbent;
  r.imports = p.imports;
  const std::size_t H = cfg.horizon_cycles;
  if (p.model == nullptr || r.plans.empty()) return r;

  r.objective = evaluate(p, r.plans, r.imports, H);
  r.incumbent_objective = r.objective;
  r.rollouts = 1;

  // Coordinates: every intersection's split, then every free import cycle.
  struct Coord {
    std::size_t index;
    std::size_t cycle;
    bool import;
  };
  std::vector<Coord> coords;
  for (std::size_t x = 0; x < r.plans.size(); ++x) coords.push_back({x, 0, false});
  for (std::size_t b = 0; b < r.imports.size(); ++b)
    if (p.import_free[b])
      for (std::size_t c = 0; c < H; ++c) coords.push_back({b, c, true});
  std::vector<std::vector<std::vector<double>>> grids(r.plans.size());
  for (std::size_t x = 0; x < r.plans.size(); ++x)
    grids[x] = enumerate_splits(r.plans[x].phase_count(), r.plans[x].green_budget(), cfg.g_min, cfg.g_step);

  // Cycling stops once every coordinate has been enumerated since the last
  // improvement; re-enumerating one whose neighbours did not move cannot
  // change anything.
  const std::size_t N = coords.size();
  std::size_t last_change = static_cast<std::size_t>(-1);
  bool exhausted = false;
  for (std::size_t pos = 0;; ++pos) {
    const std::size_t stop = last_change == static_cast<std::size_t>(-1) ? N : last_change + N;
    if (pos == stop) break;
    const Coord& k = coords[pos % N];

    // Candidate values of this coordinate other than its current one.
    std::vector<std::size_t> candidates;
    std::size_t levels = 0;
    if (!k.import) {
      const auto& grid = grids[k.index];
      levels = grid.size();
      for (std::size_t i = 0; i < levels; ++i)
        if (grid[i] != r.plans[k.index].greens) candidates.push_back(i);
    } else {
      levels = static_cast<std::size_t>(std::floor(p.import_cap[k.index] / cfg.import_step + 1e-9)) + 1;
      for (std::size_t i = 0; i < levels; ++i)
        if (static_cast<double>(i) * cfg.import_step != r.imports[k.index][k.cycle]) candidates.push_back(i);
    }
    const std::size_t left = cfg.budget > r.rollouts ? cfg.budget - r.rollouts : 0;
    if (candidates.size() > left) {
      candidates.resize(left);
      exhausted = true;
    }
    const auto scores = detail::score_all(candidates.size(), cfg.parallel, [&](std::size_t j) {
      const std::size_t i = candidates[j];
      if (!k.import) {
        std::vector<SignalPlan> trial = r.plans;
        trial[k.index].greens = grids[k.index][i];
        return evaluate(p, trial, r.imports, H);
      }
      CycleFlows trial = r.imports;
      trial[k.index][k.cycle] = static_cast<double>(i) * cfg.import_step;
      return evaluate(p, r.plans, trial, H);
    });
    r.rollouts += candidates.size();
    const std::size_t best = detail::strict_argmin(scores, r.objective);
    if (best != static_cast<std::size_t>(-1)) {
      const std::size_t i = candidates[best];
      if (!k.import)
        r.plans[k.index].greens = grids[k.index][i];
      else
        r.imports[k.index][k.cycle] = static_cast<double>(i) * cfg.import_step;
      r.objective = scores[best];
      last_change = pos;
    }
    r.sweeps = pos / N + 1;
    if (exhausted) break;
  }
  r.budget_exhausted = exhausted;
  evaluate(p, r.plans, r.imports, H, &r.record);
  return r;
}

}  // namespace urbanflow
