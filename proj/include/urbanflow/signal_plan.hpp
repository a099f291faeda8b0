#pragma once

// Fixed-cycle signal plans and the two non-optimizing controllers.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "urbanflow/dynamics.hpp"

namespace urbanflow {

struct SignalPlan {
  double cycle = 60.0;
  std::vector<double> greens;  // per phase, in service order
  double offset = 0.0;
  double lost_time_per_phase = 0.0;

  std::size_t phase_count() const { return greens.size(); }
  double lost_time() const { return lost_time_per_phase * static_cast<double>(greens.size()); }
  double green_budget() const { return cycle - lost_time(); }

  bool operator==(const SignalPlan&) const = default;
};

inline double max_green(const SignalPlan& plan, double g_min) {
  return plan.green_budget() - static_cast<double>(plan.phase_count() - 1) * g_min;
}

inline bool is_feasible(const SignalPlan& plan, double g_min, double tol = 1e-9) {
  if (plan.greens.empty() || !(plan.cycle > 0)) return false;
  const double sum = std::accumulate(plan.greens.begin(), plan.greens.end(), 0.0);
  if (std::abs(sum + plan.lost_time() - plan.cycle) > tol) return false;
  const double g_max = max_green(plan, g_min);
  for (double g : plan.greens)
    if (g < g_min - tol || g > g_max + tol) return false;
  return true;
}

inline SignalPlan uniform_plan(double cycle, std::size_t phases, double lost_time_per_phase, double offset = 0.0) {
  SignalPlan p;
  p.cycle = cycle;
  p.offset = offset;
  p.lost_time_per_phase = lost_time_per_phase;
  const double each = (cycle - lost_time_per_phase * static_cast<double>(phases)) / static_cast<double>(phases);
  p.greens.assign(phases, each);
  return p;
}

// Phase index active at time t, or kAllRed inside a phase's lost time. Each
// phase's green is followed by its lost time.
inline int pretimed_decide(const SignalPlan& plan, double t) {
  double tau = std::fmod(t - plan.offset, plan.cycle);
  if (tau < 0.0) tau += plan.cycle;
  for (std::size_t p = 0; p < plan.greens.size(); ++p) {
    if (tau < plan.greens[p]) return static_cast<int>(p);
    tau -= plan.greens[p];
    if (tau < plan.lost_time_per_phase) return kAllRed;
    tau -= plan.lost_time_per_phase;
  }
  return kAllRed;
}

// Per intersection, the active phase for each step of a control window.
using ControlDecision = std::vector<std::vector<int>>;

inline std::vector<int> decide_steps(const SignalPlan& plan, long first_step, std::size_t steps, double dt) {
  std::vector<int> out(steps);
  for (std::size_t k = 0; k < steps; ++k)
    out[k] = pretimed_decide(plan, static_cast<double>(first_step + static_cast<long>(k)) * dt);
  return out;
}

inline ControlDecision decide_cycle(std::span<const SignalPlan> plans, long first_step, std::size_t steps, double dt) {
  ControlDecision d;
  d.reserve(plans.size());
  for (const auto& p : plans) d.push_back(decide_steps(p, first_step, steps, dt));
  return d;
}

// Distributes `budget` over `weights` proportionally, clamps to
// [g_min, g_max], hands any residual back proportionally among the phases
// still free to move, then snaps to multiples of `quantum` by largest
// remainder while preserving the sum.
inline std::vector<double> proportional_greens(std::span<const double> weights, double budget, double g_min,
                                               double g_max, double quantum) {
  const std::size_t P = weights.size();
  std::vector<double> g(P, 0.0);
  std::vector<char> fixed(P, 0);
  double remaining = budget;
  for (std::size_t round = 0; round <= P; ++round) {
    double wsum = 0.0;
    std::size_t free_count = 0;
    for (std::size_t p = 0; p < P; ++p)
      if (!fixed[p]) {
        wsum += weights[p];
        ++free_count;
      }
    if (free_count == 0) break;
    for (std::size_t p = 0; p < P; ++p)
      if (!fixed[p])
        g[p] = wsum > 0.0 ? remaining * weights[p] / wsum : remaining / static_cast<double>(free_count);
    bool clamped = false;
    for (std::size_t p = 0; p < P; ++p) {
      if (fixed[p]) continue;
      if (g[p] < g_min || g[p] > g_max) {
        g[p] = std::clamp(g[p], g_min, g_max);
        fixed[p] = 1;
        remaining -= g[p];
        clamped = true;
      }
    }
    if (!clamped) break;
  }

  if (quantum > 0.0) {
    const double units_total = std::round(budget / quantum);
    std::vector<double> units(P);
    std::vector<std::pair<double, std::size_t>> remainders;
    double assigned = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      units[p] = std::floor(g[p] / quantum + 1e-9);
      assigned += units[p];
      remainders.emplace_back(g[p] / quantum - units[p], p);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < units_total && k < remainders.size(); ++k) {
      const std::size_t p = remainders[k].second;
      if ((units[p] + 1) * quantum <= g_max + 1e-9) {
        units[p] += 1;
        assigned += 1;
      }
    }
    for (std::size_t p = 0; p < P; ++p) g[p] = units[p] * quantum;
  }
  return g;
}

// Degree-of-saturation split adaptation. `phase_flows[p]` are vehicles
// discharged during phase p's green over the last cycle and
// `phase_saturation[p]` the phase's combined saturation flow (veh/s). The
// green budget is re-split in proportion to DS_p * g_p, i.e. the green each
// phase would need to serve its measured flow at saturation.
inline SignalPlan scats_like_update(const SignalPlan& plan, std::span<const double> phase_flows,
                                    std::span<const double> phase_saturation, double g_min, double quantum) {
  const std::size_t P = plan.greens.size();
  std::vector<double> weight(P, 0.0);
  bool any = false;
  for (std::size_t p = 0; p < P; ++p) {
    const double capacity = phase_saturation[p] * plan.greens[p];
    const double ds = capacity > 0.0 ? phase_flows[p] / capacity : 0.0;
    weight[p] = ds * plan.greens[p];
    any = any || weight[p] > 0.0;
  }
  if (!any) return plan;
  SignalPlan next = plan;
  next.greens = proportional_greens(weight, plan.green_budget(), g_min, max_green(plan, g_min), quantum);
  return next;
}

// All split vectors on the `step` grid with every green in [g_min, g_max]
// summing to `budget`, in lexicographic order.
inline std::vector<std::vector<double>> enumerate_splits(std::size_t phases, double budget, double g_min,
                                                         double step) {
  std::vector<std::vector<double>> out;
  if (phases == 0) return out;
  const long total = std::lround(budget / step);
  const long lo = std::lround(std::ceil(g_min / step - 1e-9));
  std::vector<long> cur(phases, 0);
  auto rec = [&](auto&& self, std::size_t p, long left) -> void {
    if (p + 1 == phases) {
      if (left >= lo) {
        cur[p] = left;
        std::vector<double> g(phases);
        for (std::size_t k = 0; k < phases; ++k) g[k] = static_cast<double>(cur[k]) * step;
        out.push_back(std::move(g));
      }
      return;
    }
    const long reserve = lo * static_cast<long>(phases - p - 1);
    for (long v = lo; v <= left - reserve; ++v) {
      cur[p] = v;
      self(self, p + 1, left - v);
    }
  };
  rec(rec, 0, total);
  return out;
}

}  // namespace urbanflow
