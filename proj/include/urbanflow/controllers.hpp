#pragma once

// The four closed-loop strategies. Each controller is asked once per cycle
// for the phase decisions of every intersection over that cycle.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "urbanflow/coordination.hpp"
#include "urbanflow/scenario.hpp"

namespace urbanflow {

// What the harness measured up to the start of a cycle.
struct CycleContext {
  long cycle = 0;
  const SimState* state = nullptr;
  std::span<const double> ratios;           // estimated branching, per movement
  std::span<const double> previous_inflow;  // per link, vehicles entering over the last cycle
  const std::vector<std::vector<double>>* phase_flows = nullptr;   // per intersection, per phase, last cycle
  const std::vector<std::vector<LinkObservation>>* history = nullptr;  // per link, one entry per cycle
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual StrategyKind kind() const = 0;
  virtual ControlDecision decide(const CycleContext& ctx) = 0;
  virtual const std::vector<SignalPlan>& plans() const = 0;
  virtual std::string partition_summary() const { return ""; }
  // Final per-link coordination residuals of the last decision.
  virtual std::vector<std::pair<int, double>> residuals() const { return {}; }
};

inline OptimizerConfig optimizer_config(const ControlParams& c) {
  OptimizerConfig o;
  o.g_min = c.g_min;
  o.g_step = c.g_step;
  o.horizon_cycles = c.horizon_cycles;
  o.budget = c.budget;
  o.parallel = c.parallel;
  return o;
}

inline CoordinationConfig coordination_config(const ControlParams& c) {
  CoordinationConfig k;
  k.alpha0 = c.alpha0;
  k.rho = c.rho;
  k.tol = c.tol;
  k.max_iters = c.max_iters;
  k.parallel = c.parallel;
  return k;
}

// Combined saturation flow (veh/s) of each phase's movements.
inline std::vector<double> phase_saturation(const Intersection& x) {
  std::vector<double> out;
  for (const Phase& p : x.phases) {
    double sum = 0.0;
    for (int m : p)
      for (const Movement& mv : x.movements)
        if (mv.id == m) sum += mv.saturation_flow;
    out.push_back(sum);
  }
  return out;
}

class PreTimedController final : public Controller {
 public:
  explicit PreTimedController(const Scenario& s) : s_(&s), plans_(s.base_plans) {}
  StrategyKind kind() const override { return StrategyKind::PreTimed; }
  const std::vector<SignalPlan>& plans() const override { return plans_; }

  ControlDecision decide(const CycleContext& ctx) override {
    return decide_cycle(plans_, ctx.state->step, steps_per_cycle(s_->cycle, s_->dt), s_->dt);
  }

 private:
  const Scenario* s_;
  std::vector<SignalPlan> plans_;
};

class ScatsController final : public Controller {
 public:
  explicit ScatsController(const Scenario& s) : s_(&s), plans_(s.base_plans) {
    for (const auto& x : s.network.intersections()) saturation_.push_back(phase_saturation(x));
  }
  StrategyKind kind() const override { return StrategyKind::ScatsLike; }
  const std::vector<SignalPlan>& plans() const override { return plans_; }

  ControlDecision decide(const CycleContext& ctx) override {
    if (ctx.cycle > 0 && ctx.phase_flows)
      for (std::size_t x = 0; x < plans_.size(); ++x)
        plans_[x] = scats_like_update(plans_[x], (*ctx.phase_flows)[x], saturation_[x], s_->control.g_min, s_->dt);
    return decide_cycle(plans_, ctx.state->step, steps_per_cycle(s_->cycle, s_->dt), s_->dt);
  }

 private:
  const Scenario* s_;
  std::vector<SignalPlan> plans_;
  std::vector<std::vector<double>> saturation_;
};

// Network-wide receding-horizon optimization: one responsive region
// covering every intersection, warm-started from the previous cycle's plans.
class OptimizedController final : public Controller {
 public:
  explicit OptimizedController(const Scenario& s)
      : s_(&s), plans_(s.base_plans), models_(s.network),
        partition_(single_region(s.network, CongestionLevel::Congested)) {
    assignments_ = hybrid_assign(partition_);
  }
  StrategyKind kind() const override { return StrategyKind::Optimized; }
  const std::vector<SignalPlan>& plans() const override { return plans_; }
  std::string partition_summary() const override { return summarize(partition_); }

  ControlDecision decide(const CycleContext& ctx) override {
    CycleInputs in;
    in.network = &s_->network;
    in.state = ctx.state;
    in.ratios = ctx.ratios;
    in.partition = &partition_;
    in.assignments = assignments_;
    in.plans = plans_;
    in.previous_inflow = ctx.previous_inflow;
    auto out = run_control_cycle(in, models_, multipliers_, optimizer_config(s_->control),
                                 coordination_config(s_->control));
    plans_ = std::move(out.plans);
    multipliers_ = std::move(out.multipliers);
    return std::move(out.decisions);
  }

 private:
  const Scenario* s_;
  std::vector<SignalPlan> plans_;
  RegionModelCache models_;
  Partition partition_;
  std::vector<StrategyKind> assignments_;
  MultiplierState multipliers_;
};

// Predict each link's state, classify, cluster every R cycles, then run the
// per-region strategy chosen by congestion level with boundary coordination.
class HybridController final : public Controller {
 public:
  // `forced_level` pins every link to one level (used to check degeneration).
  explicit HybridController(const Scenario& s, std::optional<CongestionLevel> forced_level = std::nullopt)
      : s_(&s), plans_(s.base_plans), models_(s.network), forced_(forced_level),
        predictor_(std::make_unique<SmoothingPredictor>(s.control.smoothing_alpha, s.control.forecast_horizon)) {
    for (const auto& x : s.network.intersections()) saturation_.push_back(phase_saturation(x));
  }
  StrategyKind kind() const override { return StrategyKind::Hybrid; }
  const std::vector<SignalPlan>& plans() const override { return plans_; }
  std::string partition_summary() const override { return summarize(partition_); }
  std::vector<std::pair<int, double>> residuals() const override { return residuals_; }
  const Partition& partition() const { return partition_; }
  std::span<const StrategyKind> assignments() const { return assignments_; }

  ControlDecision decide(const CycleContext& ctx) override {
    const ControlParams& c = s_->control;
    if (ctx.cycle % static_cast<long>(c.repartition_cycles) == 0 || partition_.regions.empty()) repartition(ctx);

    // PreTimed regions keep running whatever plan their intersections hold:
    // the base plan until some region has adapted them, afterwards the last
    // adapted plan, so a link flickering to Free does not undo the adaptation.
    for (std::size_t r = 0; r < partition_.regions.size(); ++r) {
      if (assignments_[r] != StrategyKind::ScatsLike || ctx.cycle == 0 || !ctx.phase_flows) continue;
      for (int x : partition_.regions[r].intersections) {
        const auto xi = static_cast<std::size_t>(x);
        plans_[xi] = scats_like_update(plans_[xi], (*ctx.phase_flows)[xi], saturation_[xi], c.g_min, s_->dt);
      }
    }

    CycleInputs in;
    in.network = &s_->network;
    in.state = ctx.state;
    in.ratios = ctx.ratios;
    in.partition = &partition_;
    in.assignments = assignments_;
    in.plans = plans_;
    in.previous_inflow = ctx.previous_inflow;
    auto out = run_control_cycle(in, models_, multipliers_, optimizer_config(c), coordination_config(c));
    plans_ = std::move(out.plans);
    multipliers_ = std::move(out.multipliers);
    residuals_ = out.report ? out.report->link_residuals : std::vector<std::pair<int, double>>{};
    return std::move(out.decisions);
  }

 private:
  void repartition(const CycleContext& ctx) {
    const Network& net = s_->network;
    const ControlParams& c = s_->control;
    std::vector<CongestionLevel> levels(net.link_count(), CongestionLevel::Free);
    if (forced_) {
      levels.assign(net.link_count(), *forced_);
    } else if (ctx.history) {
      maybe_train(*ctx.history);
      for (std::size_t l = 0; l < net.link_count(); ++l) {
        const auto& h = (*ctx.history)[l];
        if (!h.empty()) levels[l] = identify_level(predictor_->predict(h), c.thresholds);
      }
    }
    const std::size_t max_size = c.max_region_size == 0 ? SIZE_MAX : c.max_region_size;
    partition_ = cluster_links(net, levels, max_size);
    assignments_ = hybrid_assign(partition_);
  }

  // The recurrent predictor is fitted once, on the pooled per-cycle series of
  // every link, as soon as enough history exists.
  void maybe_train(const std::vector<std::vector<LinkObservation>>& history) {
    const ControlParams& c = s_->control;
    if (c.predictor != "recurrent" || trained_ || history.empty() || history.front().size() < 20) return;
    std::vector<std::vector<double>> speeds, densities;
    for (const auto& h : history) {
      std::vector<double> v, d;
      for (const auto& o : h) {
        v.push_back(o.speed);
        d.push_back(o.density);
      }
      speeds.push_back(std::move(v));
      densities.push_back(std::move(d));
    }
    TrainingOptions opts;
    opts.hidden = c.rnn_hidden;
    opts.horizon = c.forecast_horizon;
    opts.truncation = c.rnn_truncation;
    opts.seed = s_->seed;
    auto vs = train_recurrent(std::span<const std::vector<double>>(speeds), c.rnn_epochs, c.rnn_learning_rate, opts);
    auto ds = train_recurrent(std::span<const std::vector<double>>(densities), c.rnn_epochs, c.rnn_learning_rate, opts);
    predictor_ = std::make_unique<RecurrentPredictor>(std::move(vs.network), std::move(ds.network), c.rnn_truncation);
    trained_ = true;
  }

  const Scenario* s_;
  std::vector<SignalPlan> plans_;
  RegionModelCache models_;
  std::optional<CongestionLevel> forced_;
  std::unique_ptr<Predictor> predictor_;
  bool trained_ = false;
  Partition partition_;
  std::vector<StrategyKind> assignments_;
  MultiplierState multipliers_;
  std::vector<std::vector<double>> saturation_;
  std::vector<std::pair<int, double>> residuals_;
};

inline std::unique_ptr<Controller> make_controller(const Scenario& s, StrategyKind kind,
                                                   std::optional<CongestionLevel> forced_level = std::nullopt) {
  switch (kind) {
    case StrategyKind::PreTimed: return std::make_unique<PreTimedController>(s);
    case StrategyKind::ScatsLike: return std::make_unique<ScatsController>(s);
    case StrategyKind::Optimized: return std::make_unique<OptimizedController>(s);
    case StrategyKind::Hybrid: return std::make_unique<HybridController>(s, forced_level);
  }
  return nullptr;
}

}  // namespace urbanflow
