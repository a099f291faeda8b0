#pragma once

// Closed-loop runs of one scenario under each strategy, and the metrics CSV.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>

#include "urbanflow/controllers.hpp"
#include "urbanflow/estimation.hpp"

namespace urbanflow {

struct CycleRecord {
  long cycle = 0;
  double time_s = 0.0;  // at the end of the cycle
  double delay_increment = 0.0;
  double cumulative_delay = 0.0;
  double throughput = 0.0;  // vehicles exited so far
  double controller_wall_s = 0.0;
  double estimator_error = 0.0;
  std::string partition;
  std::vector<std::pair<int, double>> residuals;  // per coupling link
};

struct MetricsTrace {
  StrategyKind strategy = StrategyKind::PreTimed;
  std::vector<CycleRecord> rows;
  double controller_wall_s = 0.0;
  double max_conservation_error = 0.0;  // over every step
  std::vector<std::vector<int>> decisions;  // per step, per intersection (when recorded)
  SimState final_state;

  double final_delay() const { return rows.empty() ? 0.0 : rows.back().cumulative_delay; }
};

struct RunOptions {
  std::optional<long> steps;
  std::optional<std::uint64_t> seed;
  bool record_decisions = false;
  std::optional<CongestionLevel> forced_level;  // Hybrid only
  // Called after every cycle with the controller that produced it.
  std::function<void(const Controller&, const CycleRecord&)> after_cycle;
};

// Per-step source arrivals with optional multiplicative noise. The draw
// sequence depends only on the seed, so every strategy sees the same demand.
class DemandSampler {
 public:
  DemandSampler(const Network& net, double noise, std::uint64_t seed)
      : net_(&net), noise_(noise), rng_(seed), out_(net.source_count(), 0.0) {}

  std::span<const double> draw(double t, double dt) {
    for (std::size_t e = 0; e < out_.size(); ++e) {
      double a = net_->sources()[e].demand.rate_at(t) * dt;
      if (noise_ > 0.0) a *= std::max(0.0, 1.0 + noise_ * normal_(rng_));
      out_[e] = a;
    }
    return out_;
  }

 private:
  const Network* net_;
  double noise_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
  std::vector<double> out_;
};

inline MetricsTrace run_strategy(const Scenario& s, StrategyKind kind, const RunOptions& opt = {}) {
  const Network& net = s.network;
  const long total_steps = opt.steps.value_or(s.steps);
  const std::size_t S = steps_per_cycle(s.cycle, s.dt);

  auto controller = make_controller(s, kind, opt.forced_level);
  Simulator sim(net);
  SimState state = make_initial_state(net, s.dt);
  DemandSampler demand(net, s.control.demand_noise, opt.seed.value_or(s.seed));
  NetworkBranchingEstimator estimator(net, s.control.window);
  LinkObserver observer(net);

  std::vector<std::vector<LinkObservation>> history(net.link_count());
  std::vector<double> previous_inflow(net.link_count(), 0.0), inflow(net.link_count(), 0.0);
  std::vector<double> discharged(net.movement_count(), 0.0);
  std::vector<std::vector<double>> phase_flows, flows_now;
  for (const auto& x : net.intersections()) {
    phase_flows.emplace_back(x.phases.size(), 0.0);
  }
  flows_now = phase_flows;
  std::vector<int> phases(net.intersection_count(), kAllRed);

  MetricsTrace trace;
  trace.strategy = kind;
  double cumulative = 0.0;

  for (long cycle = 0; state.step < total_steps; ++cycle) {
    CycleContext ctx;
    ctx.cycle = cycle;
    ctx.state = &state;
    ctx.ratios = estimator.ratios();
    ctx.previous_inflow = previous_inflow;
    ctx.phase_flows = &phase_flows;
    ctx.history = &history;

    const auto t0 = std::chrono::steady_clock::now();
    const ControlDecision decisions = controller->decide(ctx);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    trace.controller_wall_s += wall;

    std::fill(inflow.begin(), inflow.end(), 0.0);
    std::fill(discharged.begin(), discharged.end(), 0.0);
    for (auto& f : flows_now) std::fill(f.begin(), f.end(), 0.0);
    double increment = 0.0;
    const long run = std::min<long>(static_cast<long>(S), total_steps - state.step);
    for (long k = 0; k < run; ++k) {
      for (std::size_t x = 0; x < phases.size(); ++x) phases[x] = decisions[x][static_cast<std::size_t>(k)];
      if (opt.record_decisions) trace.decisions.push_back(phases);
      const auto arrivals = demand.draw(state.time(), s.dt);
      const SimState before = state;
      sim.advance(state, phases, s.true_ratios, arrivals);
      observer.observe(before, state);
      increment += queue_delay_increment(state);
      trace.max_conservation_error = std::max(trace.max_conservation_error, std::abs(state.conservation_error()));
      for (std::size_t l = 0; l < inflow.size(); ++l) inflow[l] += state.link_inflow[l];
      for (std::size_t m = 0; m < discharged.size(); ++m) discharged[m] += state.movement_outflow[m];
      for (std::size_t x = 0; x < phases.size(); ++x) {
        if (phases[x] < 0) continue;
        const Intersection& inter = net.intersection(static_cast<int>(x));
        for (int m : inter.phases[static_cast<std::size_t>(phases[x])])
          flows_now[x][static_cast<std::size_t>(phases[x])] += state.movement_outflow[static_cast<std::size_t>(m)];
      }
    }

    estimator.record_cycle(cycle, discharged);
    for (std::size_t l = 0; l < net.link_count(); ++l)
      history[l].push_back(observer.summarize(static_cast<int>(l), state.step));
    observer.reset();
    previous_inflow = inflow;
    phase_flows = flows_now;

    cumulative += increment;
    CycleRecord row;
    row.cycle = cycle;
    row.time_s = state.time();
    row.delay_increment = increment;
    row.cumulative_delay = cumulative;
    row.throughput = state.cumulative_exited;
    row.controller_wall_s = wall;
    row.estimator_error = estimate_error(estimator.ratios(), s.true_ratios);
    row.partition = controller->partition_summary();
    row.residuals = controller->residuals();
    if (opt.after_cycle) opt.after_cycle(*controller, row);
    trace.rows.push_back(std::move(row));
  }
  trace.final_state = std::move(state);
  return trace;
}

inline std::vector<MetricsTrace> run_experiment(const Scenario& s, std::span<const StrategyKind> strategies,
                                                const RunOptions& opt = {}) {
  if (strategies.empty()) throw std::invalid_argument("at least one strategy is required");
  std::vector<MetricsTrace> out;
  for (StrategyKind k : strategies) out.push_back(run_strategy(s, k, opt));
  return out;
}

inline StrategyKind parse_strategy(const std::string& name) {
  if (name == "pretimed") return StrategyKind::PreTimed;
  if (name == "scats") return StrategyKind::ScatsLike;
  if (name == "optimized") return StrategyKind::Optimized;
  if (name == "hybrid") return StrategyKind::Hybrid;
  throw std::invalid_argument("unknown strategy '" + name + "'");
}

// ---- CSV -------------------------------------------------------------------

inline const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols{"strategy",         "cycle",      "time_s",
                                             "delay_increment",  "cumulative_delay", "throughput",
                                             "controller_wall_s", "estimator_error", "partition"};
  return cols;
}

inline std::string format_g9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// Every coupling link that appears in any trace, ascending.
inline std::vector<int> residual_links(std::span<const MetricsTrace> traces) {
  std::vector<int> links;
  for (const auto& t : traces)
    for (const auto& r : t.rows)
      for (const auto& [link, _] : r.residuals) links.push_back(link);
  std::sort(links.begin(), links.end());
  links.erase(std::unique(links.begin(), links.end()), links.end());
  return links;
}

inline void write_metrics(std::span<const MetricsTrace> traces, std::ostream& out, bool verbose = false) {
  const auto links = verbose ? residual_links(traces) : std::vector<int>{};
  const auto& cols = metrics_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  for (int l : links) out << ",residual_link_" << l;
  out << '\n';
  for (const auto& t : traces)
    for (const auto& r : t.rows) {
      out << to_string(t.strategy) << ',' << r.cycle << ',' << format_g9(r.time_s) << ','
          << format_g9(r.delay_increment) << ',' << format_g9(r.cumulative_delay) << ',' << format_g9(r.throughput)
          << ',' << format_g9(r.controller_wall_s) << ',' << format_g9(r.estimator_error) << ',' << r.partition;
      for (int l : links) {
        out << ',';
        for (const auto& [link, v] : r.residuals)
          if (link == l) out << format_g9(v);
      }
      out << '\n';
    }
}

inline void write_metrics(std::span<const MetricsTrace> traces, const std::string& path, bool verbose = false) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics file '" + path + "'");
  write_metrics(traces, out, verbose);
  if (!out) throw IoError("failed writing metrics file '" + path + "'");
}

// Per-strategy totals next to the metrics file, including the controller
// wall-time ratio of each strategy against Optimized.
inline void write_summary(std::span<const MetricsTrace> traces, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write summary file '" + path + "'");
  double optimized_wall = -1.0;
  for (const auto& t : traces)
    if (t.strategy == StrategyKind::Optimized) optimized_wall = t.controller_wall_s;
  out << "strategy,final_cumulative_delay,throughput,controller_wall_s,wall_ratio_vs_optimized\n";
  for (const auto& t : traces) {
    out << to_string(t.strategy) << ',' << format_g9(t.final_delay()) << ','
        << format_g9(t.rows.empty() ? 0.0 : t.rows.back().throughput) << ',' << format_g9(t.controller_wall_s) << ',';
    if (optimized_wall > 0.0) out << format_g9(t.controller_wall_s / optimized_wall);
    out << '\n';
  }
}

struct MetricsTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw std::out_of_range("no column '" + name + "'");
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline MetricsTable read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read metrics file '" + path + "'");
  MetricsTable t;
  std::string line;
  if (std::getline(in, line)) t.header = split_csv_line(line);
  while (std::getline(in, line))
    if (!line.empty()) t.rows.push_back(split_csv_line(line));
  return t;
}

}  // namespace urbanflow
