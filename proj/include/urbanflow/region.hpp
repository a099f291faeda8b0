#pragma once

// A region's private copy of the network dynamics and the finite-horizon
// rollout objective evaluated on it.

#include <algorithm>
#include <span>
#include <unordered_map>
#include <vector>

#include "urbanflow/dynamics.hpp"
#include "urbanflow/signal_plan.hpp"

namespace urbanflow {

// Sub-network of the intersections a region controls, with every approach
// and exit link of those intersections. Approaches fed from outside the
// region become sources (scenario demand, or boundary inflow supplied per
// rollout); exits leaving the region become sinks.
class RegionModel {
 public:
  struct Entry {
    int global_link = 0;
    int global_source = kNone;  // scenario demand source, or kNone for a boundary import
    bool boundary = false;
  };
  struct Exit {
    int sub_link = 0;
    int global_link = 0;
  };

  RegionModel() = default;

  RegionModel(const Network& global, std::span<const int> intersections) : global_(&global) {
    intersections_.assign(intersections.begin(), intersections.end());
    std::sort(intersections_.begin(), intersections_.end());
    std::vector<char> in_region(global.intersection_count(), 0);
    for (int x : intersections_) in_region[static_cast<std::size_t>(x)] = 1;

    std::vector<int> links;
    for (int x : intersections_) {
      for (int l : global.incoming_links(x)) links.push_back(l);
      for (int l : global.outgoing_links(x)) links.push_back(l);
    }
    std::sort(links.begin(), links.end());
    links.erase(std::unique(links.begin(), links.end()), links.end());
    link_map_ = links;
    std::unordered_map<int, int> sub_of;
    for (std::size_t i = 0; i < links.size(); ++i) sub_of[links[i]] = static_cast<int>(i);

    std::vector<Link> sub_links;
    for (std::size_t i = 0; i < links.size(); ++i) {
      Link l = global.link(links[i]);
      l.id = static_cast<int>(i);
      sub_links.push_back(std::move(l));
    }

    std::vector<Intersection> sub_x;
    int next_movement = 0;
    for (std::size_t xi = 0; xi < intersections_.size(); ++xi) {
      const Intersection& gx = global.intersection(intersections_[xi]);
      Intersection x;
      x.id = static_cast<int>(xi);
      x.lost_time_per_phase = gx.lost_time_per_phase;
      std::unordered_map<int, int> local;
      for (const Movement& gm : gx.movements) {
        Movement m = gm;
        m.id = next_movement++;
        m.from_link = sub_of.at(gm.from_link);
        m.to_link = sub_of.at(gm.to_link);
        local[gm.id] = m.id;
        movement_map_.push_back(gm.id);
        x.movements.push_back(m);
      }
      for (const Phase& gp : gx.phases) {
        Phase p;
        for (int gm : gp) p.push_back(local.at(gm));
        x.phases.push_back(std::move(p));
      }
      sub_x.push_back(std::move(x));
    }

    std::vector<Source> sources;
    std::vector<int> sinks;
    for (std::size_t i = 0; i < links.size(); ++i) {
      const int gl = links[i];
      const int up = global.upstream_intersection(gl);
      const int down = global.downstream_intersection(gl);
      if (down == kNone || !in_region[static_cast<std::size_t>(down)]) {
        sinks.push_back(static_cast<int>(i));
        if (down != kNone) exits_.push_back(Exit{static_cast<int>(i), gl});
      }
      if (up == kNone || !in_region[static_cast<std::size_t>(up)]) {
        const int gs = global.source_of(gl);
        if (gs != kNone) {
          sources.push_back(Source{static_cast<int>(i), global.sources()[static_cast<std::size_t>(gs)].demand});
          entries_.push_back(Entry{gl, gs, false});
        } else if (up != kNone) {
          sources.push_back(Source{static_cast<int>(i), DemandProfile{}});
          entries_.push_back(Entry{gl, kNone, true});
          boundary_entries_.push_back(static_cast<int>(entries_.size()) - 1);
        }
      }
    }
    net_ = Network(std::move(sub_links), std::move(sub_x), std::move(sources), std::move(sinks), false);
  }

  const Network& network() const { return net_; }
  const Network& global() const { return *global_; }
  std::span<const int> intersections() const { return intersections_; }
  std::span<const int> link_map() const { return link_map_; }
  std::span<const int> movement_map() const { return movement_map_; }
  std::span<const Entry> entries() const { return entries_; }
  std::span<const Exit> exits() const { return exits_; }
  // Indices into entries() that are boundary imports, in entry order.
  std::span<const int> boundary_entries() const { return boundary_entries_; }

  std::size_t import_count() const { return boundary_entries_.size(); }
  int import_link(std::size_t k) const { return entries_[static_cast<std::size_t>(boundary_entries_[k])].global_link; }
  std::size_t export_count() const { return exits_.size(); }
  int export_link(std::size_t k) const { return exits_[k].global_link; }

  SimState project(const SimState& g) const {
    SimState s = make_initial_state(net_, g.dt);
    s.step = g.step;
    for (std::size_t i = 0; i < link_map_.size(); ++i) {
      const int gl = link_map_[i];
      const std::size_t gf = global_->first_cell(gl);
      const std::size_t sf = net_.first_cell(static_cast<int>(i));
      const std::size_t len = net_.link(static_cast<int>(i)).cells.size();
      for (std::size_t c = 0; c < len; ++c) s.cell_counts[sf + c] = g.cell_counts[gf + c];
    }
    for (std::size_t m = 0; m < movement_map_.size(); ++m)
      s.queues[m] = g.queues[static_cast<std::size_t>(movement_map_[m])];
    for (std::size_t e = 0; e < entries_.size(); ++e)
      if (!entries_[e].boundary) s.source_queues[e] = g.source_queues[static_cast<std::size_t>(entries_[e].global_source)];
    for (std::size_t x = 0; x < intersections_.size(); ++x)
      s.active_phase[x] = g.active_phase[static_cast<std::size_t>(intersections_[x])];
    s.initial_total = s.total_vehicles();
    return s;
  }

  std::vector<double> project_ratios(std::span<const double> global_ratios) const {
    std::vector<double> r(movement_map_.size());
    for (std::size_t m = 0; m < movement_map_.size(); ++m) r[m] = global_ratios[static_cast<std::size_t>(movement_map_[m])];
    return r;
  }

 private:
  const Network* global_ = nullptr;
  Network net_;
  std::vector<int> intersections_;
  std::vector<int> link_map_;
  std::vector<int> movement_map_;
  std::vector<Entry> entries_;
  std::vector<int> boundary_entries_;
  std::vector<Exit> exits_;
};

// Per-cycle values for each boundary import / export, outer index in
// import_link / export_link order.
using CycleFlows = std::vector<std::vector<double>>;

struct RolloutInputs {
  std::span<const SignalPlan> plans;  // per region intersection
  const CycleFlows* imports = nullptr;       // vehicles per cycle entering each import link
  const CycleFlows* import_prices = nullptr;  // empty inner vector = uncoupled
  const CycleFlows* export_prices = nullptr;
  // Proximal pull toward the other side's latest value: + rho/2 * (f - target)^2.
  const CycleFlows* import_targets = nullptr;  // empty inner vector = none
  const CycleFlows* export_targets = nullptr;
  double rho = 0.0;
  // Per import, per step of the horizon: share of that cycle's import
  // arriving at the step. Empty inner vector = spread evenly.
  const CycleFlows* import_shapes = nullptr;
};

struct RolloutRecord {
  double delay = 0.0;
  double price_term = 0.0;
  CycleFlows exports;         // realized vehicles per cycle entering each export link
  CycleFlows export_profile;  // the same per step of the horizon
};

inline std::size_t steps_per_cycle(double cycle, double dt) { return static_cast<std::size_t>(std::lround(cycle / dt)); }

// Per-step profile -> per-cycle shares; cycles without flow spread evenly.
inline std::vector<double> arrival_shape(std::span<const double> profile, std::size_t steps_per_cycle) {
  std::vector<double> shape(profile.size(), 1.0 / static_cast<double>(steps_per_cycle));
  for (std::size_t begin = 0; begin + steps_per_cycle <= profile.size(); begin += steps_per_cycle) {
    double total = 0.0;
    for (std::size_t k = 0; k < steps_per_cycle; ++k) total += profile[begin + k];
    if (total <= 0.0) continue;
    for (std::size_t k = 0; k < steps_per_cycle; ++k) shape[begin + k] = profile[begin + k] / total;
  }
  return shape;
}

// Queue delay of the region over `horizon_cycles` plus the boundary price
// terms: + lambda * exported flow, - lambda * assumed imported flow.
inline double rollout_objective(const RegionModel& model, const SimState& start, std::span<const double> ratios,
                                const RolloutInputs& in, std::size_t horizon_cycles, double cycle,
                                RolloutRecord* record = nullptr) {
  const Network& net = model.network();
  const std::size_t S = steps_per_cycle(cycle, start.dt);
  const std::size_t n_imp = model.import_count();
  const std::size_t n_exp = model.export_count();
  Simulator sim(net);
  SimState s = start;
  std::vector<int> phases(net.intersection_count(), kAllRed);
  ControlDecision decisions = decide_cycle(in.plans, start.step, S * horizon_cycles, start.dt);
  std::vector<double> arrivals(net.source_count(), 0.0);
  CycleFlows exports(n_exp, std::vector<double>(horizon_cycles, 0.0));
  CycleFlows profile;
  if (record) profile.assign(n_exp, std::vector<double>(S * horizon_cycles, 0.0));
  double delay = 0.0;

  for (std::size_t c = 0; c < horizon_cycles; ++c) {
    for (std::size_t k = 0; k < S; ++k) {
      const double t = s.time();
      for (std::size_t x = 0; x < phases.size(); ++x) phases[x] = decisions[x][c * S + k];
      for (std::size_t e = 0; e < net.source_count(); ++e)
        arrivals[e] = net.sources()[e].demand.rate_at(t) * s.dt;
      for (std::size_t b = 0; b < n_imp; ++b) {
        const auto e = static_cast<std::size_t>(model.boundary_entries()[b]);
        const bool shaped = in.import_shapes && !(*in.import_shapes)[b].empty();
        const double share = shaped ? (*in.import_shapes)[b][c * S + k] : 1.0 / static_cast<double>(S);
        arrivals[e] = in.imports ? (*in.imports)[b][c] * share : 0.0;
      }
      sim.advance(s, phases, ratios, arrivals);
      delay += queue_delay_increment(s);
      for (std::size_t b = 0; b < n_exp; ++b) {
        const double f = s.link_inflow[static_cast<std::size_t>(model.exits()[b].sub_link)];
        exports[b][c] += f;
        if (record) profile[b][c * S + k] = f;
      }
    }
  }

  double price = 0.0;
  if (in.export_prices)
    for (std::size_t b = 0; b < n_exp; ++b)
      for (std::size_t c = 0; c < (*in.export_prices)[b].size() && c < horizon_cycles; ++c)
        price += (*in.export_prices)[b][c] * exports[b][c];
  if (in.import_prices && in.imports)
    for (std::size_t b = 0; b < n_imp; ++b)
      for (std::size_t c = 0; c < (*in.import_prices)[b].size() && c < horizon_cycles; ++c)
        price -= (*in.import_prices)[b][c] * (*in.imports)[b][c];
  if (in.rho > 0.0) {
    auto pull = [&](const CycleFlows* targets, const CycleFlows& flows) {
      if (!targets) return;
      for (std::size_t b = 0; b < targets->size(); ++b)
        for (std::size_t c = 0; c < (*targets)[b].size() && c < horizon_cycles; ++c) {
          const double d = flows[b][c] - (*targets)[b][c];
          price += 0.5 * in.rho * d * d;
        }
    };
    pull(in.export_targets, exports);
    if (in.imports) pull(in.import_targets, *in.imports);
  }

  if (record) {
    record->delay = delay;
    record->price_term = price;
    record->exports = std::move(exports);
    record->export_profile = std::move(profile);
  }
  return delay + price;
}

}  // namespace urbanflow
