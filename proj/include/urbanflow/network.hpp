#pragma once

// Immutable network topology: links made of CTM cells, signalized
// intersections with movements and phases, demand sources and sinks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "urbanflow/errors.hpp"

namespace urbanflow {

struct CellParams {
  double n_max = 0.0;  // holding capacity, vehicles
  double q_max = 0.0;  // max flow, vehicles per step
  double delta = 1.0;  // backward/forward wave speed ratio, (0, 1]
};

struct Link {
  int id = 0;
  std::vector<CellParams> cells;
  int lanes = 1;
};

struct Movement {
  int id = 0;
  int from_link = 0;
  int to_link = 0;
  double saturation_flow = 0.0;    // vehicles per second
  double discharge_headway = 0.0;  // seconds per vehicle per lane
  int lanes = 1;
};

inline Movement make_movement(int id, int from_link, int to_link, int lanes, double headway) {
  return Movement{id, from_link, to_link, lanes / headway, headway, lanes};
}

// Movement ids granted green together.
using Phase = std::vector<int>;

struct Intersection {
  int id = 0;
  std::vector<Movement> movements;
  std::vector<Phase> phases;
  double lost_time_per_phase = 0.0;  // seconds of all-red after each phase
};

// Piecewise-constant inflow rate in vehicles per second. rates[i] applies on
// [breakpoints[i], breakpoints[i+1]); zero before the first breakpoint. With a
// period, time is wrapped before lookup.
class DemandProfile {
 public:
  DemandProfile() = default;

  DemandProfile(std::vector<double> breakpoints, std::vector<double> rates,
                std::optional<double> period = std::nullopt)
      : breakpoints_(std::move(breakpoints)), rates_(std::move(rates)), period_(period) {
    if (breakpoints_.size() != rates_.size())
      throw ValidationError("demand", "breakpoints and rates differ in length");
    for (std::size_t i = 0; i < rates_.size(); ++i) {
      if (!(rates_[i] >= 0.0) || !std::isfinite(rates_[i]))
        throw ValidationError("demand", "rates must be finite and non-negative");
      if (i > 0 && !(breakpoints_[i] > breakpoints_[i - 1]))
        throw ValidationError("demand", "breakpoints must be strictly increasing");
    }
    if (period_) {
      if (!(*period_ > 0.0)) throw ValidationError("demand", "period must be positive");
      if (!breakpoints_.empty() && (breakpoints_.front() != 0.0 || breakpoints_.back() >= *period_))
        throw ValidationError("demand", "cyclic breakpoints must start at 0 and lie inside the period");
    }
  }

  static DemandProfile constant(double rate) { return DemandProfile({0.0}, {rate}); }

  double rate_at(double t) const {
    if (rates_.empty()) return 0.0;
    if (period_) {
      t = std::fmod(t, *period_);
      if (t < 0.0) t += *period_;
    }
    auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
    if (it == breakpoints_.begin()) return 0.0;
    return rates_[static_cast<std::size_t>(it - breakpoints_.begin()) - 1];
  }

  const std::vector<double>& breakpoints() const noexcept { return breakpoints_; }
  const std::vector<double>& rates() const noexcept { return rates_; }
  std::optional<double> period() const noexcept { return period_; }

 private:
  std::vector<double> breakpoints_;
  std::vector<double> rates_;
  std::optional<double> period_;
};

struct Source {
  int link = 0;
  DemandProfile demand;
};

inline constexpr int kNone = -1;

// Flat per-link view used by the stepping loop. Movement lists index into
// Network::movements_from_flat() / movements_into_flat().
struct LinkLayout {
  std::uint32_t first_cell = 0;
  std::uint32_t last_cell = 0;
  std::uint32_t from_begin = 0, from_end = 0;
  std::uint32_t into_begin = 0, into_end = 0;
  int upstream = kNone;
  int downstream = kNone;
};

// Ids of links, intersections and movements are dense and equal to their
// position (movement ids are global across intersections). The constructor
// validates every topological invariant and builds the lookup tables the
// dynamics use.
class Network {
 public:
  Network() = default;

  Network(std::vector<Link> links, std::vector<Intersection> intersections,
          std::vector<Source> sources, std::vector<int> sinks, bool require_connected = true)
      : links_(std::move(links)),
        intersections_(std::move(intersections)),
        sources_(std::move(sources)),
        sinks_(std::move(sinks)) {
    std::sort(sinks_.begin(), sinks_.end());
    build(require_connected);
  }

  std::size_t link_count() const noexcept { return links_.size(); }
  std::size_t intersection_count() const noexcept { return intersections_.size(); }
  std::size_t movement_count() const noexcept { return movements_.size(); }
  std::size_t cell_count() const noexcept { return cells_.size(); }
  std::size_t source_count() const noexcept { return sources_.size(); }

  const std::vector<Link>& links() const noexcept { return links_; }
  const std::vector<Intersection>& intersections() const noexcept { return intersections_; }
  const std::vector<Source>& sources() const noexcept { return sources_; }
  const std::vector<int>& sinks() const noexcept { return sinks_; }

  const Link& link(int id) const { return links_.at(static_cast<std::size_t>(id)); }
  const Intersection& intersection(int id) const {
    return intersections_.at(static_cast<std::size_t>(id));
  }
  const Movement& movement(int id) const { return movements_.at(static_cast<std::size_t>(id)); }

  const CellParams& cell(std::size_t global_index) const { return cells_[global_index]; }
  std::size_t first_cell(int link) const { return link_first_cell_[static_cast<std::size_t>(link)]; }
  std::size_t last_cell(int link) const {
    return link_first_cell_[static_cast<std::size_t>(link)] + links_[static_cast<std::size_t>(link)].cells.size() - 1;
  }
  int link_of_cell(std::size_t global_index) const { return cell_link_[global_index]; }

  bool is_sink(int link) const { return downstream_[static_cast<std::size_t>(link)] == kNone; }
  int downstream_intersection(int link) const { return downstream_[static_cast<std::size_t>(link)]; }
  int upstream_intersection(int link) const { return upstream_[static_cast<std::size_t>(link)]; }
  int source_of(int link) const { return source_of_link_[static_cast<std::size_t>(link)]; }
  int intersection_of(int movement) const { return movement_owner_[static_cast<std::size_t>(movement)]; }

  std::span<const int> movements_from(int link) const { return from_[static_cast<std::size_t>(link)]; }
  std::span<const int> movements_into(int link) const { return into_[static_cast<std::size_t>(link)]; }
  std::span<const int> incoming_links(int intersection) const {
    return incoming_[static_cast<std::size_t>(intersection)];
  }
  std::span<const int> outgoing_links(int intersection) const {
    return outgoing_[static_cast<std::size_t>(intersection)];
  }
  // Links sharing an intersection with `link`, ascending.
  std::span<const int> adjacent_links(int link) const { return adjacency_[static_cast<std::size_t>(link)]; }

  // Bit p set when phase p of the owning intersection grants the movement.
  std::uint64_t phase_mask(int movement) const { return phase_mask_[static_cast<std::size_t>(movement)]; }

  std::span<const LinkLayout> layout() const { return layout_; }
  std::span<const int> movements_from_flat() const { return from_flat_; }
  std::span<const int> movements_into_flat() const { return into_flat_; }
  std::span<const CellParams> cells() const { return cells_; }
  // Per movement: saturation flow and the stop-line cell it drains.
  std::span<const double> saturation_flows() const { return saturation_; }
  std::span<const std::uint32_t> movement_cells() const { return movement_cell_; }

  double total_holding_capacity(int link) const {
    double total = 0.0;
    for (const auto& c : links_[static_cast<std::size_t>(link)].cells) total += c.n_max;
    return total;
  }

 private:
  static void require(bool ok, const std::string& invariant, const std::string& detail) {
    if (!ok) throw ValidationError(invariant, detail);
  }

  void build(bool require_connected) {
    const std::size_t nl = links_.size();
    for (std::size_t i = 0; i < nl; ++i) {
      const Link& l = links_[i];
      require(l.id == static_cast<int>(i), "link-ids", "link ids must equal their position (0..n-1)");
      require(!l.cells.empty(), "link-cells", "link " + std::to_string(l.id) + " has no cells");
      require(l.lanes >= 1, "link-lanes", "link " + std::to_string(l.id) + " needs at least one lane");
      link_first_cell_.push_back(cells_.size());
      for (const CellParams& c : l.cells) {
        require(c.n_max > 0 && c.q_max > 0 && c.delta > 0 && c.delta <= 1.0 && c.q_max <= c.n_max,
                "cell-params",
                "link " + std::to_string(l.id) + ": need N_max > 0, 0 < Q_max <= N_max, 0 < delta <= 1");
        cells_.push_back(c);
        cell_link_.push_back(l.id);
      }
    }

    downstream_.assign(nl, kNone);
    upstream_.assign(nl, kNone);
    from_.assign(nl, {});
    into_.assign(nl, {});
    incoming_.assign(intersections_.size(), {});
    outgoing_.assign(intersections_.size(), {});

    std::size_t movement_total = 0;
    for (const auto& x : intersections_) movement_total += x.movements.size();
    movements_.assign(movement_total, Movement{});
    movement_owner_.assign(movement_total, kNone);
    phase_mask_.assign(movement_total, 0);

    auto link_ok = [&](int id) { return id >= 0 && static_cast<std::size_t>(id) < nl; };

    for (std::size_t xi = 0; xi < intersections_.size(); ++xi) {
      const Intersection& x = intersections_[xi];
      const std::string name = "intersection " + std::to_string(x.id);
      require(x.id == static_cast<int>(xi), "intersection-ids", "intersection ids must equal their position");
      require(!x.phases.empty() && x.phases.size() <= 64, "phases", name + " needs 1..64 phases");
      require(x.lost_time_per_phase >= 0, "lost-time", name + " has negative lost time");
      for (const Movement& m : x.movements) {
        if (m.id < 0 || static_cast<std::size_t>(m.id) >= movement_total)
          throw TopologyError("movement id " + std::to_string(m.id) + " is outside 0..M-1");
        if (movement_owner_[static_cast<std::size_t>(m.id)] != kNone)
          throw TopologyError("movement id " + std::to_string(m.id) + " is duplicated");
        if (!link_ok(m.from_link) || !link_ok(m.to_link))
          throw TopologyError("movement " + std::to_string(m.id) + " references a missing link");
        if (m.from_link == m.to_link)
          throw TopologyError("movement " + std::to_string(m.id) + " loops onto its own link");
        require(m.saturation_flow > 0 && m.discharge_headway > 0 && m.lanes >= 1, "saturation-flow",
                "movement " + std::to_string(m.id) + " needs positive saturation flow and headway");
        const double expected = m.lanes / m.discharge_headway;
        require(std::abs(m.saturation_flow - expected) <= 1e-9 * expected, "saturation-flow",
                "movement " + std::to_string(m.id) + " saturation flow must equal lanes / discharge headway");
        movements_[static_cast<std::size_t>(m.id)] = m;
        movement_owner_[static_cast<std::size_t>(m.id)] = x.id;

        auto& down = downstream_[static_cast<std::size_t>(m.from_link)];
        if (down != kNone && down != x.id)
          throw ValidationError("link-termination", "link " + std::to_string(m.from_link) +
                                                        " terminates at more than one intersection");
        down = x.id;
        auto& up = upstream_[static_cast<std::size_t>(m.to_link)];
        if (up != kNone && up != x.id)
          throw ValidationError("link-origin", "link " + std::to_string(m.to_link) +
                                                   " originates at more than one intersection");
        up = x.id;
        from_[static_cast<std::size_t>(m.from_link)].push_back(m.id);
        into_[static_cast<std::size_t>(m.to_link)].push_back(m.id);
      }
      for (std::size_t p = 0; p < x.phases.size(); ++p) {
        require(!x.phases[p].empty(), "phases", name + " has an empty phase");
        for (int mid : x.phases[p]) {
          if (mid < 0 || static_cast<std::size_t>(mid) >= movement_total ||
              movement_owner_[static_cast<std::size_t>(mid)] != x.id)
            throw TopologyError(name + " phase " + std::to_string(p) + " references movement " +
                                std::to_string(mid) + " it does not own");
          phase_mask_[static_cast<std::size_t>(mid)] |= (std::uint64_t{1} << p);
        }
      }
      for (const Movement& m : x.movements)
        require(phase_mask_[static_cast<std::size_t>(m.id)] != 0, "phase-coverage",
                "movement " + std::to_string(m.id) + " is not served by any phase");
    }
    for (std::size_t i = 0; i < movement_total; ++i)
      if (movement_owner_[i] == kNone) throw TopologyError("movement ids are not dense 0..M-1");

    for (auto& v : from_) std::sort(v.begin(), v.end());
    for (auto& v : into_) std::sort(v.begin(), v.end());

    for (std::size_t l = 0; l < nl; ++l) {
      if (downstream_[l] != kNone) incoming_[static_cast<std::size_t>(downstream_[l])].push_back(static_cast<int>(l));
      if (upstream_[l] != kNone) outgoing_[static_cast<std::size_t>(upstream_[l])].push_back(static_cast<int>(l));
    }

    std::vector<char> declared_sink(nl, 0);
    for (int s : sinks_) {
      if (!link_ok(s)) throw TopologyError("sink references missing link " + std::to_string(s));
      declared_sink[static_cast<std::size_t>(s)] = 1;
    }
    for (std::size_t l = 0; l < nl; ++l)
      require((downstream_[l] == kNone) == (declared_sink[l] != 0), "sinks",
              "link " + std::to_string(l) + " must be a sink exactly when no intersection serves it");

    source_of_link_.assign(nl, kNone);
    for (std::size_t s = 0; s < sources_.size(); ++s) {
      const int l = sources_[s].link;
      if (!link_ok(l)) throw TopologyError("source references missing link " + std::to_string(l));
      require(upstream_[static_cast<std::size_t>(l)] == kNone, "sources",
              "source link " + std::to_string(l) + " must not originate at an intersection");
      require(source_of_link_[static_cast<std::size_t>(l)] == kNone, "sources",
              "link " + std::to_string(l) + " has two sources");
      source_of_link_[static_cast<std::size_t>(l)] = static_cast<int>(s);
    }

    adjacency_.assign(nl, {});
    for (std::size_t xi = 0; xi < intersections_.size(); ++xi) {
      std::vector<int> touching(incoming_[xi]);
      touching.insert(touching.end(), outgoing_[xi].begin(), outgoing_[xi].end());
      for (int a : touching)
        for (int b : touching)
          if (a != b) adjacency_[static_cast<std::size_t>(a)].push_back(b);
    }
    for (auto& v : adjacency_) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }

    if (require_connected && nl > 0) {
      std::vector<char> seen(nl, 0);
      std::queue<int> frontier;
      frontier.push(0);
      seen[0] = 1;
      std::size_t reached = 1;
      while (!frontier.empty()) {
        const int l = frontier.front();
        frontier.pop();
        for (int n : adjacency_[static_cast<std::size_t>(l)])
          if (!seen[static_cast<std::size_t>(n)]) {
            seen[static_cast<std::size_t>(n)] = 1;
            ++reached;
            frontier.push(n);
          }
      }
      require(reached == nl, "connectivity", "the link adjacency graph is not connected");
    }

    layout_.assign(nl, LinkLayout{});
    from_flat_.clear();
    into_flat_.clear();
    for (std::size_t l = 0; l < nl; ++l) {
      LinkLayout& L = layout_[l];
      L.first_cell = static_cast<std::uint32_t>(link_first_cell_[l]);
      L.last_cell = static_cast<std::uint32_t>(link_first_cell_[l] + links_[l].cells.size() - 1);
      L.from_begin = static_cast<std::uint32_t>(from_flat_.size());
      from_flat_.insert(from_flat_.end(), from_[l].begin(), from_[l].end());
      L.from_end = static_cast<std::uint32_t>(from_flat_.size());
      L.into_begin = static_cast<std::uint32_t>(into_flat_.size());
      into_flat_.insert(into_flat_.end(), into_[l].begin(), into_[l].end());
      L.into_end = static_cast<std::uint32_t>(into_flat_.size());
      L.upstream = upstream_[l];
      L.downstream = downstream_[l];
    }
    saturation_.assign(movement_total, 0.0);
    movement_cell_.assign(movement_total, 0);
    for (std::size_t m = 0; m < movement_total; ++m) {
      saturation_[m] = movements_[m].saturation_flow;
      movement_cell_[m] = layout_[static_cast<std::size_t>(movements_[m].from_link)].last_cell;
    }
  }

  std::vector<Link> links_;
  std::vector<Intersection> intersections_;
  std::vector<Source> sources_;
  std::vector<int> sinks_;

  std::vector<CellParams> cells_;
  std::vector<int> cell_link_;
  std::vector<std::size_t> link_first_cell_;
  std::vector<Movement> movements_;
  std::vector<int> movement_owner_;
  std::vector<std::uint64_t> phase_mask_;
  std::vector<int> downstream_, upstream_, source_of_link_;
  std::vector<std::vector<int>> from_, into_, incoming_, outgoing_, adjacency_;
  std::vector<LinkLayout> layout_;
  std::vector<int> from_flat_, into_flat_;
  std::vector<double> saturation_;
  std::vector<std::uint32_t> movement_cell_;
};

}  // namespace urbanflow
