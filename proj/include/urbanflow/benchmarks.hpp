#pragma once

// Synthetic scenarios: the signalized grid with a congested arterial used for
// the strategy comparison, and small instances where exact enumeration is
// affordable.

#include <algorithm>
#include <array>
#include <optional>
#include <vector>

#include "urbanflow/scenario.hpp"

namespace urbanflow {

struct GridOptions {
  int rows = 3;
  int cols = 3;
  // One cell per link: every vehicle held on a signalized link is counted in
  // its stop-line queue, so queue delay sees blocked vehicles too.
  std::size_t cells_per_link = 1;
  double cell_capacity = 60.0;  // vehicles
  double max_flow_vph = 3600.0;
  double delta = 0.5;
  int lanes = 2;
  double headway = 2.0;  // s per vehicle per lane
  double cycle = 48.0;
  double lost_time = 4.0;
  // With protected lefts each intersection runs NS thru, NS left, EW thru,
  // EW left; otherwise one phase per axis carries every movement.
  bool protected_lefts = false;
  std::vector<double> base_greens{15.0, 25.0};
  double background_vph = 300.0;
  // Busier north-south streets; their intersections' base plans favour them.
  std::vector<int> cross_columns{1, 2};
  double cross_vph = 1100.0;
  std::vector<double> cross_greens{22.0, 18.0};
  int corridor_row = 1;  // eastbound arterial; -1 disables it
  // One long peak inside the default run length; unset period = no repeat.
  std::vector<double> corridor_breakpoints{0.0, 1200.0, 7200.0};
  std::vector<double> corridor_vph{1200.0, 2700.0, 1200.0};
  std::optional<double> corridor_period;
  double through_ratio = 0.7;
  double corridor_through_ratio = 0.85;
  long steps = 10000;
  // Stop-line cells hold vehicles through red, so the outflow/occupancy speed
  // proxy stays far below 1 on every signalized link and density does most
  // of the classifying.
  LevelThresholds thresholds{0.1, 0.2, 0.02, 0.05};
};

// Headings clockwise from north; right turn is +1, left turn is +3 (mod 4).
inline Scenario make_grid_scenario(const GridOptions& o = {}) {
  enum { N = 0, E = 1, S = 2, W = 3 };
  constexpr std::array<int, 4> dr{-1, 0, 1, 0};
  constexpr std::array<int, 4> dc{0, 1, 0, -1};
  const int R = o.rows, C = o.cols;
  auto xid = [&](int r, int c) { return r * C + c; };
  auto inside = [&](int r, int c) { return r >= 0 && r < R && c >= 0 && c < C; };

  std::vector<Link> links;
  auto add_link = [&] {
    Link l;
    l.id = static_cast<int>(links.size());
    l.lanes = o.lanes;
    l.cells.assign(o.cells_per_link, CellParams{o.cell_capacity, o.max_flow_vph / 3600.0, o.delta});
    links.push_back(l);
    return l.id;
  };

  // out[x][d]: link leaving intersection x heading d; in[x][d]: link entering x heading d.
  std::vector<std::array<int, 4>> out(static_cast<std::size_t>(R * C)), in(static_cast<std::size_t>(R * C));
  std::vector<int> sinks;
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c)
      for (int d = 0; d < 4; ++d) {
        const int l = add_link();
        out[static_cast<std::size_t>(xid(r, c))][static_cast<std::size_t>(d)] = l;
        const int nr = r + dr[static_cast<std::size_t>(d)], nc = c + dc[static_cast<std::size_t>(d)];
        if (inside(nr, nc))
          in[static_cast<std::size_t>(xid(nr, nc))][static_cast<std::size_t>(d)] = l;
        else
          sinks.push_back(l);
      }

  std::vector<Source> sources;
  std::vector<int> entry_heading, entry_row;
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c)
      for (int d = 0; d < 4; ++d) {
        const int pr = r - dr[static_cast<std::size_t>(d)], pc = c - dc[static_cast<std::size_t>(d)];
        if (inside(pr, pc)) continue;
        const int l = add_link();
        in[static_cast<std::size_t>(xid(r, c))][static_cast<std::size_t>(d)] = l;
        const bool arterial = d == E && r == o.corridor_row;
        const bool cross = (d == N || d == S) && std::count(o.cross_columns.begin(), o.cross_columns.end(), c) > 0;
        Source src;
        src.link = l;
        if (arterial) {
          std::vector<double> rates;
          for (double v : o.corridor_vph) rates.push_back(v / 3600.0);
          src.demand = DemandProfile(o.corridor_breakpoints, rates, o.corridor_period);
        } else {
          src.demand = DemandProfile::constant((cross ? o.cross_vph : o.background_vph) / 3600.0);
        }
        sources.push_back(std::move(src));
      }

  std::vector<Intersection> xs;
  std::vector<double> ratios;
  int next_movement = 0;
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c) {
      const int x = xid(r, c);
      Intersection inter;
      inter.id = x;
      inter.lost_time_per_phase = o.lost_time;
      inter.phases.assign(o.protected_lefts ? 4 : 2, {});
      for (int d = 0; d < 4; ++d) {
        const int from = in[static_cast<std::size_t>(x)][static_cast<std::size_t>(d)];
        const bool ns = d == N || d == S;
        const bool arterial = d == E && r == o.corridor_row;
        const double through = arterial ? o.corridor_through_ratio : o.through_ratio;
        const double turn = (1.0 - through) / 2.0;
        struct Turn {
          int heading;
          int lanes;
          double ratio;
          bool left;
        };
        const std::array<Turn, 3> turns{Turn{d, o.lanes, through, false}, Turn{(d + 3) % 4, 1, turn, true},
                                        Turn{(d + 1) % 4, 1, turn, false}};
        for (const Turn& t : turns) {
          const int to = out[static_cast<std::size_t>(x)][static_cast<std::size_t>(t.heading)];
          inter.movements.push_back(make_movement(next_movement, from, to, t.lanes, o.headway));
          const int phase = o.protected_lefts ? (ns ? 0 : 2) + (t.left ? 1 : 0) : (ns ? 0 : 1);
          inter.phases[static_cast<std::size_t>(phase)].push_back(next_movement);
          ratios.push_back(t.ratio);
          ++next_movement;
        }
      }
      xs.push_back(std::move(inter));
    }

  Scenario s;
  s.name = "grid" + std::to_string(R) + "x" + std::to_string(C);
  s.dt = 1.0;
  s.steps = o.steps;
  s.cycle = o.cycle;
  s.network = Network(std::move(links), std::move(xs), std::move(sources), std::move(sinks));
  s.true_ratios = std::move(ratios);
  s.control.thresholds = o.thresholds;
  for (std::size_t x = 0; x < s.network.intersection_count(); ++x) {
    const int col = static_cast<int>(x) % C;
    SignalPlan p;
    p.cycle = o.cycle;
    p.lost_time_per_phase = o.lost_time;
    p.greens = std::count(o.cross_columns.begin(), o.cross_columns.end(), col) > 0 ? o.cross_greens : o.base_greens;
    s.base_plans.push_back(p);
  }
  validate_scenario(s);
  return s;
}

// One intersection, two approaches each served by its own phase, both
// leaving to sinks. Links: 0 = approach A, 1 = approach B, 2/3 = exits.
struct SingleIntersectionOptions {
  double demand_a_vph = 900.0;
  double demand_b_vph = 0.0;
  double cycle = 40.0;
  double lost_time = 5.0;
  double cell_capacity = 20.0;
  double max_flow_vph = 3600.0;
  double headway = 2.0;
  int lanes = 2;
};

inline Scenario make_single_intersection(const SingleIntersectionOptions& o = {}) {
  const CellParams cell{o.cell_capacity, o.max_flow_vph / 3600.0, 0.5};
  std::vector<Link> links;
  for (int i = 0; i < 4; ++i) links.push_back(Link{i, {cell, cell}, o.lanes});
  Intersection x;
  x.id = 0;
  x.lost_time_per_phase = o.lost_time;
  x.movements = {make_movement(0, 0, 2, o.lanes, o.headway), make_movement(1, 1, 3, o.lanes, o.headway)};
  x.phases = {{0}, {1}};
  std::vector<Source> sources{{0, DemandProfile::constant(o.demand_a_vph / 3600.0)},
                              {1, DemandProfile::constant(o.demand_b_vph / 3600.0)}};
  Scenario s;
  s.name = "single-intersection";
  s.cycle = o.cycle;
  s.steps = static_cast<long>(o.cycle * 10);
  s.network = Network(std::move(links), {x}, std::move(sources), {2, 3});
  s.true_ratios = {1.0, 1.0};
  s.base_plans = {uniform_plan(o.cycle, 2, o.lost_time)};
  return s;
}

// Two intersections in series joined by link 2 (X0 -> X1), each with a
// side street.
//   0: west entry -> X0        1: north entry -> X0      2: X0 -> X1
//   3: X0 south exit           4: north entry -> X1      5: X1 east exit
//   6: X1 south exit
// X0: m0 0->2 (phase 0), m1 1->3 and m2 1->2 (phase 1)
// X1: m3 2->5 (phase 0), m4 4->6 (phase 1)
struct LineOptions {
  double west_vph = 1000.0;
  double north0_vph = 500.0;
  double north1_vph = 500.0;
  double side_turn_ratio = 0.3;  // share of X0's side street turning onto link 2
  double cycle = 40.0;
  double lost_time = 5.0;
  double cell_capacity = 20.0;
  double max_flow_vph = 3600.0;
  double headway = 2.0;
  int lanes = 2;
  std::size_t cells_per_link = 2;
};

inline Scenario make_two_intersection_line(const LineOptions& o = {}) {
  const CellParams cell{o.cell_capacity, o.max_flow_vph / 3600.0, 0.5};
  std::vector<Link> links;
  for (int i = 0; i < 7; ++i)
    links.push_back(Link{i, std::vector<CellParams>(o.cells_per_link, cell), o.lanes});
  Intersection x0, x1;
  x0.id = 0;
  x1.id = 1;
  x0.lost_time_per_phase = x1.lost_time_per_phase = o.lost_time;
  x0.movements = {make_movement(0, 0, 2, o.lanes, o.headway), make_movement(1, 1, 3, o.lanes, o.headway),
                  make_movement(2, 1, 2, 1, o.headway)};
  x0.phases = {{0}, {1, 2}};
  x1.movements = {make_movement(3, 2, 5, o.lanes, o.headway), make_movement(4, 4, 6, o.lanes, o.headway)};
  x1.phases = {{3}, {4}};
  std::vector<Source> sources{{0, DemandProfile::constant(o.west_vph / 3600.0)},
                              {1, DemandProfile::constant(o.north0_vph / 3600.0)},
                              {4, DemandProfile::constant(o.north1_vph / 3600.0)}};
  Scenario s;
  s.name = "two-intersection-line";
  s.cycle = o.cycle;
  s.steps = static_cast<long>(o.cycle * 10);
  s.network = Network(std::move(links), {x0, x1}, std::move(sources), {3, 5, 6});
  s.true_ratios = {1.0, 1.0 - o.side_turn_ratio, o.side_turn_ratio, 1.0, 1.0};
  s.base_plans = {uniform_plan(o.cycle, 2, o.lost_time), uniform_plan(o.cycle, 2, o.lost_time)};
  return s;
}

}  // namespace urbanflow
