#pragma once

// Discrete-time macroscopic dynamics: CTM transfers inside links and
// signal-gated, saturation-bounded transfers across intersections.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "urbanflow/network.hpp"

namespace urbanflow {

inline constexpr int kAllRed = -1;

// Every transfer is rounded down to a multiple of 2^-32 vehicles. With all
// quantities on that grid (and below 2^21 vehicles) every addition is exact,
// so the vehicle balance holds to the last bit over arbitrarily long runs.
inline constexpr double kFlowQuantum = 4294967296.0;
// Truncation equals flooring here because transfers are never negative.
inline double quantize(double v) {
  return static_cast<double>(static_cast<std::int64_t>(v * kFlowQuantum)) / kFlowQuantum;
}

inline double sending_capacity(double cell_count, const CellParams& p) {
  assert(cell_count >= 0.0 && cell_count <= p.n_max + 1e-9);
  return std::min(cell_count, p.q_max);
}

inline double receiving_capacity(double cell_count, const CellParams& p) {
  assert(cell_count >= 0.0 && cell_count <= p.n_max + 1e-9);
  return std::max(0.0, std::min(p.q_max, p.delta * (p.n_max - cell_count)));
}

// Piecewise linear in the queue: zero on red, otherwise the least of what is
// waiting, what the stop line can discharge this step, and the space granted
// downstream.
inline double intersection_outflow(double queue, double arrivals, bool green, const Movement& movement,
                                   double downstream_share, double dt) {
  if (!green) return 0.0;
  return std::min({queue + arrivals, movement.saturation_flow * dt, downstream_share});
}

struct SimState {
  long step = 0;
  double dt = 1.0;
  std::vector<double> cell_counts;    // per global cell
  std::vector<double> queues;         // per movement, stop-line share of the from-link's last cell
  std::vector<double> source_queues;  // per source, vehicles waiting to enter
  std::vector<int> active_phase;      // per intersection, kAllRed during lost time
  double initial_total = 0.0;
  double cumulative_entered = 0.0;
  double cumulative_exited = 0.0;

  // Flows realized by the most recent step.
  std::vector<double> cell_outflow;      // per cell
  std::vector<double> movement_outflow;  // per movement
  std::vector<double> link_inflow;       // per link, into its first cell

  double time() const { return static_cast<double>(step) * dt; }

  double total_vehicles() const {
    double total = 0.0;
    for (double n : cell_counts) total += n;
    for (double q : source_queues) total += q;
    return total;
  }

  double conservation_error() const {
    return total_vehicles() - (initial_total + cumulative_entered - cumulative_exited);
  }

  double total_queue() const {
    double total = 0.0;
    for (double q : queues) total += q;
    for (double q : source_queues) total += q;
    return total;
  }

  bool operator==(const SimState&) const = default;
};

inline SimState make_initial_state(const Network& net, double dt) {
  SimState s;
  s.dt = dt;
  s.cell_counts.assign(net.cell_count(), 0.0);
  s.queues.assign(net.movement_count(), 0.0);
  s.source_queues.assign(net.source_count(), 0.0);
  s.active_phase.assign(net.intersection_count(), kAllRed);
  s.cell_outflow.assign(net.cell_count(), 0.0);
  s.movement_outflow.assign(net.movement_count(), 0.0);
  s.link_inflow.assign(net.link_count(), 0.0);
  return s;
}

// Places `vehicles` on link `link` of an existing state. For a link that ends
// at an intersection the last cell's share is split into the movement queues
// by `ratios`.
inline void preload_link(const Network& net, SimState& s, int link, std::span<const double> per_cell,
                         std::span<const double> ratios) {
  const std::size_t first = net.first_cell(link);
  const std::size_t last = net.last_cell(link);
  for (std::size_t c = first; c <= last; ++c) {
    const double v = quantize(std::clamp(per_cell[c - first], 0.0, net.cell(c).n_max));
    s.cell_counts[c] = v;
  }
  if (!net.is_sink(link)) {
    const auto moves = net.movements_from(link);
    double assigned = 0.0;
    for (std::size_t k = 0; k < moves.size(); ++k) {
      const int m = moves[k];
      const double left = std::max(0.0, s.cell_counts[last] - assigned);
      const double share =
          k + 1 == moves.size() ? left : quantize(std::min(ratios[static_cast<std::size_t>(m)] * s.cell_counts[last], left));
      s.queues[static_cast<std::size_t>(m)] = share;
      assigned += share;
    }
    s.cell_counts[last] = assigned;
  }
  s.initial_total = s.total_vehicles() - s.cumulative_entered + s.cumulative_exited;
}

// Largest violation of any realized transfer against its capacity bound.
struct StepDiagnostics {
  double max_feasibility_excess = 0.0;
  void observe(double flow, double bound) { max_feasibility_excess = std::max(max_feasibility_excess, flow - bound); }
};

// Advances states of one network in place. Holds scratch buffers so repeated
// stepping (rollouts) does not allocate.
class Simulator {
 public:
  explicit Simulator(const Network& net) : net_(&net) {
    cell_in_.resize(net.cell_count());
    arrivals_.resize(net.movement_count());
    demand_.resize(net.movement_count());
  }

  const Network& network() const { return *net_; }

  // `phases`: one entry per intersection. `ratios`: per movement, rows per
  // from-link summing to one. `source_arrivals`: vehicles arriving at each
  // source this step; empty means evaluate the demand profiles.
  void advance(SimState& s, std::span<const int> phases, std::span<const double> ratios,
               std::span<const double> source_arrivals = {}, StepDiagnostics* diag = nullptr) {
    const Network& net = *net_;
    const double dt = s.dt;
    const auto layout = net.layout();
    const auto from = net.movements_from_flat();
    const auto into = net.movements_into_flat();
    const CellParams* cp = net.cells().data();
    const double* sat = net.saturation_flows().data();
    const std::uint32_t* mcell = net.movement_cells().data();
    double* n = s.cell_counts.data();
    double* q = s.queues.data();
    double* out_cell = s.cell_outflow.data();
    double* out_move = s.movement_outflow.data();
    double* in_cell = cell_in_.data();
    double* arr = arrivals_.data();
    std::fill(cell_in_.begin(), cell_in_.end(), 0.0);
    std::fill(s.cell_outflow.begin(), s.cell_outflow.end(), 0.0);
    std::fill(s.link_inflow.begin(), s.link_inflow.end(), 0.0);

    // (1)-(2) transfers between consecutive cells of a link.
    for (const LinkLayout& L : layout) {
      for (std::uint32_t c = L.first_cell; c < L.last_cell; ++c) {
        const double send = sending_capacity(n[c], cp[c]);
        const double recv = receiving_capacity(n[c + 1], cp[c + 1]);
        const double y = quantize(std::min(send, recv));
        if (diag) diag->observe(y, std::min(send, recv));
        out_cell[c] = y;
        in_cell[c + 1] = y;
      }
      // (3) arrivals at the stop line split by branching ratio.
      if (L.downstream != kNone)
        split(from.subspan(L.from_begin, L.from_end - L.from_begin), ratios,
              L.last_cell > L.first_cell ? in_cell[L.last_cell] : 0.0, arrivals_);
    }

    // (4) intersection transfers; movements feeding one link share its space.
    for (std::size_t l = 0; l < layout.size(); ++l) {
      const LinkLayout& L = layout[l];
      if (L.into_begin == L.into_end) continue;
      const int phase = phases[static_cast<std::size_t>(L.upstream)];
      const std::uint32_t entry = L.first_cell;
      const double recv = receiving_capacity(n[entry], cp[entry]);
      double wanted = 0.0;
      for (std::uint32_t k = L.into_begin; k < L.into_end; ++k) {
        const auto mi = static_cast<std::size_t>(into[k]);
        const bool green = phase >= 0 && ((net.phase_mask(into[k]) >> phase) & 1u);
        demand_[mi] = green ? std::min(q[mi] + arr[mi], sat[mi] * dt) : 0.0;
        wanted += demand_[mi];
      }
      double granted = 0.0;
      for (std::uint32_t k = L.into_begin; k < L.into_end; ++k) {
        const auto mi = static_cast<std::size_t>(into[k]);
        const double share = wanted <= recv ? demand_[mi] : recv * (demand_[mi] / wanted);
        const double out = quantize(std::min(demand_[mi], share));
        if (diag) {
          diag->observe(out, q[mi] + arr[mi]);
          diag->observe(out, sat[mi] * dt);
        }
        out_move[mi] = out;
        out_cell[mcell[mi]] += out;
        granted += out;
      }
      if (diag) diag->observe(granted, recv);
      in_cell[entry] += granted;
      s.link_inflow[l] += granted;
    }

    // (5) sources, capped by the entry cell; the rest waits outside.
    for (std::size_t k = 0; k < net.source_count(); ++k) {
      const Source& src = net.sources()[k];
      const double arriving =
          quantize(std::max(0.0, source_arrivals.empty() ? src.demand.rate_at(s.time()) * dt : source_arrivals[k]));
      const std::uint32_t entry = layout[static_cast<std::size_t>(src.link)].first_cell;
      s.source_queues[k] += arriving;
      s.cumulative_entered += arriving;
      const double recv = receiving_capacity(n[entry], cp[entry]);
      const double injected = quantize(std::min(s.source_queues[k], recv));
      if (diag) diag->observe(injected, recv);
      s.source_queues[k] -= injected;
      in_cell[entry] += injected;
      s.link_inflow[static_cast<std::size_t>(src.link)] += injected;
    }

    // (6) sinks absorb whatever their last cell sends.
    for (int link : net.sinks()) {
      const std::uint32_t last = layout[static_cast<std::size_t>(link)].last_cell;
      const double out = quantize(sending_capacity(n[last], cp[last]));
      out_cell[last] = out;
      s.cumulative_exited += out;
    }

    // Apply. Stop-line cells are kept as the sum of their movement queues.
    for (const LinkLayout& L : layout) {
      const bool stop_line = L.downstream != kNone;
      const std::uint32_t plain_end = stop_line ? L.last_cell : L.last_cell + 1;
      for (std::uint32_t c = L.first_cell; c < plain_end; ++c)
        n[c] = std::min(cp[c].n_max, (n[c] - out_cell[c]) + in_cell[c]);
      if (!stop_line) continue;
      const auto moves = from.subspan(L.from_begin, L.from_end - L.from_begin);
      for (int m : moves) {
        const auto mi = static_cast<std::size_t>(m);
        q[mi] = (q[mi] + arr[mi]) - out_move[mi];
      }
      if (L.last_cell == L.first_cell && in_cell[L.last_cell] > 0.0) {
        split(moves, ratios, in_cell[L.last_cell], arrivals_);
        for (int m : moves) q[static_cast<std::size_t>(m)] += arr[static_cast<std::size_t>(m)];
      }
      double held = 0.0;
      for (int m : moves) held += q[static_cast<std::size_t>(m)];
      n[L.last_cell] = std::min(cp[L.last_cell].n_max, held);
    }

    for (std::size_t x = 0; x < net.intersection_count(); ++x) s.active_phase[x] = phases[x];
    ++s.step;
  }

 private:
  // Splits `amount` over `moves` by ratio; the last movement takes the
  // remainder so the parts add back to `amount`.
  static void split(std::span<const int> moves, std::span<const double> ratios, double amount,
                    std::vector<double>& out) {
    double assigned = 0.0;
    for (std::size_t k = 0; k < moves.size(); ++k) {
      const auto mi = static_cast<std::size_t>(moves[k]);
      const double left = std::max(0.0, amount - assigned);
      const double part = k + 1 == moves.size() ? left : quantize(std::min(amount * ratios[mi], left));
      out[mi] = part;
      assigned += part;
    }
  }

  const Network* net_;
  std::vector<double> cell_in_;
  std::vector<double> arrivals_;
  std::vector<double> demand_;
};

inline SimState step(const Network& net, SimState state, std::span<const int> phases,
                     std::span<const double> ratios) {
  Simulator sim(net);
  sim.advance(state, phases, ratios);
  return state;
}

inline double queue_delay_increment(const SimState& s) { return s.total_queue() * s.dt; }

// Vehicle-seconds spent queued (stop-line and source queues) over the trace.
inline double total_queue_delay(std::span<const SimState> trace) {
  double total = 0.0;
  for (const SimState& s : trace) total += queue_delay_increment(s);
  return total;
}

}  // namespace urbanflow
