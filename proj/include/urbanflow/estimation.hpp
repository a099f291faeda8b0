#pragma once

// Moving-average branching-ratio estimation from per-cycle turning counts.

#include <algorithm>
#include <cmath>
#include <deque>
#include <span>
#include <vector>

#include "urbanflow/errors.hpp"
#include "urbanflow/network.hpp"

namespace urbanflow {

struct TurningObservation {
  long cycle = 0;
  std::vector<double> counts;  // per movement of the intersection, in its local order
};

// Estimated turning split of one intersection. Ratios are kept per local
// movement (the order of Intersection::movements); movements sharing a
// from-link form one row.
class BranchingEstimate {
 public:
  BranchingEstimate() = default;

  BranchingEstimate(const Intersection& x, std::size_t window = 10) : window_size_(std::max<std::size_t>(window, 1)) {
    movement_ids_.reserve(x.movements.size());
    for (std::size_t i = 0; i < x.movements.size(); ++i) {
      movement_ids_.push_back(x.movements[i].id);
      const int from = x.movements[i].from_link;
      auto it = std::find(row_links_.begin(), row_links_.end(), from);
      if (it == row_links_.end()) {
        row_links_.push_back(from);
        rows_.emplace_back();
        it = row_links_.end() - 1;
      }
      rows_[static_cast<std::size_t>(it - row_links_.begin())].push_back(i);
    }
    ratios_.assign(x.movements.size(), 0.0);
    for (const auto& row : rows_)
      for (std::size_t i : row) ratios_[i] = 1.0 / static_cast<double>(row.size());
  }

  void record(const TurningObservation& obs) {
    if (obs.counts.size() != ratios_.size())
      throw IndexMismatch("observation covers " + std::to_string(obs.counts.size()) + " movements, expected " +
                          std::to_string(ratios_.size()));
    window_.push_back(obs.counts);
    while (window_.size() > window_size_) window_.pop_front();

    for (const auto& row : rows_) {
      double denom = 0.0;
      for (std::size_t i : row)
        for (const auto& counts : window_) denom += counts[i];
      if (!(denom > 0.0)) continue;  // no information
      for (std::size_t i : row) {
        double num = 0.0;
        for (const auto& counts : window_) num += counts[i];
        ratios_[i] = std::clamp(num / denom, 0.0, 1.0);
      }
    }
  }

  std::span<const double> ratios() const { return ratios_; }
  std::span<const int> movement_ids() const { return movement_ids_; }
  const std::deque<std::vector<double>>& window() const { return window_; }
  std::size_t window_size() const { return window_size_; }
  // Local movement indices grouped by from-link.
  const std::vector<std::vector<std::size_t>>& rows() const { return rows_; }

 private:
  std::size_t window_size_ = 10;
  std::vector<int> movement_ids_;
  std::vector<int> row_links_;
  std::vector<std::vector<std::size_t>> rows_;
  std::vector<double> ratios_;
  std::deque<std::vector<double>> window_;
};

inline BranchingEstimate record_cycle(BranchingEstimate estimate, const TurningObservation& obs) {
  estimate.record(obs);
  return estimate;
}

// Max absolute deviation between two ratio vectors over the same index set.
inline double estimate_error(std::span<const double> estimate, std::span<const double> truth) {
  if (estimate.size() != truth.size())
    throw IndexMismatch("ratio vectors differ in size (" + std::to_string(estimate.size()) + " vs " +
                        std::to_string(truth.size()) + ")");
  double worst = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) worst = std::max(worst, std::abs(estimate[i] - truth[i]));
  return worst;
}

inline double estimate_error(const BranchingEstimate& estimate, std::span<const double> truth) {
  return estimate_error(estimate.ratios(), truth);
}

// One estimator per intersection, exposed as a global per-movement vector.
class NetworkBranchingEstimator {
 public:
  NetworkBranchingEstimator() = default;

  NetworkBranchingEstimator(const Network& net, std::size_t window) : global_(net.movement_count(), 0.0) {
    for (const auto& x : net.intersections()) estimates_.emplace_back(x, window);
    sync();
  }

  // `discharged`: per global movement, vehicles discharged over the cycle.
  void record_cycle(long cycle, std::span<const double> discharged) {
    for (auto& e : estimates_) {
      TurningObservation obs{cycle, {}};
      obs.counts.reserve(e.movement_ids().size());
      for (int id : e.movement_ids()) obs.counts.push_back(discharged[static_cast<std::size_t>(id)]);
      e.record(obs);
    }
    sync();
  }

  std::span<const double> ratios() const { return global_; }
  const BranchingEstimate& intersection(std::size_t x) const { return estimates_.at(x); }

 private:
  void sync() {
    for (const auto& e : estimates_) {
      const auto ids = e.movement_ids();
      const auto r = e.ratios();
      for (std::size_t i = 0; i < ids.size(); ++i) global_[static_cast<std::size_t>(ids[i])] = r[i];
    }
  }

  std::vector<BranchingEstimate> estimates_;
  std::vector<double> global_;
};

}  // namespace urbanflow
