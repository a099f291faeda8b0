#pragma once

// Per-link congestion prediction and level identification.

#include <algorithm>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "urbanflow/dynamics.hpp"
#include "urbanflow/errors.hpp"
#include "urbanflow/recurrent.hpp"

namespace urbanflow {

enum class CongestionLevel { Free = 0, Moderate = 1, Congested = 2 };

inline const char* to_string(CongestionLevel level) {
  switch (level) {
    case CongestionLevel::Free: return "Free";
    case CongestionLevel::Moderate: return "Moderate";
    case CongestionLevel::Congested: return "Congested";
  }
  return "?";
}

struct LinkObservation {
  int link = 0;
  long step = 0;
  double speed = 1.0;    // share of the link's vehicles advancing a cell per step, 1 = free flow
  double density = 0.0;  // vehicles held / holding capacity
};

struct Forecast {
  double speed = 1.0;
  double density = 0.0;
};

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::size_t horizon() const = 0;
  // `history` is oldest first. Throws EmptyHistory when it is empty.
  virtual std::vector<Forecast> predict(std::span<const LinkObservation> history) const = 0;
  virtual std::unique_ptr<Predictor> clone() const = 0;
};

// Exponentially smoothed level carried flat over the horizon.
class SmoothingPredictor final : public Predictor {
 public:
  explicit SmoothingPredictor(double alpha = 0.5, std::size_t horizon = 1) : alpha_(alpha), horizon_(horizon) {}

  std::size_t horizon() const override { return horizon_; }

  std::vector<Forecast> predict(std::span<const LinkObservation> history) const override {
    if (history.empty()) throw EmptyHistory();
    double speed = history.front().speed, density = history.front().density;
    for (std::size_t k = 1; k < history.size(); ++k) {
      speed = alpha_ * history[k].speed + (1.0 - alpha_) * speed;
      density = alpha_ * history[k].density + (1.0 - alpha_) * density;
    }
    const Forecast f{std::clamp(speed, 0.0, 1.0), std::clamp(density, 0.0, 1.0)};
    return std::vector<Forecast>(horizon_, f);
  }

  std::unique_ptr<Predictor> clone() const override { return std::make_unique<SmoothingPredictor>(*this); }

 private:
  double alpha_;
  std::size_t horizon_;
};

// Two recurrent networks, one forecasting speed and one density, each reading
// the most recent `context` observations.
class RecurrentPredictor final : public Predictor {
 public:
  RecurrentPredictor(ElmanNetwork speed_model, ElmanNetwork density_model, std::size_t context = 8)
      : speed_(std::move(speed_model)), density_(std::move(density_model)), context_(std::max<std::size_t>(context, 1)) {
    if (speed_.outputs() != density_.outputs())
      throw std::invalid_argument("speed and density models must share a horizon");
  }

  std::size_t horizon() const override { return speed_.outputs(); }

  std::vector<Forecast> predict(std::span<const LinkObservation> history) const override {
    if (history.empty()) throw EmptyHistory();
    const auto recent = history.subspan(history.size() > context_ ? history.size() - context_ : 0);
    std::vector<double> speeds, densities;
    for (const auto& o : recent) {
      speeds.push_back(o.speed);
      densities.push_back(o.density);
    }
    const auto vs = speed_.forward(speeds);
    const auto ds = density_.forward(densities);
    std::vector<Forecast> out(vs.size());
    for (std::size_t j = 0; j < vs.size(); ++j)
      out[j] = Forecast{std::clamp(vs[j], 0.0, 1.0), std::clamp(ds[j], 0.0, 1.0)};
    return out;
  }

  std::unique_ptr<Predictor> clone() const override { return std::make_unique<RecurrentPredictor>(*this); }

  const ElmanNetwork& speed_model() const { return speed_; }
  const ElmanNetwork& density_model() const { return density_; }

 private:
  ElmanNetwork speed_;
  ElmanNetwork density_;
  std::size_t context_;
};

struct LevelThresholds {
  double density_low = 0.2;
  double density_high = 0.5;
  double speed_low = 0.3;
  double speed_high = 0.6;

  void validate() const {
    if (!(density_low < density_high)) throw InvalidThresholds("density thresholds must satisfy low < high");
    if (!(speed_low < speed_high)) throw InvalidThresholds("speed thresholds must satisfy low < high");
  }
};

inline CongestionLevel identify_level(double speed, double density, const LevelThresholds& th = {}) {
  th.validate();
  if (density > th.density_high || speed < th.speed_low) return CongestionLevel::Congested;
  if (density < th.density_low && speed > th.speed_high) return CongestionLevel::Free;
  return CongestionLevel::Moderate;
}

// Level from the horizon-averaged forecast.
inline CongestionLevel identify_level(std::span<const Forecast> forecast, const LevelThresholds& th = {}) {
  double speed = 0.0, density = 0.0;
  for (const auto& f : forecast) {
    speed += f.speed;
    density += f.density;
  }
  const double k = forecast.empty() ? 1.0 : static_cast<double>(forecast.size());
  return identify_level(speed / k, density / k, th);
}

// Accumulates per-link speed and density proxies over a window of steps.
class LinkObserver {
 public:
  explicit LinkObserver(const Network& net)
      : net_(&net), moved_(net.link_count(), 0.0), held_(net.link_count(), 0.0), steps_(0) {}

  void observe(const SimState& before, const SimState& after) {
    const Network& net = *net_;
    for (std::size_t l = 0; l < net.link_count(); ++l) {
      const int link = static_cast<int>(l);
      for (std::size_t c = net.first_cell(link); c <= net.last_cell(link); ++c) {
        moved_[l] += after.cell_outflow[c];
        held_[l] += before.cell_counts[c];
      }
    }
    ++steps_;
  }

  // Observation averaged over the steps seen since the last reset.
  LinkObservation summarize(int link, long step) const {
    const auto l = static_cast<std::size_t>(link);
    LinkObservation o;
    o.link = link;
    o.step = step;
    o.speed = held_[l] > 1e-9 ? std::clamp(moved_[l] / held_[l], 0.0, 1.0) : 1.0;
    const double cap = net_->total_holding_capacity(link) * static_cast<double>(std::max<std::size_t>(steps_, 1));
    o.density = std::clamp(held_[l] / cap, 0.0, 1.0);
    return o;
  }

  void reset() {
    std::fill(moved_.begin(), moved_.end(), 0.0);
    std::fill(held_.begin(), held_.end(), 0.0);
    steps_ = 0;
  }

 private:
  const Network* net_;
  std::vector<double> moved_;
  std::vector<double> held_;
  std::size_t steps_;
};

// Instantaneous observation of a link from one state.
inline LinkObservation observe_link(const Network& net, const SimState& s, int link) {
  double held = 0.0, moved = 0.0;
  for (std::size_t c = net.first_cell(link); c <= net.last_cell(link); ++c) {
    held += s.cell_counts[c];
    moved += s.cell_outflow.empty() ? 0.0 : s.cell_outflow[c];
  }
  LinkObservation o;
  o.link = link;
  o.step = s.step;
  o.speed = held > 1e-9 ? std::clamp(moved / held, 0.0, 1.0) : 1.0;
  o.density = std::clamp(held / net.total_holding_capacity(link), 0.0, 1.0);
  return o;
}

}  // namespace urbanflow
