#pragma once

// Scenario files: one JSON document with network / demand / signals /
// branching / control sections. Flows are given per hour and converted to
// per-step quantities at load.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "urbanflow/congestion.hpp"
#include "urbanflow/network.hpp"
#include "urbanflow/signal_plan.hpp"

namespace urbanflow {

struct ControlParams {
  double g_min = 5.0;
  double g_step = 5.0;
  std::size_t horizon_cycles = 2;
  std::size_t budget = 2000;
  double alpha0 = 5.0;
  double rho = 2.0;
  double tol = 0.5;
  std::size_t max_iters = 20;
  std::size_t window = 10;
  std::size_t repartition_cycles = 5;
  std::size_t max_region_size = 0;  // 0 = unbounded
  std::string predictor = "smoothing";
  double smoothing_alpha = 0.5;
  std::size_t forecast_horizon = 1;
  LevelThresholds thresholds;
  std::size_t rnn_hidden = 8;
  std::size_t rnn_truncation = 8;
  std::size_t rnn_epochs = 200;
  double rnn_learning_rate = 0.05;
  double demand_noise = 0.0;  // relative std-dev of per-step source arrivals
  bool parallel = false;
};

struct Scenario {
  std::string name = "scenario";
  double dt = 1.0;
  long steps = 3600;
  std::uint64_t seed = 1;
  double cycle = 60.0;
  Network network;
  std::vector<SignalPlan> base_plans;  // per intersection
  std::vector<double> true_ratios;     // per movement
  ControlParams control;
};

inline nlohmann::json control_to_json(const ControlParams& c) {
  return nlohmann::json{{"g_min_s", c.g_min},
                        {"g_step_s", c.g_step},
                        {"horizon_cycles", c.horizon_cycles},
                        {"budget", c.budget},
                        {"alpha0", c.alpha0},
                        {"rho", c.rho},
                        {"tol", c.tol},
                        {"max_iters", c.max_iters},
                        {"window", c.window},
                        {"repartition_cycles", c.repartition_cycles},
                        {"max_region_size", c.max_region_size},
                        {"predictor", c.predictor},
                        {"smoothing_alpha", c.smoothing_alpha},
                        {"forecast_horizon", c.forecast_horizon},
                        {"thresholds",
                         {{"density_low", c.thresholds.density_low},
                          {"density_high", c.thresholds.density_high},
                          {"speed_low", c.thresholds.speed_low},
                          {"speed_high", c.thresholds.speed_high}}},
                        {"rnn_hidden", c.rnn_hidden},
                        {"rnn_truncation", c.rnn_truncation},
                        {"rnn_epochs", c.rnn_epochs},
                        {"rnn_learning_rate", c.rnn_learning_rate},
                        {"demand_noise", c.demand_noise},
                        {"parallel", c.parallel}};
}

namespace detail {

inline std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

template <typename T>
T read(const nlohmann::json& j, const std::string& key, const std::string& path) {
  const std::string field = path.empty() ? key : path + "." + key;
  if (!j.is_object() || !j.contains(key)) throw ParseError("missing required field", 0, field);
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("wrong type: ") + e.what(), 0, field);
  }
}

template <typename T>
T read_or(const nlohmann::json& j, const std::string& key, const std::string& path, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return read<T>(j, key, path);
}

// Seconds that must land on the step grid.
inline void require_on_grid(double seconds, double dt, const std::string& what) {
  const double steps = seconds / dt;
  if (std::abs(steps - std::round(steps)) > 1e-9)
    throw UnitError(what + " = " + std::to_string(seconds) + " s is not a multiple of dt = " + std::to_string(dt) + " s");
}

inline void apply_control(const nlohmann::json& j, ControlParams& c) {
  const std::string p = "control";
  c.g_min = read_or(j, "g_min_s", p, c.g_min);
  c.g_step = read_or(j, "g_step_s", p, c.g_step);
  c.horizon_cycles = read_or(j, "horizon_cycles", p, c.horizon_cycles);
  c.budget = read_or(j, "budget", p, c.budget);
  c.alpha0 = read_or(j, "alpha0", p, c.alpha0);
  c.rho = read_or(j, "rho", p, c.rho);
  c.tol = read_or(j, "tol", p, c.tol);
  c.max_iters = read_or(j, "max_iters", p, c.max_iters);
  c.window = read_or(j, "window", p, c.window);
  c.repartition_cycles = read_or(j, "repartition_cycles", p, c.repartition_cycles);
  c.max_region_size = read_or(j, "max_region_size", p, c.max_region_size);
  c.predictor = read_or(j, "predictor", p, c.predictor);
  c.smoothing_alpha = read_or(j, "smoothing_alpha", p, c.smoothing_alpha);
  c.forecast_horizon = read_or(j, "forecast_horizon", p, c.forecast_horizon);
  if (j.contains("thresholds")) {
    const auto& t = j.at("thresholds");
    const std::string tp = p + ".thresholds";
    c.thresholds.density_low = read_or(t, "density_low", tp, c.thresholds.density_low);
    c.thresholds.density_high = read_or(t, "density_high", tp, c.thresholds.density_high);
    c.thresholds.speed_low = read_or(t, "speed_low", tp, c.thresholds.speed_low);
    c.thresholds.speed_high = read_or(t, "speed_high", tp, c.thresholds.speed_high);
  }
  c.rnn_hidden = read_or(j, "rnn_hidden", p, c.rnn_hidden);
  c.rnn_truncation = read_or(j, "rnn_truncation", p, c.rnn_truncation);
  c.rnn_epochs = read_or(j, "rnn_epochs", p, c.rnn_epochs);
  c.rnn_learning_rate = read_or(j, "rnn_learning_rate", p, c.rnn_learning_rate);
  c.demand_noise = read_or(j, "demand_noise", p, c.demand_noise);
  c.parallel = read_or(j, "parallel", p, c.parallel);
}

inline void validate_control(const ControlParams& c) {
  try {
    c.thresholds.validate();
  } catch (const InvalidThresholds& e) {
    throw ValidationError("thresholds", e.what());
  }
  if (c.predictor != "smoothing" && c.predictor != "recurrent")
    throw ValidationError("predictor", "predictor must be 'smoothing' or 'recurrent'");
  if (!(c.g_min > 0) || !(c.g_step > 0)) throw ValidationError("control", "g_min and g_step must be positive");
  if (c.horizon_cycles < 1) throw ValidationError("control", "horizon_cycles must be at least 1");
  if (!(c.tol > 0)) throw ValidationError("control", "tol must be positive");
  if (!(c.alpha0 > 0) || !(c.rho >= 0)) throw ValidationError("control", "alpha0 must be positive and rho non-negative");
  if (c.window < 1 || c.repartition_cycles < 1) throw ValidationError("control", "window and repartition_cycles must be >= 1");
  if (!(c.smoothing_alpha > 0 && c.smoothing_alpha <= 1)) throw ValidationError("control", "smoothing_alpha must be in (0, 1]");
  if (c.forecast_horizon < 1) throw ValidationError("control", "forecast_horizon must be >= 1");
  if (c.demand_noise < 0) throw ValidationError("control", "demand_noise must be non-negative");
}

}  // namespace detail

// Checks the branching rows of every from-link sum to one.
inline void validate_ratios(const Network& net, std::span<const double> ratios) {
  if (ratios.size() != net.movement_count())
    throw ValidationError("branching", "expected one ratio per movement");
  for (const auto& x : net.intersections())
    for (int l : net.incoming_links(x.id)) {
      double sum = 0.0;
      for (int m : net.movements_from(l)) {
        const double r = ratios[static_cast<std::size_t>(m)];
        if (!(r >= 0.0 && r <= 1.0))
          throw ValidationError("branching", "intersection " + std::to_string(x.id) + ": ratio outside [0, 1]");
        sum += r;
      }
      if (std::abs(sum - 1.0) > 1e-6)
        throw ValidationError("branching", "intersection " + std::to_string(x.id) + ": ratios from link " +
                                               std::to_string(l) + " sum to " + std::to_string(sum));
    }
}

inline void validate_plans(const Scenario& s) {
  if (s.base_plans.size() != s.network.intersection_count())
    throw ValidationError("signals", "expected one plan per intersection");
  for (std::size_t x = 0; x < s.base_plans.size(); ++x) {
    const SignalPlan& p = s.base_plans[x];
    const std::string name = "intersection " + std::to_string(x);
    if (p.greens.size() != s.network.intersection(static_cast<int>(x)).phases.size())
      throw ValidationError("signals", name + ": one green per phase required");
    detail::require_on_grid(p.cycle, s.dt, name + " cycle");
    detail::require_on_grid(p.offset, s.dt, name + " offset");
    detail::require_on_grid(p.lost_time_per_phase, s.dt, name + " lost time");
    for (double g : p.greens) detail::require_on_grid(g, s.dt, name + " green");
    if (!is_feasible(p, s.control.g_min))
      throw ValidationError("signal-plan", name + ": greens plus lost time must equal the cycle with every green in [g_min, g_max]");
    if (std::abs(p.cycle - s.cycle) > 1e-9)
      throw ValidationError("signals", name + ": all intersections share the common cycle length");
  }
  detail::require_on_grid(s.control.g_step, s.dt, "g_step");
}

inline void validate_scenario(const Scenario& s) {
  if (!(s.dt > 0)) throw UnitError("dt must be positive");
  detail::validate_control(s.control);
  validate_plans(s);
  validate_ratios(s.network, s.true_ratios);
  if (static_cast<double>(s.steps) * s.dt < s.cycle)
    throw ValidationError("simulation-length", "the simulation must cover at least one cycle");
}

inline Scenario scenario_from_json(const nlohmann::json& doc) {
  using detail::read;
  using detail::read_or;
  Scenario s;
  s.name = read_or<std::string>(doc, "name", "", s.name);
  s.dt = read_or(doc, "dt_s", "", s.dt);
  if (!(s.dt > 0)) throw UnitError("dt_s must be positive");
  s.steps = read_or(doc, "steps", "", s.steps);
  s.seed = read_or(doc, "seed", "", s.seed);
  if (doc.contains("control")) detail::apply_control(doc.at("control"), s.control);

  const auto& jn = doc.contains("network") ? doc.at("network") : throw ParseError("missing required field", 0, "network");
  std::vector<Link> links;
  const auto jlinks = read<nlohmann::json>(jn, "links", "network");
  for (std::size_t i = 0; i < jlinks.size(); ++i) {
    const auto& jl = jlinks[i];
    const std::string path = "network.links[" + std::to_string(i) + "]";
    Link l;
    l.id = read<int>(jl, "id", path);
    l.lanes = read_or(jl, "lanes", path, 1);
    auto cell_of = [&](const nlohmann::json& jc, const std::string& cp) {
      CellParams c;
      c.n_max = read<double>(jc, "capacity_veh", cp);
      c.q_max = read<double>(jc, "max_flow_vph", cp) / 3600.0 * s.dt;
      c.delta = read_or(jc, "delta", cp, 1.0);
      return c;
    };
    if (jl.contains("cells")) {
      const auto& jc = jl.at("cells");
      for (std::size_t k = 0; k < jc.size(); ++k) l.cells.push_back(cell_of(jc[k], path + ".cells[" + std::to_string(k) + "]"));
    } else {
      const int count = read<int>(jl, "cell_count", path);
      const CellParams c = cell_of(read<nlohmann::json>(jl, "cell", path), path + ".cell");
      l.cells.assign(static_cast<std::size_t>(std::max(count, 0)), c);
    }
    links.push_back(std::move(l));
  }

  std::vector<Intersection> xs;
  std::vector<std::vector<double>> local_ratios;
  const auto jxs = read_or<nlohmann::json>(jn, "intersections", "network", nlohmann::json::array());
  for (std::size_t i = 0; i < jxs.size(); ++i) {
    const auto& jx = jxs[i];
    const std::string path = "network.intersections[" + std::to_string(i) + "]";
    Intersection x;
    x.id = read<int>(jx, "id", path);
    x.lost_time_per_phase = read_or(jx, "lost_time_s", path, 0.0);
    const auto jm = read<nlohmann::json>(jx, "movements", path);
    for (std::size_t k = 0; k < jm.size(); ++k) {
      const std::string mp = path + ".movements[" + std::to_string(k) + "]";
      const int from = read<int>(jm[k], "from", mp);
      if (from < 0 || static_cast<std::size_t>(from) >= links.size())
        throw TopologyError("movement at " + mp + " references missing link " + std::to_string(from));
      const int lanes = read_or(jm[k], "lanes", mp, links[static_cast<std::size_t>(from)].lanes);
      const double headway = read<double>(jm[k], "discharge_headway_s", mp);
      if (!(headway > 0)) throw ValidationError("saturation-flow", mp + ": discharge headway must be positive");
      Movement m = make_movement(read<int>(jm[k], "id", mp), from, read<int>(jm[k], "to", mp), lanes, headway);
      if (jm[k].contains("saturation_flow_vph")) {
        const double given = read<double>(jm[k], "saturation_flow_vph", mp) / 3600.0;
        if (std::abs(given - m.saturation_flow) > 1e-9 * m.saturation_flow)
          throw ValidationError("saturation-flow", mp + ": saturation flow disagrees with lanes / discharge headway");
      }
      x.movements.push_back(m);
    }
    x.phases = read<std::vector<std::vector<int>>>(jx, "phases", path);
    xs.push_back(std::move(x));
  }

  std::vector<Source> sources;
  const auto jd = read_or<nlohmann::json>(doc, "demand", "", nlohmann::json::array());
  for (std::size_t i = 0; i < jd.size(); ++i) {
    const std::string path = "demand[" + std::to_string(i) + "]";
    Source src;
    src.link = read<int>(jd[i], "link", path);
    auto rates = read<std::vector<double>>(jd[i], "rates_vph", path);
    for (double& r : rates) r /= 3600.0;
    auto bps = read_or<std::vector<double>>(jd[i], "breakpoints_s", path, std::vector<double>{0.0});
    std::optional<double> period;
    if (jd[i].contains("period_s")) period = read<double>(jd[i], "period_s", path);
    src.demand = DemandProfile(std::move(bps), std::move(rates), period);
    sources.push_back(std::move(src));
  }

  const auto sinks = read_or<std::vector<int>>(jn, "sinks", "network", {});
  s.network = Network(std::move(links), std::move(xs), std::move(sources), sinks);

  const auto js = read_or<nlohmann::json>(doc, "signals", "", nlohmann::json::object());
  s.cycle = read_or(js, "cycle_s", "signals", s.cycle);
  for (const auto& x : s.network.intersections())
    s.base_plans.push_back(uniform_plan(s.cycle, x.phases.size(), x.lost_time_per_phase));
  const auto jp = read_or<nlohmann::json>(js, "plans", "signals", nlohmann::json::array());
  for (std::size_t i = 0; i < jp.size(); ++i) {
    const std::string path = "signals.plans[" + std::to_string(i) + "]";
    const int x = read<int>(jp[i], "intersection", path);
    if (x < 0 || static_cast<std::size_t>(x) >= s.base_plans.size())
      throw TopologyError(path + " references missing intersection " + std::to_string(x));
    SignalPlan& plan = s.base_plans[static_cast<std::size_t>(x)];
    plan.greens = read<std::vector<double>>(jp[i], "greens_s", path);
    plan.offset = read_or(jp[i], "offset_s", path, 0.0);
  }

  s.true_ratios.assign(s.network.movement_count(), 0.0);
  for (const auto& x : s.network.intersections())
    for (int l : s.network.incoming_links(x.id)) {
      const auto moves = s.network.movements_from(l);
      for (int m : moves) s.true_ratios[static_cast<std::size_t>(m)] = 1.0 / static_cast<double>(moves.size());
    }
  const auto jb = read_or<nlohmann::json>(doc, "branching", "", nlohmann::json::array());
  for (std::size_t i = 0; i < jb.size(); ++i) {
    const std::string path = "branching[" + std::to_string(i) + "]";
    const int x = read<int>(jb[i], "intersection", path);
    if (x < 0 || static_cast<std::size_t>(x) >= s.network.intersection_count())
      throw TopologyError(path + " references missing intersection " + std::to_string(x));
    const auto r = read<std::vector<double>>(jb[i], "ratios", path);
    const auto& movements = s.network.intersection(x).movements;
    if (r.size() != movements.size())
      throw ValidationError("branching", "intersection " + std::to_string(x) + ": one ratio per movement required");
    for (std::size_t k = 0; k < r.size(); ++k) s.true_ratios[static_cast<std::size_t>(movements[k].id)] = r[k];
  }

  validate_scenario(s);
  return s;
}

inline Scenario parse_scenario(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(e.what(), detail::line_of_offset(text, e.byte), "");
  }
  return scenario_from_json(doc);
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenario file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

inline nlohmann::json scenario_to_json(const Scenario& s) {
  using nlohmann::json;
  json doc;
  doc["name"] = s.name;
  doc["dt_s"] = s.dt;
  doc["steps"] = s.steps;
  doc["seed"] = s.seed;
  json links = json::array();
  for (const auto& l : s.network.links()) {
    json cells = json::array();
    for (const auto& c : l.cells)
      cells.push_back({{"capacity_veh", c.n_max}, {"max_flow_vph", c.q_max / s.dt * 3600.0}, {"delta", c.delta}});
    links.push_back({{"id", l.id}, {"lanes", l.lanes}, {"cells", cells}});
  }
  json xs = json::array();
  for (const auto& x : s.network.intersections()) {
    json ms = json::array();
    for (const auto& m : x.movements)
      ms.push_back({{"id", m.id}, {"from", m.from_link}, {"to", m.to_link}, {"lanes", m.lanes},
                    {"discharge_headway_s", m.discharge_headway}});
    xs.push_back({{"id", x.id}, {"lost_time_s", x.lost_time_per_phase}, {"movements", ms}, {"phases", x.phases}});
  }
  doc["network"] = {{"links", links}, {"intersections", xs}, {"sinks", s.network.sinks()}};
  json demand = json::array();
  for (const auto& src : s.network.sources()) {
    json d{{"link", src.link}, {"breakpoints_s", src.demand.breakpoints()}};
    std::vector<double> vph;
    for (double r : src.demand.rates()) vph.push_back(r * 3600.0);
    d["rates_vph"] = vph;
    if (src.demand.period()) d["period_s"] = *src.demand.period();
    demand.push_back(std::move(d));
  }
  doc["demand"] = demand;
  json plans = json::array();
  for (std::size_t x = 0; x < s.base_plans.size(); ++x)
    plans.push_back({{"intersection", x}, {"greens_s", s.base_plans[x].greens}, {"offset_s", s.base_plans[x].offset}});
  doc["signals"] = {{"cycle_s", s.cycle}, {"plans", plans}};
  json branching = json::array();
  for (const auto& x : s.network.intersections()) {
    std::vector<double> r;
    for (const auto& m : x.movements) r.push_back(s.true_ratios[static_cast<std::size_t>(m.id)]);
    branching.push_back({{"intersection", x.id}, {"ratios", r}});
  }
  doc["branching"] = branching;
  doc["control"] = control_to_json(s.control);
  return doc;
}

inline void save_scenario(const Scenario& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write scenario file '" + path + "'");
  out << scenario_to_json(s).dump(2) << '\n';
}

}  // namespace urbanflow
