#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "support.hpp"

using namespace urbanflow;
using namespace urbanflow::testing;

namespace {

std::string data(const std::string& rel) { return std::string(URBANFLOW_SOURCE_DIR) + "/" + rel; }

const char* kMinimal = R"({
  "network": {"links": [{"id": 0, "cell_count": 1, "cell": {"capacity_veh": 10, "max_flow_vph": 1800}}], "sinks": [0]},
  "demand": [{"link": 0, "rates_vph": [360]}]
})";

template <typename Fn>
ParseError parse_error_of(Fn&& fn) {
  try {
    fn();
  } catch (const ParseError& e) {
    return e;
  }
  ADD_FAILURE() << "no ParseError";
  return ParseError("", 0, "");
}

}  // namespace

TEST(LoadScenario, MinimalFileGetsDefaults) {
  const Scenario s = load_scenario(data("scenarios/minimal.json"));
  EXPECT_EQ(s.name, "minimal");
  EXPECT_EQ(s.dt, 1.0);
  EXPECT_EQ(s.steps, Scenario{}.steps);
  EXPECT_EQ(s.seed, Scenario{}.seed);
  EXPECT_EQ(s.network.link_count(), 1u);
  EXPECT_EQ(s.network.cell_count(), 3u);
  EXPECT_EQ(s.network.source_count(), 1u);
  EXPECT_TRUE(s.base_plans.empty());
  EXPECT_EQ(control_to_json(s.control), control_to_json(ControlParams{}));
  EXPECT_DOUBLE_EQ(s.network.sources()[0].demand.rate_at(0.0), 0.25);
}

TEST(LoadScenario, UnitConversion) {
  // 1800 veh/h at dt = 1 s is 0.5 veh per step; at dt = 2 s it is 1.
  const Scenario a = load_scenario(data("scenarios/minimal.json"));
  EXPECT_DOUBLE_EQ(a.network.cell(0).q_max, 0.5);
  auto doc = nlohmann::json::parse(kMinimal);
  doc["dt_s"] = 2.0;
  doc["control"] = {{"g_step_s", 4.0}};  // the default 5 s step is off the 2 s grid
  const Scenario b = scenario_from_json(doc);
  EXPECT_DOUBLE_EQ(b.network.cell(0).q_max, 1.0);
  EXPECT_DOUBLE_EQ(b.network.cell(0).delta, 1.0);  // default
}

TEST(LoadScenario, BranchingRowNotSummingToOneNamesIntersection) {
  try {
    load_scenario(data("tests/data/bad_branching.json"));
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.invariant(), "branching");
    EXPECT_NE(std::string(e.what()).find("intersection 0"), std::string::npos) << e.what();
  }
}

TEST(LoadScenario, SyntaxErrorCarriesLine) {
  const auto e = parse_error_of([] { parse_scenario("{\n  \"network\": {\n    \"links\": [,]\n  }\n}"); });
  EXPECT_EQ(e.line(), 3u);
}

TEST(LoadScenario, MissingFieldCarriesPath) {
  auto doc = nlohmann::json::parse(kMinimal);
  doc["network"]["links"][0].erase("cell_count");
  const auto e = parse_error_of([&] { scenario_from_json(doc); });
  EXPECT_EQ(e.field(), "network.links[0].cell_count");
}

TEST(LoadScenario, WrongTypeCarriesPath) {
  auto doc = nlohmann::json::parse(kMinimal);
  doc["demand"][0]["rates_vph"] = "fast";
  const auto e = parse_error_of([&] { scenario_from_json(doc); });
  EXPECT_EQ(e.field(), "demand[0].rates_vph");
}

TEST(LoadScenario, OffGridTimingIsAUnitError) {
  Scenario s = make_single_intersection();
  auto doc = scenario_to_json(s);
  doc["dt_s"] = 3.0;  // cycle 40 s is not a multiple
  EXPECT_THROW(scenario_from_json(doc), UnitError);
  doc["dt_s"] = 0.0;
  EXPECT_THROW(scenario_from_json(doc), UnitError);
}

TEST(LoadScenario, InfeasiblePlanIsRejected) {
  auto doc = scenario_to_json(make_single_intersection());
  doc["signals"]["plans"][0]["greens_s"] = std::vector<double>{20.0, 20.0};  // + lost 10 > cycle 40
  try {
    scenario_from_json(doc);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.invariant(), "signal-plan");
  }
}

TEST(LoadScenario, BadControlParameters) {
  auto doc = nlohmann::json::parse(kMinimal);
  doc["control"] = {{"predictor", "oracle"}};
  EXPECT_THROW(scenario_from_json(doc), ValidationError);
  doc["control"] = {{"thresholds", {{"density_low", 0.7}, {"density_high", 0.5}}}};
  try {
    scenario_from_json(doc);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.invariant(), "thresholds");
  }
}

TEST(LoadScenario, TooShortSimulation) {
  auto doc = scenario_to_json(make_single_intersection());
  doc["steps"] = 10;
  try {
    scenario_from_json(doc);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.invariant(), "simulation-length");
  }
}

TEST(LoadScenario, MissingFileIsIoError) {
  EXPECT_THROW(load_scenario(data("tests/data/does_not_exist.json")), IoError);
}

TEST(SaveScenario, RoundTripsEveryGenerator) {
  const auto dir = std::filesystem::temp_directory_path() / "urbanflow_scenario_test";
  std::filesystem::create_directories(dir);
  for (const Scenario& s : {make_grid_scenario(), make_single_intersection(), make_two_intersection_line()}) {
    const auto path = (dir / (s.name + ".json")).string();
    save_scenario(s, path);
    const Scenario back = load_scenario(path);
    EXPECT_EQ(scenario_to_json(back), scenario_to_json(s)) << s.name;
    EXPECT_EQ(back.true_ratios, s.true_ratios);
    EXPECT_EQ(back.base_plans, s.base_plans);
    EXPECT_EQ(back.network.cell_count(), s.network.cell_count());
  }
  std::filesystem::remove_all(dir);
}

TEST(SaveScenario, BundledFilesMatchGenerators) {
  EXPECT_EQ(scenario_to_json(load_scenario(data("scenarios/grid3x3.json"))), scenario_to_json(make_grid_scenario()));
  EXPECT_EQ(scenario_to_json(load_scenario(data("scenarios/two_intersection_line.json"))),
            scenario_to_json(make_two_intersection_line()));
}
