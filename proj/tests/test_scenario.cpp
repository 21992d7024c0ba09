#include <string>

#include "armd/scenario.hpp"
#include "doctest.h"

using namespace armd;

namespace {

std::string error_of(const std::string& file) {
  try {
    load_scenario(std::string(ARMD_FIXTURES) + "/bad/" + file);
  } catch (const ScenarioError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("bundled scenario file equals the built-in default") {
  auto s = load_scenario(std::string(ARMD_SCENARIOS) + "/default.json");
  CHECK(scenario_to_json(s) == scenario_to_json(default_scenario()));
  CHECK(s.network.node_count() == 25);
  CHECK(s.network.edge_count() == 60);
  CHECK(s.network.station_count() == 6);
  CHECK(s.station_chargers == std::vector<int>{2, 3, 2, 2, 2, 3});
  CHECK(s.seeds.size() == 10);
  CHECK(s.steps() == 576);
  CHECK(s.epoch_count() == 20);
}

TEST_CASE("JSON round trip") {
  auto s = default_scenario();
  s.fleet.trucks = 2;
  s.toggles.compliance = 0.4;
  s.toggles.link_failures.push_back({3, true, 1.0});
  s.seeds = {5, 9};
  const auto text = scenario_to_json(s);
  auto back = parse_scenario(text);
  CHECK(scenario_to_json(back) == text);
  CHECK(back.fleet.trucks == 2);
  CHECK(back.effective_demand().compliance == 0.4);
  CHECK(back.toggles.link_failures.size() == 1);
}

TEST_CASE("malformed scenarios name the problem") {
  CHECK(error_of("unknown_key.json").find("unknown key 'bogus'") != std::string::npos);
  CHECK(error_of("wrong_type.json").find("fleet.trucks") != std::string::npos);
  CHECK(error_of("missing_network.json").find("network") != std::string::npos);
  CHECK(error_of("bad_zone.json").find("zone") != std::string::npos);
  CHECK(error_of("negative_chargers.json").find("charger") != std::string::npos);
  CHECK(error_of("bad_seeds.json").find("seeds") != std::string::npos);
  CHECK(error_of("not_json.json").find("not valid JSON") != std::string::npos);
  CHECK(error_of("bad_depot.json").find("depots") != std::string::npos);
  CHECK(error_of("probability_above_one.json").find("station_failure_prob") != std::string::npos);
  CHECK(error_of("dangling_edge.json").find("missing node") != std::string::npos);
  CHECK_THROWS_AS(load_scenario("/nonexistent/scenario.json"), ScenarioError);
}

TEST_CASE("sparse file falls back to defaults") {
  auto s = parse_scenario(R"({"network": {"nodes": [{"id": 0, "x_km": 0, "y_km": 0, "zone": "A"},
                                                    {"id": 1, "x_km": 1, "y_km": 0, "zone": "safe"}],
                                          "edges": [{"id": 0, "tail": 0, "head": 1, "length_km": 1,
                                                     "free_flow_min": 2, "capacity_vph": 100}],
                                          "stations": [{"node": 0, "chargers": 1}]},
                             "fleet": {"depots": [1]}})");
  CHECK(s.fleet.trucks == FleetSpec{}.trucks);
  CHECK(s.hazard.tau_h == 12.0);
  CHECK(s.station_chargers == std::vector<int>{1});
}
