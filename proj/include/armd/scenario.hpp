#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "armd/demand.hpp"
#include "armd/hazard.hpp"
#include "armd/network.hpp"

namespace armd {

struct FleetSpec {
  int trucks = 4;
  int chargers_per_truck = 3;
  double capability_kwh = 3000.0;
  double service_min = 120.0;
  double charger_kw = 120.0;
  // Starting node per truck, cycled when shorter than the fleet.
  std::vector<NodeId> depots;
};

struct EpochSpec {
  double epoch_h = 2.5;
  int aug_period = 3;
  int n_local = 5;
  double route_update_min = 15.0;
};

struct LinkFailure {
  EdgeId edge = 0;
  bool closed = false;
  double capacity_factor = 1.0;
};

struct ScenarioToggles {
  std::optional<double> compliance;
  std::optional<double> alpha;
  double station_failure_prob = 0.0;
  std::vector<LinkFailure> link_failures;
};

struct Scenario {
  std::string name = "scenario";
  RoadNetwork network;
  std::vector<int> station_chargers;  // fixed chargers per station index
  HazardModel hazard;
  DemandSpec demand;
  FleetSpec fleet;
  EpochSpec epochs;
  double horizon_h = 48.0;
  double step_min = 5.0;
  double charger_kw = 120.0;
  ScenarioToggles toggles;
  std::vector<std::uint64_t> seeds{1};

  // Demand with the compliance / alpha overrides applied.
  DemandSpec effective_demand() const;
  int steps() const;
  int steps_per_epoch() const;
  int epoch_count() const;
  void validate() const;
};

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Scenario load_scenario(const std::string& path);
Scenario parse_scenario(const std::string& text);
std::string scenario_to_json(const Scenario& s);

// The bundled synthetic coastal network: 25 nodes, 60 directed links,
// 6 stations, zones A/B/C plus an inland safe area.
Scenario default_scenario();

}  // namespace armd
