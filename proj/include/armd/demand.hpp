#pragma once

#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "armd/network.hpp"
#include "armd/rng.hpp"

namespace armd {

enum class EvacueeStatus { Waiting, Driving, Queuing, Charging, Arrived, Stranded };

struct Evacuee {
  int id = 0;
  NodeId origin = 0;
  NodeId destination = -1;
  double departure_min = 0.0;
  bool is_ev = false;
  double battery_kwh = 0.0;
  double soc = 1.0;
  double consumption_kwh_per_km = 0.0;
  EvacueeStatus status = EvacueeStatus::Waiting;

  // Movement state, owned by the simulator.
  RouteCursor cursor;
  NodeId at_node = -1;      // node while not on a route
  int target_station = -1;  // station index while diverting to charge
  bool seek_failed = false;
  double charge_done_min = -1.0;
};

struct DepartureCurve {
  double alpha = 0.2;
  double beta_h = 15.0;
};

struct DemandSpec {
  // Indexed by Zone::A, B, C.
  std::array<int, 3> households{0, 0, 0};
  std::array<DepartureCurve, 3> curves{DepartureCurve{0.2, 15.0}, DepartureCurve{0.2, 21.0},
                                       DepartureCurve{0.2, 24.0}};
  double compliance = 0.65;
  double ev_share = 0.15;
  double battery_kwh = 60.0;
  double soc_min = 0.3;
  double soc_max = 0.8;
  double consumption_kwh_per_km = 0.2;
  double seek_threshold = 0.2;
  double charge_target = 0.8;

  void validate() const;
};

class NoSafeNode : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Cumulative departure share 1 / (1 + exp(-alpha (t - beta))), t in hours.
double departure_fraction(double t_h, double alpha, double beta_h);

// Inverse of the sigmoid restricted to [0, horizon]: u in [0,1] maps to the
// departure time whose truncated CDF equals u.
double sample_departure_h(double u, double alpha, double beta_h, double horizon_h);

// Nearest safe node by cost over `costs`. Throws NoSafeNode.
NodeId nearest_safe_node(const RoadNetwork& net, std::span<const double> costs, NodeId origin);

// Builds the evacuee population. Origins are drawn uniformly over each
// zone's nodes; evacuees whose origin cannot reach a safe node under
// `route_costs` (closed links are kUnreachable) start out stranded.
std::vector<Evacuee> generate_evacuees(const DemandSpec& spec, const RoadNetwork& net,
                                       std::span<const double> route_costs, double horizon_h,
                                       Rng& rng);

// Station choice when an EV drops below the seek threshold. `from` is where
// the EV next reaches a node, `range_km` what it can still drive after that.
// Returns the station index with minimal snapshot travel time among those
// whose snapshot path length fits in range, or nullopt.
std::optional<int> select_station(const RoadNetwork& net, std::span<const double> snapshot,
                                  NodeId from, double range_km,
                                  std::span<const char> station_available);

}  // namespace armd
