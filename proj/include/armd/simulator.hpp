#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "armd/demand.hpp"
#include "armd/hazard.hpp"
#include "armd/network.hpp"
#include "armd/rng.hpp"
#include "armd/router.hpp"
#include "armd/scenario.hpp"

namespace armd {

struct ServiceSlot {
  int evacuee = -1;
};

struct StationState {
  int id = 0;
  NodeId node = 0;
  Zone zone = Zone::Safe;
  bool available = true;  // false when the whole station failed at episode start
  std::deque<int> queue;  // waiting evacuee ids, FIFO
  std::vector<ServiceSlot> in_service;
  int chargers = 0;        // operational fixed chargers m_i(t)
  int serving_mcts = 0;    // trucks in serving phase c_i(t)
  // Flow accounting.
  long arrivals = 0;
  long served = 0;
  long departed_stranded = 0;
  double delivered_fixed_kwh = 0.0;
  double delivered_mct_kwh = 0.0;
};

enum class TruckPhase { Idle, Traveling, Serving };

std::string phase_name(TruckPhase p);

struct TruckState {
  int id = 0;
  NodeId node = 0;  // current node, or tail of the current edge when traveling
  RouteCursor cursor;
  TruckPhase phase = TruckPhase::Idle;
  int target = -1;  // station index
  double service_remaining_min = 0.0;
  double capability_kwh = 0.0;
  int chargers = 0;
  double delivered_kwh = 0.0;
  double dispatch_min = 0.0;
  double last_replan_min = 0.0;
};

struct TripRecord {
  int truck = 0;
  int station = 0;
  double dispatch_min = 0.0;
  double arrival_min = -1.0;  // -1 while en route
};

struct StationObs {
  int station = 0;
  double queue = 0.0;
  double risk = 0.0;
  double chargers = 0.0;
  double serving = 0.0;
  double travel_min = 0.0;  // kUnreachable when the truck cannot get there
};

struct Observation {
  int truck = 0;
  int epoch = 0;
  double hazard_h = 0.0;
  double capability_kwh = 0.0;
  std::vector<StationObs> candidates;  // ascending station id

  bool contains(int station) const;
};

// Full Dec-POMDP state at a decision epoch, as seen by the centralized critic.
struct GlobalState {
  double hazard_h = 0.0;
  std::vector<StationObs> stations;  // travel_min = mean over trucks (capped)
  struct Truck {
    double capability_kwh = 0.0;
    TruckPhase phase = TruckPhase::Idle;
    std::vector<double> travel_min;  // per station
  };
  std::vector<Truck> trucks;
};

class InvalidAction : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using JointAction = std::vector<std::pair<int, int>>;  // (truck, station)

struct SimOptions {
  RoutingMode routing = RoutingMode::Predictive;
  const Forecaster* forecaster = nullptr;  // persistence when null
  bool record_trucks = true;
};

// Per-step, per-station record of the episode.
struct EpisodeTrace {
  int stations = 0;
  double step_h = 0.0;
  std::vector<double> time_min;
  std::vector<double> queue;     // step-major, stations wide
  std::vector<double> risk;
  std::vector<double> chargers;
  std::vector<double> serving;

  std::size_t steps() const { return time_min.size(); }
  double q(std::size_t s, std::size_t i) const { return queue[s * stations + i]; }
  double r(std::size_t s, std::size_t i) const { return risk[s * stations + i]; }
};

struct TruckRow {
  double time_min = 0.0;
  int truck = 0;
  TruckPhase phase = TruckPhase::Idle;
  std::string location;
  double capability_kwh = 0.0;
};

// The discrete-time evacuation world.
class Simulator {
 public:
  Simulator(const Scenario& scenario, std::uint64_t seed, SimOptions options = {});

  const Scenario& scenario() const { return scenario_; }
  const RoadNetwork& network() const { return scenario_.network; }

  int clock() const { return clock_; }
  double now_min() const { return clock_ * scenario_.step_min; }
  double now_h() const { return now_min() / 60.0; }
  bool done() const { return clock_ >= scenario_.steps(); }
  bool at_decision_epoch() const { return clock_ % scenario_.steps_per_epoch() == 0; }
  int epoch() const { return clock_ / scenario_.steps_per_epoch(); }

  // Advance one simulation step.
  void step();

  Observation observe(int truck, int epoch) const;
  GlobalState global_state() const;
  std::vector<int> idle_trucks() const;
  // Trucks not idle keep their commitments; their actions are ignored.
  void apply_actions(const JointAction& actions, int epoch);

  // Negative cumulative risk over the steps of epoch m.
  double epoch_reward(int m) const;

  const std::vector<StationState>& stations() const { return stations_; }
  const std::vector<TruckState>& trucks() const { return trucks_; }
  const std::vector<Evacuee>& evacuees() const { return evacuees_; }
  const EpisodeTrace& trace() const { return trace_; }
  const std::vector<TruckRow>& truck_rows() const { return truck_rows_; }
  const std::vector<TripRecord>& trips() const { return trips_; }
  const TravelTimeField& field() const { return field_; }
  std::span<const double> current_costs() const { return costs_; }
  // EV arrivals per epoch (outer) per station (inner).
  const std::vector<std::vector<double>>& arrivals() const { return arrivals_; }
  long ev_count() const { return ev_count_; }
  double total_ev_gain_kwh() const;

  // Snapshot travel time from a node to each station (kUnreachable for
  // unavailable stations).
  std::vector<double> station_travel_times(NodeId from) const;

  Rng& policy_rng() { return policy_rng_; }

 private:
  void release_departures(double t0, double dt);
  void move_vehicles(double dt);
  void update_field();
  void divert_low_battery();
  void handle_arrivals(double t0);
  void serve_stations(double t0, double dt);
  void fail_chargers(double t_h);
  void move_trucks(double t0, double dt);
  void record_step(double t0);
  void dispatch(TruckState& truck, int station, double t0);
  void begin_service(TruckState& truck, int station);
  NodeId truck_location(const TruckState& t) const;
  std::vector<EdgeId> snapshot_route(NodeId from, NodeId to) const;

  Scenario scenario_;
  DemandSpec demand_;
  SimOptions options_;
  PersistenceForecaster persistence_;
  Rng demand_rng_;
  Rng failure_rng_;
  Rng policy_rng_;
  int clock_ = 0;

  std::vector<double> capacity_;  // after link toggles
  std::vector<char> closed_;
  std::vector<double> entries_;  // edge entries this step
  std::deque<std::vector<double>> entry_history_;
  std::vector<double> costs_;     // current snapshot
  TravelTimeField field_;

  std::vector<StationState> stations_;
  std::vector<char> station_available_;
  std::vector<TruckState> trucks_;
  std::vector<Evacuee> evacuees_;
  std::vector<int> departure_order_;
  std::size_t next_departure_ = 0;
  std::vector<int> active_;  // evacuees currently driving
  std::vector<int> arriving_;  // evacuees reaching their target station this step
  long ev_count_ = 0;

  EpisodeTrace trace_;
  std::vector<TruckRow> truck_rows_;
  std::vector<TripRecord> trips_;
  std::vector<std::vector<double>> arrivals_;
};

// Decision-epoch context handed to dispatch policies.
struct DecisionContext {
  const Simulator& sim;
  int epoch = 0;
  std::vector<Observation> observations;  // one per idle truck
  Rng& rng;
};

class DispatchPolicy {
 public:
  virtual ~DispatchPolicy() = default;
  virtual std::string name() const = 0;
  // Called at every decision epoch, including those with no idle truck.
  virtual JointAction decide(DecisionContext& ctx) = 0;
  virtual void on_episode_start(const Simulator&) {}
  virtual void on_episode_end(const Simulator&) {}
};

struct EpisodeResult {
  std::string scenario;
  std::string policy;
  std::uint64_t seed = 0;
  int fleet = 0;
  EpisodeTrace trace;
  std::vector<TruckRow> truck_rows;
  std::vector<TripRecord> trips;
  std::vector<std::vector<double>> arrivals;
  std::vector<double> epoch_rewards;
  long n_evac = 0;
  double total_risk = 0.0;
  TravelTimeField field;
  std::vector<StationState> stations;
  std::vector<TruckState> trucks;
  double ev_gain_kwh = 0.0;
};

EpisodeResult run_episode(const Scenario& scenario, DispatchPolicy& policy, std::uint64_t seed,
                          SimOptions options = {});

}  // namespace armd
