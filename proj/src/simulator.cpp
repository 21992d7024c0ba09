#include "armd/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace armd {

std::string phase_name(TruckPhase p) {
  switch (p) {
    case TruckPhase::Idle: return "idle";
    case TruckPhase::Traveling: return "traveling";
    case TruckPhase::Serving: return "serving";
  }
  return "idle";
}

bool Observation::contains(int station) const {
  return std::any_of(candidates.begin(), candidates.end(),
                     [station](const StationObs& c) { return c.station == station; });
}

namespace {
constexpr double kEps = 1e-9;
constexpr double kTravelCapMin = 480.0;
constexpr std::size_t kFlowWindowSteps = 3;
}  // namespace

Simulator::Simulator(const Scenario& scenario, std::uint64_t seed, SimOptions options)
    : scenario_(scenario),
      demand_(scenario.effective_demand()),
      options_(options),
      demand_rng_(Rng::stream(seed, "demand")),
      failure_rng_(Rng::stream(seed, "failures")),
      policy_rng_(Rng::stream(seed, "policy")) {
  scenario_.validate();
  const RoadNetwork& net = scenario_.network;
  const std::size_t E = net.edge_count();
  capacity_.resize(E);
  closed_.assign(E, 0);
  for (const Edge& e : net.edges()) capacity_[static_cast<std::size_t>(e.id)] = e.capacity_vph;
  for (const LinkFailure& lf : scenario_.toggles.link_failures) {
    const auto e = static_cast<std::size_t>(lf.edge);
    if (lf.closed)
      closed_[e] = 1;
    else
      capacity_[e] *= lf.capacity_factor;
  }
  costs_.resize(E);
  for (const Edge& e : net.edges()) {
    const auto i = static_cast<std::size_t>(e.id);
    costs_[i] = closed_[i] ? kUnreachable : e.free_flow_min;
  }
  field_ = TravelTimeField(E);
  entries_.assign(E, 0.0);

  for (std::size_t i = 0; i < net.station_count(); ++i) {
    StationState st;
    st.id = static_cast<int>(i);
    st.node = net.stations()[i];
    st.zone = net.node(st.node).zone;
    st.chargers = scenario_.station_chargers[i];
    if (scenario_.toggles.station_failure_prob > 0.0 &&
        failure_rng_.bernoulli(scenario_.toggles.station_failure_prob)) {
      st.available = false;
      st.chargers = 0;
    }
    stations_.push_back(std::move(st));
  }
  station_available_.resize(stations_.size());
  for (std::size_t i = 0; i < stations_.size(); ++i) station_available_[i] = stations_[i].available ? 1 : 0;

  for (int k = 0; k < scenario_.fleet.trucks; ++k) {
    TruckState t;
    t.id = k;
    t.node = scenario_.fleet.depots[static_cast<std::size_t>(k) % scenario_.fleet.depots.size()];
    t.capability_kwh = scenario_.fleet.capability_kwh;
    t.chargers = scenario_.fleet.chargers_per_truck;
    trucks_.push_back(std::move(t));
  }

  evacuees_ = generate_evacuees(demand_, net, costs_, scenario_.horizon_h, demand_rng_);
  departure_order_.resize(evacuees_.size());
  std::iota(departure_order_.begin(), departure_order_.end(), 0);
  std::stable_sort(departure_order_.begin(), departure_order_.end(), [this](int a, int b) {
    return evacuees_[static_cast<std::size_t>(a)].departure_min <
           evacuees_[static_cast<std::size_t>(b)].departure_min;
  });
  for (Evacuee& ev : evacuees_) {
    ev.at_node = ev.origin;
    if (ev.is_ev) ++ev_count_;
  }

  arrivals_.assign(static_cast<std::size_t>(scenario_.epoch_count()),
                   std::vector<double>(stations_.size(), 0.0));
  trace_.stations = static_cast<int>(stations_.size());
  trace_.step_h = scenario_.step_min / 60.0;
}

std::vector<EdgeId> Simulator::snapshot_route(NodeId from, NodeId to) const {
  return shortest_path(scenario_.network, costs_, from, to).edges;
}

std::vector<double> Simulator::station_travel_times(NodeId from) const {
  const auto paths = shortest_paths_from(scenario_.network, costs_, from);
  std::vector<double> out(stations_.size(), kUnreachable);
  for (std::size_t i = 0; i < stations_.size(); ++i) {
    if (!stations_[i].available) continue;
    out[i] = paths[static_cast<std::size_t>(stations_[i].node)].cost;
  }
  return out;
}

NodeId Simulator::truck_location(const TruckState& t) const {
  if (t.phase == TruckPhase::Traveling) return next_node(scenario_.network, t.cursor, t.node);
  return t.node;
}

void Simulator::step() {
  if (done()) return;
  const double t0 = now_min();
  const double dt = scenario_.step_min;
  release_departures(t0, dt);
  move_vehicles(dt);
  update_field();
  divert_low_battery();
  handle_arrivals(t0);
  serve_stations(t0, dt);
  fail_chargers(t0 / 60.0);
  move_trucks(t0, dt);
  record_step(t0);
  ++clock_;
}

void Simulator::release_departures(double t0, double dt) {
  std::vector<std::vector<Path>> cache(scenario_.network.node_count());
  while (next_departure_ < departure_order_.size()) {
    const int id = departure_order_[next_departure_];
    Evacuee& ev = evacuees_[static_cast<std::size_t>(id)];
    if (ev.departure_min >= t0 + dt) break;
    ++next_departure_;
    if (ev.status != EvacueeStatus::Waiting) continue;
    auto& paths = cache[static_cast<std::size_t>(ev.origin)];
    if (paths.empty()) paths = shortest_paths_from(scenario_.network, costs_, ev.origin);
    const Path& p = paths[static_cast<std::size_t>(ev.destination)];
    if (!is_reachable(p.cost)) {
      ev.status = EvacueeStatus::Stranded;
      continue;
    }
    if (p.edges.empty()) {
      ev.status = EvacueeStatus::Arrived;
      continue;
    }
    ev.status = EvacueeStatus::Driving;
    ev.cursor = RouteCursor{p.edges, 0, 0.0};
    active_.push_back(id);
  }
}

void Simulator::move_vehicles(double dt) {
  const double t0 = now_min();
  std::vector<int> still;
  still.reserve(active_.size());
  for (int id : active_) {
    Evacuee& ev = evacuees_[static_cast<std::size_t>(id)];
    // Vehicles released this step only drive from their departure time.
    const double budget = std::min(dt, t0 + dt - std::max(t0, ev.departure_min));
    double max_km = kUnreachable;
    if (ev.is_ev) max_km = ev.soc * ev.battery_kwh / ev.consumption_kwh_per_km;
    const std::size_t pos0 = ev.cursor.pos;
    const bool fresh0 = ev.cursor.progress == 0.0;
    const AdvanceResult r = advance_on_route(scenario_.network, ev.cursor, costs_, budget, max_km);
    // Edges whose start the vehicle passed during this step.
    const std::size_t first = fresh0 ? pos0 : pos0 + 1;
    const std::size_t last = ev.cursor.pos + (ev.cursor.mid_edge() ? 1 : 0);
    for (std::size_t j = first; j < last && j < ev.cursor.route.size(); ++j)
      entries_[static_cast<std::size_t>(ev.cursor.route[j])] += 1.0;
    if (ev.is_ev) {
      ev.soc = std::max(0.0, ev.soc - r.km * ev.consumption_kwh_per_km / ev.battery_kwh);
      if (!ev.cursor.done() && r.km >= max_km) {
        ev.soc = 0.0;
        ev.status = EvacueeStatus::Stranded;
        continue;
      }
    }
    if (ev.cursor.done()) {
      ev.at_node = scenario_.network.edge(ev.cursor.route.back()).head;
      if (ev.target_station >= 0) {
        arriving_.push_back(id);
      } else {
        ev.status = EvacueeStatus::Arrived;
      }
      continue;
    }
    still.push_back(id);
  }
  active_ = std::move(still);
}

void Simulator::update_field() {
  const RoadNetwork& net = scenario_.network;
  entry_history_.push_back(entries_);
  if (entry_history_.size() > kFlowWindowSteps) entry_history_.pop_front();
  std::fill(entries_.begin(), entries_.end(), 0.0);
  const double window_h = static_cast<double>(entry_history_.size()) * scenario_.step_min / 60.0;
  for (const Edge& e : net.edges()) {
    const auto i = static_cast<std::size_t>(e.id);
    if (closed_[i]) {
      costs_[i] = kUnreachable;
      continue;
    }
    // Hourly entry rate over the recent window.
    double entered = 0.0;
    for (const auto& h : entry_history_) entered += h[i];
    const double flow = entered / window_h;
    Edge eff = e;
    eff.capacity_vph = capacity_[i];
    costs_[i] = congested_travel_time(eff, flow);
  }
  field_.push_row(costs_);
}

void Simulator::divert_low_battery() {
  const RoadNetwork& net = scenario_.network;
  std::vector<int> still;
  still.reserve(active_.size());
  for (int id : active_) {
    Evacuee& ev = evacuees_[static_cast<std::size_t>(id)];
    if (!ev.is_ev || ev.target_station >= 0 || ev.seek_failed || ev.soc >= demand_.seek_threshold) {
      still.push_back(id);
      continue;
    }
    const NodeId from = next_node(net, ev.cursor, ev.at_node);
    const double range_km =
        ev.soc * ev.battery_kwh / ev.consumption_kwh_per_km - remaining_edge_km(net, ev.cursor);
    const auto station = select_station(net, costs_, from, range_km, station_available_);
    if (station) {
      std::vector<EdgeId> route;
      if (ev.cursor.mid_edge()) route.push_back(ev.cursor.current_edge());
      const auto leg = snapshot_route(from, stations_[static_cast<std::size_t>(*station)].node);
      route.insert(route.end(), leg.begin(), leg.end());
      const double progress = ev.cursor.mid_edge() ? ev.cursor.progress : 0.0;
      ev.cursor = RouteCursor{std::move(route), 0, progress};
      ev.target_station = *station;
      if (ev.cursor.done()) {
        ev.at_node = from;
        arriving_.push_back(id);
        continue;
      }
      still.push_back(id);
      continue;
    }
    // No station in range: carry on only if the destination itself is.
    double dest_km = kUnreachable;
    try {
      dest_km = path_length_km(net, snapshot_route(from, ev.destination));
    } catch (const Unreachable&) {
    }
    if (dest_km <= range_km) {
      ev.seek_failed = true;
      still.push_back(id);
    } else {
      ev.status = EvacueeStatus::Stranded;
    }
  }
  active_ = std::move(still);
}

void Simulator::handle_arrivals(double t0) {
  const auto m = static_cast<std::size_t>(std::min<int>(static_cast<int>(t0 / 60.0 / scenario_.epochs.epoch_h + kEps),
                                                        scenario_.epoch_count() - 1));
  for (int id : arriving_) {
    Evacuee& ev = evacuees_[static_cast<std::size_t>(id)];
    StationState& st = stations_[static_cast<std::size_t>(ev.target_station)];
    ev.status = EvacueeStatus::Queuing;
    ev.at_node = st.node;
    st.queue.push_back(id);
    ++st.arrivals;
    arrivals_[m][static_cast<std::size_t>(st.id)] += 1.0;
  }
  arriving_.clear();
}

void Simulator::serve_stations(double t0, double dt) {
  struct Unit {
    int truck;  // -1 for a fixed charger
  };
  for (StationState& st : stations_) {
    std::vector<Unit> units(static_cast<std::size_t>(st.chargers), Unit{-1});
    for (const TruckState& t : trucks_) {
      if (t.phase != TruckPhase::Serving || t.target != st.id || t.capability_kwh <= 0.0) continue;
      for (int c = 0; c < t.chargers; ++c) units.push_back(Unit{t.id});
    }
    // Chargers lost since last step push their vehicles back to the queue head.
    while (st.in_service.size() > units.size()) {
      const int id = st.in_service.back().evacuee;
      st.in_service.pop_back();
      evacuees_[static_cast<std::size_t>(id)].status = EvacueeStatus::Queuing;
      st.queue.push_front(id);
    }
    st.in_service.resize(units.size(), ServiceSlot{-1});
    for (std::size_t u = 0; u < units.size(); ++u) {
      ServiceSlot& slot = st.in_service[u];
      TruckState* truck = units[u].truck >= 0 ? &trucks_[static_cast<std::size_t>(units[u].truck)] : nullptr;
      const double power = truck ? scenario_.fleet.charger_kw : scenario_.charger_kw;
      double budget = dt;
      while (budget > kEps) {
        if (slot.evacuee < 0) {
          if (st.queue.empty()) break;
          slot.evacuee = st.queue.front();
          st.queue.pop_front();
          evacuees_[static_cast<std::size_t>(slot.evacuee)].status = EvacueeStatus::Charging;
        }
        Evacuee& ev = evacuees_[static_cast<std::size_t>(slot.evacuee)];
        const double need = (demand_.charge_target - ev.soc) * ev.battery_kwh;
        double can = power * budget / 60.0;
        if (truck) can = std::min(can, truck->capability_kwh);
        if (can <= 0.0) break;
        const bool finishes = can >= need - kEps;
        const double energy = finishes ? std::max(need, 0.0) : can;
        budget -= energy / power * 60.0;
        if (truck) {
          truck->capability_kwh = std::max(0.0, truck->capability_kwh - energy);
          truck->delivered_kwh += energy;
          st.delivered_mct_kwh += energy;
        } else {
          st.delivered_fixed_kwh += energy;
        }
        if (!finishes) {
          ev.soc += energy / ev.battery_kwh;
          break;
        }
        ev.soc = demand_.charge_target;
        ev.charge_done_min = t0 + (dt - std::max(budget, 0.0));
        ev.target_station = -1;
        ev.seek_failed = false;
        slot.evacuee = -1;
        Path p;
        bool reachable = true;
        try {
          p = shortest_path(scenario_.network, costs_, st.node, ev.destination);
        } catch (const Unreachable&) {
          reachable = false;
        }
        if (!reachable) {
          ev.status = EvacueeStatus::Stranded;
          ++st.departed_stranded;
        } else {
          ++st.served;
          if (p.edges.empty()) {
            ev.status = EvacueeStatus::Arrived;
          } else {
            ev.status = EvacueeStatus::Driving;
            ev.cursor = RouteCursor{std::move(p.edges), 0, 0.0};
            active_.push_back(ev.id);
          }
        }
        if (truck && truck->capability_kwh <= 0.0) break;
      }
    }
    st.in_service.erase(std::remove_if(st.in_service.begin(), st.in_service.end(),
                                       [](const ServiceSlot& s) { return s.evacuee < 0; }),
                        st.in_service.end());
  }
}

void Simulator::fail_chargers(double t_h) {
  for (StationState& st : stations_) {
    if (!st.available) continue;
    st.chargers = sample_charger_failures(scenario_.hazard, st.zone, st.chargers, t_h, failure_rng_);
  }
}

void Simulator::begin_service(TruckState& truck, int station) {
  StationState& st = stations_[static_cast<std::size_t>(station)];
  truck.phase = TruckPhase::Serving;
  truck.target = station;
  truck.node = st.node;
  truck.cursor = RouteCursor{};
  truck.service_remaining_min = scenario_.fleet.service_min;
  ++st.serving_mcts;
}

void Simulator::move_trucks(double t0, double dt) {
  const RoadNetwork& net = scenario_.network;
  for (TruckState& t : trucks_) {
    if (t.phase == TruckPhase::Serving) {
      t.service_remaining_min -= dt;
      if (t.service_remaining_min <= kEps) {
        --stations_[static_cast<std::size_t>(t.target)].serving_mcts;
        t.phase = TruckPhase::Idle;
        t.target = -1;
        t.service_remaining_min = 0.0;
      }
      continue;
    }
    if (t.phase != TruckPhase::Traveling) continue;
    const NodeId dest = stations_[static_cast<std::size_t>(t.target)].node;
    if (options_.routing == RoutingMode::Predictive &&
        t0 - t.last_replan_min >= scenario_.epochs.route_update_min - kEps) {
      const Forecaster& fc = options_.forecaster ? *options_.forecaster : persistence_;
      const Forecast f = fc.forecast(field_, costs_, t0, scenario_.step_min);
      rolling_update(net, f, t.cursor, t0, next_node(net, t.cursor, t.node), dest);
      t.last_replan_min = t0;
    }
    const AdvanceResult r = advance_on_route(net, t.cursor, costs_, dt);
    if (t.cursor.done()) {
      for (auto it = trips_.rbegin(); it != trips_.rend(); ++it)
        if (it->truck == t.id && it->arrival_min < 0.0) {
          it->arrival_min = t0 + r.used_min;
          break;
        }
      begin_service(t, t.target);
    } else {
      t.node = net.edge(t.cursor.current_edge()).tail;
    }
  }
}

void Simulator::record_step(double t0) {
  const double t_h = t0 / 60.0;
  trace_.time_min.push_back(t0);
  for (const StationState& st : stations_) {
    trace_.queue.push_back(static_cast<double>(st.queue.size()));
    trace_.risk.push_back(per_capita_risk(scenario_.hazard, st.zone, t_h));
    trace_.chargers.push_back(static_cast<double>(st.chargers));
    trace_.serving.push_back(static_cast<double>(st.serving_mcts));
  }
  if (!options_.record_trucks) return;
  for (const TruckState& t : trucks_) {
    TruckRow row;
    row.time_min = t0;
    row.truck = t.id;
    row.phase = t.phase;
    if (t.phase == TruckPhase::Traveling && t.cursor.mid_edge())
      row.location = "e" + std::to_string(t.cursor.current_edge());
    else
      row.location = "n" + std::to_string(t.phase == TruckPhase::Traveling ? truck_location(t) : t.node);
    row.capability_kwh = t.capability_kwh;
    truck_rows_.push_back(std::move(row));
  }
}

Observation Simulator::observe(int truck, int epoch) const {
  const TruckState& t = trucks_.at(static_cast<std::size_t>(truck));
  const std::vector<double> travel = station_travel_times(truck_location(t));
  std::vector<int> ids(stations_.size());
  std::iota(ids.begin(), ids.end(), 0);
  if (epoch % scenario_.epochs.aug_period != 0 &&
      ids.size() > static_cast<std::size_t>(scenario_.epochs.n_local)) {
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
      return travel[static_cast<std::size_t>(a)] < travel[static_cast<std::size_t>(b)];
    });
    ids.resize(static_cast<std::size_t>(scenario_.epochs.n_local));
    std::sort(ids.begin(), ids.end());
  }
  Observation o;
  o.truck = truck;
  o.epoch = epoch;
  o.hazard_h = global_hazard(scenario_.hazard, now_h());
  o.capability_kwh = t.capability_kwh;
  for (int i : ids) {
    const StationState& st = stations_[static_cast<std::size_t>(i)];
    StationObs so;
    so.station = i;
    so.queue = static_cast<double>(st.queue.size());
    so.risk = per_capita_risk(scenario_.hazard, st.zone, now_h());
    so.chargers = static_cast<double>(st.chargers);
    so.serving = static_cast<double>(st.serving_mcts);
    so.travel_min = travel[static_cast<std::size_t>(i)];
    o.candidates.push_back(so);
  }
  return o;
}

GlobalState Simulator::global_state() const {
  GlobalState g;
  g.hazard_h = global_hazard(scenario_.hazard, now_h());
  std::vector<double> mean_travel(stations_.size(), 0.0);
  for (const TruckState& t : trucks_) {
    GlobalState::Truck gt;
    gt.capability_kwh = t.capability_kwh;
    gt.phase = t.phase;
    gt.travel_min = station_travel_times(truck_location(t));
    for (std::size_t i = 0; i < stations_.size(); ++i)
      mean_travel[i] += std::min(gt.travel_min[i], kTravelCapMin) / static_cast<double>(trucks_.size());
    g.trucks.push_back(std::move(gt));
  }
  for (const StationState& st : stations_) {
    StationObs so;
    so.station = st.id;
    so.queue = static_cast<double>(st.queue.size());
    so.risk = per_capita_risk(scenario_.hazard, st.zone, now_h());
    so.chargers = static_cast<double>(st.chargers);
    so.serving = static_cast<double>(st.serving_mcts);
    so.travel_min = trucks_.empty() ? 0.0 : mean_travel[static_cast<std::size_t>(st.id)];
    g.stations.push_back(so);
  }
  return g;
}

std::vector<int> Simulator::idle_trucks() const {
  std::vector<int> out;
  for (const TruckState& t : trucks_)
    if (t.phase == TruckPhase::Idle) out.push_back(t.id);
  return out;
}

void Simulator::apply_actions(const JointAction& actions, int epoch) {
  const double t0 = now_min();
  for (const auto& [k, s] : actions) {
    if (k < 0 || static_cast<std::size_t>(k) >= trucks_.size())
      throw InvalidAction("action for unknown truck " + std::to_string(k));
    TruckState& t = trucks_[static_cast<std::size_t>(k)];
    if (t.phase != TruckPhase::Idle) continue;
    const Observation o = observe(k, epoch);
    auto it = std::find_if(o.candidates.begin(), o.candidates.end(),
                           [s = s](const StationObs& c) { return c.station == s; });
    if (it == o.candidates.end())
      throw InvalidAction("station " + std::to_string(s) + " is outside the candidate set of truck " +
                          std::to_string(k) + " at epoch " + std::to_string(epoch));
    if (!is_reachable(it->travel_min)) continue;
    dispatch(t, s, t0);
  }
}

void Simulator::dispatch(TruckState& truck, int station, double t0) {
  const RoadNetwork& net = scenario_.network;
  const NodeId dest = stations_[static_cast<std::size_t>(station)].node;
  trips_.push_back(TripRecord{truck.id, station, t0, -1.0});
  if (truck.node == dest) {
    trips_.back().arrival_min = t0;
    begin_service(truck, station);
    return;
  }
  std::vector<EdgeId> route;
  if (options_.routing == RoutingMode::Static) {
    route = snapshot_route(truck.node, dest);
  } else {
    const Forecaster& fc = options_.forecaster ? *options_.forecaster : persistence_;
    const Forecast f = fc.forecast(field_, costs_, t0, scenario_.step_min);
    try {
      route = plan_route(net, f, t0, truck.node, dest).edges;
    } catch (const Unreachable&) {
      route = snapshot_route(truck.node, dest);
    }
  }
  truck.phase = TruckPhase::Traveling;
  truck.target = station;
  truck.cursor = RouteCursor{std::move(route), 0, 0.0};
  truck.dispatch_min = t0;
  truck.last_replan_min = t0;
}

double Simulator::epoch_reward(int m) const {
  const std::size_t spe = static_cast<std::size_t>(scenario_.steps_per_epoch());
  const std::size_t begin = static_cast<std::size_t>(m) * spe;
  const std::size_t end = std::min(begin + spe, trace_.steps());
  double sum = 0.0;
  for (std::size_t s = begin; s < end; ++s)
    for (std::size_t i = 0; i < static_cast<std::size_t>(trace_.stations); ++i)
      sum += trace_.r(s, i) * trace_.q(s, i) * trace_.step_h;
  return -sum;
}

double Simulator::total_ev_gain_kwh() const {
  double total = 0.0;
  for (const StationState& st : stations_) total += st.delivered_fixed_kwh + st.delivered_mct_kwh;
  return total;
}

EpisodeResult run_episode(const Scenario& scenario, DispatchPolicy& policy, std::uint64_t seed,
                          SimOptions options) {
  Simulator sim(scenario, seed, options);
  policy.on_episode_start(sim);
  while (!sim.done()) {
    if (sim.at_decision_epoch()) {
      DecisionContext ctx{sim, sim.epoch(), {}, sim.policy_rng()};
      for (int k : sim.idle_trucks()) ctx.observations.push_back(sim.observe(k, ctx.epoch));
      const JointAction a = policy.decide(ctx);
      sim.apply_actions(a, ctx.epoch);
    }
    sim.step();
  }
  policy.on_episode_end(sim);

  EpisodeResult r;
  r.scenario = scenario.name;
  r.policy = policy.name();
  r.seed = seed;
  r.fleet = scenario.fleet.trucks;
  r.trace = sim.trace();
  r.truck_rows = sim.truck_rows();
  r.trips = sim.trips();
  r.arrivals = sim.arrivals();
  for (int m = 0; m < scenario.epoch_count(); ++m) r.epoch_rewards.push_back(sim.epoch_reward(m));
  r.n_evac = sim.ev_count();
  const auto& tr = sim.trace();
  for (std::size_t s = 0; s < tr.steps(); ++s)
    for (std::size_t i = 0; i < static_cast<std::size_t>(tr.stations); ++i)
      r.total_risk += tr.r(s, i) * tr.q(s, i) * tr.step_h;
  r.field = sim.field();
  r.stations = sim.stations();
  r.trucks = sim.trucks();
  r.ev_gain_kwh = sim.total_ev_gain_kwh();
  return r;
}

}  // namespace armd
