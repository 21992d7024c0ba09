#include "armd/scenario.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace armd {

using nlohmann::json;

DemandSpec Scenario::effective_demand() const {
  DemandSpec d = demand;
  if (toggles.compliance) d.compliance = *toggles.compliance;
  if (toggles.alpha)
    for (auto& c : d.curves) c.alpha = *toggles.alpha;
  return d;
}

int Scenario::steps() const { return static_cast<int>(std::lround(horizon_h * 60.0 / step_min)); }

int Scenario::steps_per_epoch() const {
  return static_cast<int>(std::lround(epochs.epoch_h * 60.0 / step_min));
}

int Scenario::epoch_count() const {
  const int spe = steps_per_epoch();
  return (steps() + spe - 1) / spe;
}

void Scenario::validate() const {
  auto fail = [](const std::string& m) { throw ScenarioError(m); };
  if (!(horizon_h > 0.0)) fail("simulation.horizon_h must be > 0");
  if (!(step_min > 0.0)) fail("simulation.step_min must be > 0");
  if (std::abs(horizon_h * 60.0 / step_min - steps()) > 1e-9)
    fail("simulation.horizon_h must be a whole number of steps");
  if (!(epochs.epoch_h > 0.0)) fail("epochs.epoch_h must be > 0");
  if (std::abs(epochs.epoch_h * 60.0 / step_min - steps_per_epoch()) > 1e-9 || steps_per_epoch() < 1)
    fail("epochs.epoch_h must be a whole number of steps");
  if (epochs.aug_period < 1) fail("epochs.aug_period must be >= 1");
  if (epochs.n_local < 1) fail("epochs.n_local must be >= 1");
  if (!(epochs.route_update_min > 0.0)) fail("epochs.route_update_min must be > 0");
  if (!(charger_kw > 0.0)) fail("simulation.charger_kw must be > 0");
  if (station_chargers.size() != network.station_count())
    fail("one charger count is required per station");
  for (int c : station_chargers)
    if (c < 0) fail("station charger counts must be >= 0");
  if (fleet.trucks < 0) fail("fleet.trucks must be >= 0");
  if (fleet.chargers_per_truck < 0) fail("fleet.chargers_per_truck must be >= 0");
  if (!(fleet.capability_kwh >= 0.0)) fail("fleet.capability_kwh must be >= 0");
  if (!(fleet.service_min > 0.0)) fail("fleet.service_min must be > 0");
  if (!(fleet.charger_kw > 0.0)) fail("fleet.charger_kw must be > 0");
  if (fleet.trucks > 0 && fleet.depots.empty()) fail("fleet.depots must list at least one node");
  for (NodeId d : fleet.depots)
    if (d < 0 || static_cast<std::size_t>(d) >= network.node_count())
      fail("fleet.depots references a missing node");
  if (!(toggles.station_failure_prob >= 0.0 && toggles.station_failure_prob <= 1.0))
    fail("toggles.station_failure_prob must be in [0,1]");
  if (toggles.compliance && !(*toggles.compliance >= 0.0 && *toggles.compliance <= 1.0))
    fail("toggles.compliance must be in [0,1]");
  if (toggles.alpha && !(*toggles.alpha > 0.0)) fail("toggles.alpha must be > 0");
  for (const auto& lf : toggles.link_failures) {
    if (lf.edge < 0 || static_cast<std::size_t>(lf.edge) >= network.edge_count())
      fail("toggles.link_failures references a missing edge");
    if (!lf.closed && !(lf.capacity_factor > 0.0 && lf.capacity_factor <= 1.0))
      fail("toggles.link_failures capacity_factor must be in (0,1]");
  }
  if (seeds.empty()) fail("seeds must not be empty");
  try {
    hazard.validate();
    demand.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
}

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ScenarioError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ScenarioError(where + ": unknown key '" + it.key() + "'");
}

template <typename T>
T get(const json& j, const std::string& where, const char* key) {
  if (!j.contains(key)) throw ScenarioError(where + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ScenarioError(where + "." + key + ": wrong type");
  }
}

template <typename T>
void get_opt(const json& j, const std::string& where, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ScenarioError(where + "." + key + ": wrong type");
  }
}

std::array<double, 3> zone_triple(const json& j, const std::string& where, std::array<double, 3> def) {
  check_keys(j, where, {"A", "B", "C"});
  get_opt(j, where, "A", def[0]);
  get_opt(j, where, "B", def[1]);
  get_opt(j, where, "C", def[2]);
  return def;
}

RoadNetwork parse_network(const json& j, std::vector<int>& chargers) {
  const std::string w = "network";
  check_keys(j, w, {"nodes", "edges", "stations"});
  std::vector<Node> nodes;
  const json& jn = j.at("nodes");
  if (!jn.is_array()) throw ScenarioError("network.nodes: expected an array");
  for (std::size_t i = 0; i < jn.size(); ++i) {
    const std::string wi = "network.nodes[" + std::to_string(i) + "]";
    check_keys(jn[i], wi, {"id", "x_km", "y_km", "zone"});
    Node nd;
    nd.id = get<int>(jn[i], wi, "id");
    nd.x_km = get<double>(jn[i], wi, "x_km");
    nd.y_km = get<double>(jn[i], wi, "y_km");
    try {
      nd.zone = parse_zone(get<std::string>(jn[i], wi, "zone"));
    } catch (const NetworkError& e) {
      throw ScenarioError(wi + ".zone: " + e.what());
    }
    nodes.push_back(nd);
  }
  std::vector<Edge> edges;
  const json& je = j.at("edges");
  if (!je.is_array()) throw ScenarioError("network.edges: expected an array");
  for (std::size_t i = 0; i < je.size(); ++i) {
    const std::string wi = "network.edges[" + std::to_string(i) + "]";
    check_keys(je[i], wi, {"id", "tail", "head", "length_km", "free_flow_min", "capacity_vph"});
    Edge e;
    e.id = get<int>(je[i], wi, "id");
    e.tail = get<int>(je[i], wi, "tail");
    e.head = get<int>(je[i], wi, "head");
    e.length_km = get<double>(je[i], wi, "length_km");
    e.free_flow_min = get<double>(je[i], wi, "free_flow_min");
    e.capacity_vph = get<double>(je[i], wi, "capacity_vph");
    edges.push_back(e);
  }
  std::vector<NodeId> stations;
  const json& js = j.at("stations");
  if (!js.is_array()) throw ScenarioError("network.stations: expected an array");
  chargers.clear();
  for (std::size_t i = 0; i < js.size(); ++i) {
    const std::string wi = "network.stations[" + std::to_string(i) + "]";
    check_keys(js[i], wi, {"node", "chargers"});
    stations.push_back(get<int>(js[i], wi, "node"));
    chargers.push_back(get<int>(js[i], wi, "chargers"));
  }
  try {
    return RoadNetwork(std::move(nodes), std::move(edges), std::move(stations));
  } catch (const NetworkError& e) {
    throw ScenarioError(std::string("network: ") + e.what());
  }
}

}  // namespace

Scenario parse_scenario(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError(std::string("scenario is not valid JSON: ") + e.what());
  }
  check_keys(j, "scenario",
             {"name", "network", "hazard", "demand", "fleet", "epochs", "simulation", "toggles", "seeds"});
  Scenario s;
  get_opt(j, "scenario", "name", s.name);
  if (!j.contains("network")) throw ScenarioError("scenario: missing key 'network'");
  s.network = parse_network(j.at("network"), s.station_chargers);

  if (j.contains("hazard")) {
    const json& h = j.at("hazard");
    check_keys(h, "hazard", {"landfall_h", "offsets_h", "offset_safe_h", "tau_h", "kappa"});
    get_opt(h, "hazard", "landfall_h", s.hazard.landfall_h);
    if (h.contains("offsets_h")) {
      auto o = zone_triple(h.at("offsets_h"), "hazard.offsets_h",
                           {s.hazard.offset_a_h, s.hazard.offset_b_h, s.hazard.offset_c_h});
      s.hazard.offset_a_h = o[0];
      s.hazard.offset_b_h = o[1];
      s.hazard.offset_c_h = o[2];
    }
    get_opt(h, "hazard", "offset_safe_h", s.hazard.offset_safe_h);
    get_opt(h, "hazard", "tau_h", s.hazard.tau_h);
    get_opt(h, "hazard", "kappa", s.hazard.kappa);
  }

  if (j.contains("demand")) {
    const json& d = j.at("demand");
    check_keys(d, "demand",
               {"households", "compliance", "ev_share", "alpha", "beta_h", "battery_kwh", "soc_min",
                "soc_max", "consumption_kwh_per_km", "seek_threshold", "charge_target"});
    if (d.contains("households")) {
      auto hh = zone_triple(d.at("households"), "demand.households",
                            {double(s.demand.households[0]), double(s.demand.households[1]),
                             double(s.demand.households[2])});
      for (int z = 0; z < 3; ++z) {
        if (hh[z] != std::floor(hh[z])) throw ScenarioError("demand.households: counts must be integers");
        s.demand.households[z] = static_cast<int>(hh[z]);
      }
    }
    if (d.contains("alpha")) {
      auto a = zone_triple(d.at("alpha"), "demand.alpha",
                           {s.demand.curves[0].alpha, s.demand.curves[1].alpha, s.demand.curves[2].alpha});
      for (int z = 0; z < 3; ++z) s.demand.curves[z].alpha = a[z];
    }
    if (d.contains("beta_h")) {
      auto b = zone_triple(d.at("beta_h"), "demand.beta_h",
                           {s.demand.curves[0].beta_h, s.demand.curves[1].beta_h, s.demand.curves[2].beta_h});
      for (int z = 0; z < 3; ++z) s.demand.curves[z].beta_h = b[z];
    }
    get_opt(d, "demand", "compliance", s.demand.compliance);
    get_opt(d, "demand", "ev_share", s.demand.ev_share);
    get_opt(d, "demand", "battery_kwh", s.demand.battery_kwh);
    get_opt(d, "demand", "soc_min", s.demand.soc_min);
    get_opt(d, "demand", "soc_max", s.demand.soc_max);
    get_opt(d, "demand", "consumption_kwh_per_km", s.demand.consumption_kwh_per_km);
    get_opt(d, "demand", "seek_threshold", s.demand.seek_threshold);
    get_opt(d, "demand", "charge_target", s.demand.charge_target);
  }

  if (j.contains("fleet")) {
    const json& f = j.at("fleet");
    check_keys(f, "fleet", {"trucks", "chargers_per_truck", "capability_kwh", "service_min", "charger_kw", "depots"});
    get_opt(f, "fleet", "trucks", s.fleet.trucks);
    get_opt(f, "fleet", "chargers_per_truck", s.fleet.chargers_per_truck);
    get_opt(f, "fleet", "capability_kwh", s.fleet.capability_kwh);
    get_opt(f, "fleet", "service_min", s.fleet.service_min);
    get_opt(f, "fleet", "charger_kw", s.fleet.charger_kw);
    get_opt(f, "fleet", "depots", s.fleet.depots);
  }

  if (j.contains("epochs")) {
    const json& e = j.at("epochs");
    check_keys(e, "epochs", {"epoch_h", "aug_period", "n_local", "route_update_min"});
    get_opt(e, "epochs", "epoch_h", s.epochs.epoch_h);
    get_opt(e, "epochs", "aug_period", s.epochs.aug_period);
    get_opt(e, "epochs", "n_local", s.epochs.n_local);
    get_opt(e, "epochs", "route_update_min", s.epochs.route_update_min);
  }

  if (j.contains("simulation")) {
    const json& m = j.at("simulation");
    check_keys(m, "simulation", {"horizon_h", "step_min", "charger_kw"});
    get_opt(m, "simulation", "horizon_h", s.horizon_h);
    get_opt(m, "simulation", "step_min", s.step_min);
    get_opt(m, "simulation", "charger_kw", s.charger_kw);
  }
  s.hazard.step_min = s.step_min;

  if (j.contains("toggles")) {
    const json& t = j.at("toggles");
    check_keys(t, "toggles", {"compliance", "alpha", "station_failure_prob", "link_failures"});
    if (t.contains("compliance")) s.toggles.compliance = get<double>(t, "toggles", "compliance");
    if (t.contains("alpha")) s.toggles.alpha = get<double>(t, "toggles", "alpha");
    get_opt(t, "toggles", "station_failure_prob", s.toggles.station_failure_prob);
    if (t.contains("link_failures")) {
      const json& lfs = t.at("link_failures");
      if (!lfs.is_array()) throw ScenarioError("toggles.link_failures: expected an array");
      for (std::size_t i = 0; i < lfs.size(); ++i) {
        const std::string wi = "toggles.link_failures[" + std::to_string(i) + "]";
        check_keys(lfs[i], wi, {"edge", "closed", "capacity_factor"});
        LinkFailure lf;
        lf.edge = get<int>(lfs[i], wi, "edge");
        get_opt(lfs[i], wi, "closed", lf.closed);
        get_opt(lfs[i], wi, "capacity_factor", lf.capacity_factor);
        s.toggles.link_failures.push_back(lf);
      }
    }
  }

  if (j.contains("seeds")) {
    const json& sd = j.at("seeds");
    if (!sd.is_array()) throw ScenarioError("seeds: expected an array");
    s.seeds.clear();
    for (std::size_t i = 0; i < sd.size(); ++i) {
      if (!sd[i].is_number_unsigned())
        throw ScenarioError("seeds[" + std::to_string(i) + "]: expected a non-negative integer");
      s.seeds.push_back(sd[i].get<std::uint64_t>());
    }
  }
  s.validate();
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError("cannot open scenario file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

std::string scenario_to_json(const Scenario& s) {
  json j;
  j["name"] = s.name;
  json nodes = json::array();
  for (const Node& n : s.network.nodes())
    nodes.push_back({{"id", n.id}, {"x_km", n.x_km}, {"y_km", n.y_km}, {"zone", zone_name(n.zone)}});
  json edges = json::array();
  for (const Edge& e : s.network.edges())
    edges.push_back({{"id", e.id},
                     {"tail", e.tail},
                     {"head", e.head},
                     {"length_km", e.length_km},
                     {"free_flow_min", e.free_flow_min},
                     {"capacity_vph", e.capacity_vph}});
  json stations = json::array();
  for (std::size_t i = 0; i < s.network.station_count(); ++i)
    stations.push_back({{"node", s.network.stations()[i]}, {"chargers", s.station_chargers[i]}});
  j["network"] = {{"nodes", nodes}, {"edges", edges}, {"stations", stations}};
  j["hazard"] = {{"landfall_h", s.hazard.landfall_h},
                 {"offsets_h", {{"A", s.hazard.offset_a_h}, {"B", s.hazard.offset_b_h}, {"C", s.hazard.offset_c_h}}},
                 {"offset_safe_h", s.hazard.offset_safe_h},
                 {"tau_h", s.hazard.tau_h},
                 {"kappa", s.hazard.kappa}};
  const auto& d = s.demand;
  j["demand"] = {{"households", {{"A", d.households[0]}, {"B", d.households[1]}, {"C", d.households[2]}}},
                 {"alpha", {{"A", d.curves[0].alpha}, {"B", d.curves[1].alpha}, {"C", d.curves[2].alpha}}},
                 {"beta_h", {{"A", d.curves[0].beta_h}, {"B", d.curves[1].beta_h}, {"C", d.curves[2].beta_h}}},
                 {"compliance", d.compliance},
                 {"ev_share", d.ev_share},
                 {"battery_kwh", d.battery_kwh},
                 {"soc_min", d.soc_min},
                 {"soc_max", d.soc_max},
                 {"consumption_kwh_per_km", d.consumption_kwh_per_km},
                 {"seek_threshold", d.seek_threshold},
                 {"charge_target", d.charge_target}};
  j["fleet"] = {{"trucks", s.fleet.trucks},
                {"chargers_per_truck", s.fleet.chargers_per_truck},
                {"capability_kwh", s.fleet.capability_kwh},
                {"service_min", s.fleet.service_min},
                {"charger_kw", s.fleet.charger_kw},
                {"depots", s.fleet.depots}};
  j["epochs"] = {{"epoch_h", s.epochs.epoch_h},
                 {"aug_period", s.epochs.aug_period},
                 {"n_local", s.epochs.n_local},
                 {"route_update_min", s.epochs.route_update_min}};
  j["simulation"] = {{"horizon_h", s.horizon_h}, {"step_min", s.step_min}, {"charger_kw", s.charger_kw}};
  json t = json::object();
  if (s.toggles.compliance) t["compliance"] = *s.toggles.compliance;
  if (s.toggles.alpha) t["alpha"] = *s.toggles.alpha;
  t["station_failure_prob"] = s.toggles.station_failure_prob;
  json lfs = json::array();
  for (const auto& lf : s.toggles.link_failures)
    lfs.push_back({{"edge", lf.edge}, {"closed", lf.closed}, {"capacity_factor", lf.capacity_factor}});
  t["link_failures"] = lfs;
  j["toggles"] = t;
  j["seeds"] = s.seeds;
  return j.dump(2) + "\n";
}

Scenario default_scenario() {
  // 5 x 5 grid of nodes, 40 km column spacing, 25 km row spacing. Column 0 is
  // the coastal zone A, columns 1 and 2 zones B and C, columns 3-4 safe.
  constexpr int kCols = 5;
  constexpr int kRows = 5;
  std::vector<Node> nodes;
  const Zone col_zone[kCols] = {Zone::A, Zone::B, Zone::C, Zone::Safe, Zone::Safe};
  for (int r = 0; r < kRows; ++r)
    for (int c = 0; c < kCols; ++c)
      nodes.push_back(Node{r * kCols + c, 40.0 * c, 25.0 * r, col_zone[c]});
  auto id = [](int r, int c) { return r * kCols + c; };

  std::vector<Edge> edges;
  auto road = [&](int a, int b, double km, double ff_min, double cap) {
    edges.push_back(Edge{static_cast<EdgeId>(edges.size()), a, b, km, ff_min, cap});
    edges.push_back(Edge{static_cast<EdgeId>(edges.size()), b, a, km, ff_min, cap});
  };
  // East-west corridors; the middle row is the interstate.
  for (int r = 0; r < kRows; ++r)
    for (int c = 0; c + 1 < kCols; ++c) {
      if (r == 2)
        road(id(r, c), id(r, c + 1), 40.0, 26.0, 350.0);
      else
        road(id(r, c), id(r, c + 1), 40.0, 32.0, 200.0);
    }
  // North-south connectors.
  for (int r = 0; r + 1 < kRows; ++r) {
    road(id(r, 1), id(r + 1, 1), 25.0, 22.0, 150.0);
    road(id(r, 3), id(r + 1, 3), 25.0, 22.0, 150.0);
  }
  road(id(1, 2), id(2, 2), 25.0, 22.0, 150.0);
  road(id(2, 2), id(3, 2), 25.0, 22.0, 150.0);

  std::vector<NodeId> stations{id(0, 1), id(2, 1), id(4, 1), id(1, 2), id(3, 2), id(2, 3)};
  Scenario s;
  s.name = "default";
  s.network = RoadNetwork(std::move(nodes), std::move(edges), std::move(stations));
  s.station_chargers = {2, 3, 2, 2, 2, 3};
  s.demand.households = {15000, 12000, 9000};
  s.fleet.trucks = 4;
  s.fleet.depots = {id(2, 4)};
  s.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  s.hazard.step_min = s.step_min;
  s.validate();
  return s;
}

}  // namespace armd
