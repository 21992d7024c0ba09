#include "armd/demand.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace armd {

void DemandSpec::validate() const {
  auto rate = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(std::string(name) + " must be in [0,1]");
  };
  rate(compliance, "demand.compliance");
  rate(ev_share, "demand.ev_share");
  rate(soc_min, "demand.soc_min");
  rate(soc_max, "demand.soc_max");
  rate(seek_threshold, "demand.seek_threshold");
  rate(charge_target, "demand.charge_target");
  if (soc_min > soc_max) throw std::invalid_argument("demand.soc_min exceeds demand.soc_max");
  if (seek_threshold >= charge_target)
    throw std::invalid_argument("demand.seek_threshold must be below demand.charge_target");
  for (int h : households)
    if (h < 0) throw std::invalid_argument("demand.households must be >= 0");
  for (const auto& c : curves)
    if (!(c.alpha > 0.0)) throw std::invalid_argument("demand sigmoid alpha must be > 0");
  if (!(battery_kwh > 0.0)) throw std::invalid_argument("demand.battery_kwh must be > 0");
  if (!(consumption_kwh_per_km > 0.0))
    throw std::invalid_argument("demand.consumption_kwh_per_km must be > 0");
}

double departure_fraction(double t_h, double alpha, double beta_h) {
  return 1.0 / (1.0 + std::exp(-alpha * (t_h - beta_h)));
}

double sample_departure_h(double u, double alpha, double beta_h, double horizon_h) {
  const double f0 = departure_fraction(0.0, alpha, beta_h);
  const double f1 = departure_fraction(horizon_h, alpha, beta_h);
  const double v = f0 + u * (f1 - f0);
  const double t = beta_h + std::log(v / (1.0 - v)) / alpha;
  return std::clamp(t, 0.0, horizon_h);
}

NodeId nearest_safe_node(const RoadNetwork& net, std::span<const double> costs, NodeId origin) {
  if (net.node(origin).zone == Zone::Safe) return origin;
  const auto paths = shortest_paths_from(net, costs, origin);
  NodeId best = -1;
  double best_cost = kUnreachable;
  for (NodeId s : net.safe_nodes()) {
    const double c = paths[static_cast<std::size_t>(s)].cost;
    if (c < best_cost) {
      best_cost = c;
      best = s;
    }
  }
  if (best < 0)
    throw NoSafeNode("no safe node reachable from node " + std::to_string(origin));
  return best;
}

std::vector<Evacuee> generate_evacuees(const DemandSpec& spec, const RoadNetwork& net,
                                       std::span<const double> route_costs, double horizon_h,
                                       Rng& rng) {
  std::vector<Evacuee> out;
  std::map<NodeId, NodeId> dest_cache;
  const std::array<Zone, 3> zones{Zone::A, Zone::B, Zone::C};
  for (std::size_t z = 0; z < zones.size(); ++z) {
    std::vector<NodeId> zone_nodes;
    for (const Node& nd : net.nodes())
      if (nd.zone == zones[z]) zone_nodes.push_back(nd.id);
    const long count = std::lround(static_cast<double>(spec.households[z]) * spec.compliance);
    if (count <= 0) continue;
    if (zone_nodes.empty())
      throw std::invalid_argument("zone " + zone_name(zones[z]) + " has households but no nodes");
    const DepartureCurve& curve = spec.curves[z];
    for (long n = 0; n < count; ++n) {
      Evacuee ev;
      ev.id = static_cast<int>(out.size());
      ev.origin = zone_nodes[rng.index(zone_nodes.size())];
      ev.departure_min = 60.0 * sample_departure_h(rng.uniform(), curve.alpha, curve.beta_h, horizon_h);
      ev.is_ev = rng.bernoulli(spec.ev_share);
      if (ev.is_ev) {
        ev.battery_kwh = spec.battery_kwh;
        ev.soc = rng.uniform(spec.soc_min, spec.soc_max);
        ev.consumption_kwh_per_km = spec.consumption_kwh_per_km;
      }
      auto it = dest_cache.find(ev.origin);
      if (it == dest_cache.end()) {
        NodeId d = -1;
        try {
          d = nearest_safe_node(net, route_costs, ev.origin);
        } catch (const NoSafeNode&) {
          d = -1;
        }
        it = dest_cache.emplace(ev.origin, d).first;
      }
      ev.destination = it->second;
      if (ev.destination < 0) ev.status = EvacueeStatus::Stranded;
      out.push_back(std::move(ev));
    }
  }
  return out;
}

std::optional<int> select_station(const RoadNetwork& net, std::span<const double> snapshot,
                                  NodeId from, double range_km,
                                  std::span<const char> station_available) {
  const auto paths = shortest_paths_from(net, snapshot, from);
  std::optional<int> best;
  double best_time = kUnreachable;
  for (std::size_t s = 0; s < net.station_count(); ++s) {
    if (!station_available.empty() && !station_available[s]) continue;
    const Path& p = paths[static_cast<std::size_t>(net.stations()[s])];
    if (!is_reachable(p.cost)) continue;
    if (path_length_km(net, p.edges) > range_km) continue;
    if (p.cost < best_time) {
      best_time = p.cost;
      best = static_cast<int>(s);
    }
  }
  return best;
}

}  // namespace armd
