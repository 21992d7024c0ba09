#include "armd/network.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <tuple>

namespace armd {

std::string zone_name(Zone z) {
  switch (z) {
    case Zone::A: return "A";
    case Zone::B: return "B";
    case Zone::C: return "C";
    case Zone::Safe: return "safe";
  }
  return "safe";
}

Zone parse_zone(const std::string& s) {
  if (s == "A") return Zone::A;
  if (s == "B") return Zone::B;
  if (s == "C") return Zone::C;
  if (s == "safe") return Zone::Safe;
  throw NetworkError("unknown zone label '" + s + "'");
}

RoadNetwork::RoadNetwork(std::vector<Node> nodes, std::vector<Edge> edges,
                         std::vector<NodeId> stations)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), stations_(std::move(stations)) {
  validate();
  out_.assign(nodes_.size(), {});
  for (const Edge& e : edges_) out_[static_cast<std::size_t>(e.tail)].push_back(e.id);
  for (auto& list : out_) std::sort(list.begin(), list.end());
}

void RoadNetwork::validate() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].id != static_cast<NodeId>(i))
      throw NetworkError("node ids must be dense and ordered; got " + std::to_string(nodes_[i].id) +
                         " at position " + std::to_string(i));
  }
  const auto n = static_cast<NodeId>(nodes_.size());
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const Edge& e = edges_[i];
    if (e.id != static_cast<EdgeId>(i))
      throw NetworkError("edge ids must be dense and ordered; got " + std::to_string(e.id));
    if (e.tail < 0 || e.tail >= n || e.head < 0 || e.head >= n)
      throw NetworkError("edge " + std::to_string(e.id) + " references a missing node");
    if (!(e.length_km > 0.0) || !(e.free_flow_min > 0.0) || !(e.capacity_vph > 0.0))
      throw NetworkError("edge " + std::to_string(e.id) +
                         " needs positive length, free-flow time and capacity");
  }
  if (stations_.empty()) throw NetworkError("network has no charging stations");
  std::set<NodeId> seen;
  for (NodeId s : stations_) {
    if (s < 0 || s >= n) throw NetworkError("station at missing node " + std::to_string(s));
    if (!seen.insert(s).second)
      throw NetworkError("duplicate station node " + std::to_string(s));
  }
  if (std::none_of(nodes_.begin(), nodes_.end(),
                   [](const Node& nd) { return nd.zone == Zone::Safe; }))
    throw NetworkError("network has no safe node");
}

std::vector<NodeId> RoadNetwork::safe_nodes() const {
  std::vector<NodeId> out;
  for (const Node& nd : nodes_)
    if (nd.zone == Zone::Safe) out.push_back(nd.id);
  return out;
}

std::vector<double> RoadNetwork::free_flow_costs() const {
  std::vector<double> c(edges_.size());
  for (const Edge& e : edges_) c[static_cast<std::size_t>(e.id)] = e.free_flow_min;
  return c;
}

void TravelTimeField::push_row(std::span<const double> row) {
  if (row.size() != edges_) throw NetworkError("travel-time row has wrong edge count");
  values_.insert(values_.end(), row.begin(), row.end());
}

LineGraph line_graph_adjacency(const RoadNetwork& net) {
  LineGraph g;
  g.size = net.edge_count();
  g.adjacency.assign(g.size * g.size, 0.0);
  g.degree.assign(g.size, 0.0);
  for (const Edge& a : net.edges()) {
    const auto r = static_cast<std::size_t>(a.id);
    for (const Edge& b : net.edges()) {
      if (a.id == b.id || a.head == b.tail) g.adjacency[r * g.size + static_cast<std::size_t>(b.id)] = 1.0;
    }
    for (std::size_t c = 0; c < g.size; ++c) g.degree[r] += g.adjacency[r * g.size + c];
  }
  return g;
}

double congested_travel_time(const Edge& edge, double flow_vph) {
  const double x = flow_vph / edge.capacity_vph;
  const double x2 = x * x;
  return edge.free_flow_min * (1.0 + 0.15 * x2 * x2);
}

namespace {

struct Label {
  double cost;
  std::vector<EdgeId> path;
  NodeId node;
};

bool better(double c1, const std::vector<EdgeId>& p1, double c2, const std::vector<EdgeId>& p2) {
  if (c1 != c2) return c1 < c2;
  return std::lexicographical_compare(p1.begin(), p1.end(), p2.begin(), p2.end());
}

struct LabelGreater {
  bool operator()(const Label& a, const Label& b) const {
    return better(b.cost, b.path, a.cost, a.path);
  }
};

}  // namespace

std::vector<Path> shortest_paths_from(const RoadNetwork& net, std::span<const double> costs,
                                      NodeId origin) {
  if (costs.size() != net.edge_count()) throw NetworkError("cost vector has wrong edge count");
  if (origin < 0 || static_cast<std::size_t>(origin) >= net.node_count())
    throw NetworkError("origin node does not exist");
  std::vector<Path> best(net.node_count(), Path{{}, kUnreachable});
  std::vector<char> settled(net.node_count(), 0);
  std::priority_queue<Label, std::vector<Label>, LabelGreater> open;
  best[static_cast<std::size_t>(origin)].cost = 0.0;
  open.push({0.0, {}, origin});
  while (!open.empty()) {
    Label cur = open.top();
    open.pop();
    const auto u = static_cast<std::size_t>(cur.node);
    if (settled[u]) continue;
    settled[u] = 1;
    for (EdgeId e : net.out_edges(cur.node)) {
      const double w = costs[static_cast<std::size_t>(e)];
      if (!is_reachable(w)) continue;
      const NodeId v = net.edge(e).head;
      const auto vi = static_cast<std::size_t>(v);
      if (settled[vi]) continue;
      std::vector<EdgeId> p = cur.path;
      p.push_back(e);
      const double c = cur.cost + w;
      if (better(c, p, best[vi].cost, best[vi].edges)) {
        best[vi] = Path{p, c};
        open.push({c, std::move(p), v});
      }
    }
  }
  return best;
}

Path shortest_path(const RoadNetwork& net, std::span<const double> costs, NodeId origin,
                   NodeId dest) {
  if (dest < 0 || static_cast<std::size_t>(dest) >= net.node_count())
    throw NetworkError("destination node does not exist");
  if (origin == dest) return Path{{}, 0.0};
  auto all = shortest_paths_from(net, costs, origin);
  Path& p = all[static_cast<std::size_t>(dest)];
  if (!is_reachable(p.cost))
    throw Unreachable("no path from node " + std::to_string(origin) + " to node " +
                      std::to_string(dest));
  return std::move(p);
}

double path_length_km(const RoadNetwork& net, const std::vector<EdgeId>& path) {
  double km = 0.0;
  for (EdgeId e : path) km += net.edge(e).length_km;
  return km;
}

AdvanceResult advance_on_route(const RoadNetwork& net, RouteCursor& cur, std::span<const double> costs,
                               double budget_min, double max_km) {
  AdvanceResult r;
  while (!cur.done() && r.used_min < budget_min) {
    const EdgeId e = cur.current_edge();
    const double cost = costs[static_cast<std::size_t>(e)];
    if (!is_reachable(cost)) {
      r.blocked = true;
      break;
    }
    const Edge& edge = net.edge(e);
    const double left_min = (1.0 - cur.progress) * cost;
    const double left_km = (1.0 - cur.progress) * edge.length_km;
    double dt = std::min(left_min, budget_min - r.used_min);
    double frac = dt / cost;
    const double km_room = max_km - r.km;
    if (frac * edge.length_km > km_room) {
      frac = km_room / edge.length_km;
      dt = frac * cost;
      cur.progress += frac;
      r.used_min += dt;
      r.km = max_km;
      break;
    }
    if (dt >= left_min) {
      r.used_min += left_min;
      r.km += left_km;
      ++cur.pos;
      cur.progress = 0.0;
    } else {
      cur.progress += frac;
      r.used_min += dt;
      r.km += frac * edge.length_km;
    }
  }
  return r;
}

NodeId next_node(const RoadNetwork& net, const RouteCursor& cur, NodeId fallback) {
  if (cur.done()) return cur.route.empty() ? fallback : net.edge(cur.route.back()).head;
  const Edge& e = net.edge(cur.current_edge());
  return cur.progress > 0.0 ? e.head : e.tail;
}

double remaining_edge_km(const RoadNetwork& net, const RouteCursor& cur) {
  if (!cur.mid_edge()) return 0.0;
  return (1.0 - cur.progress) * net.edge(cur.current_edge()).length_km;
}

}  // namespace armd
