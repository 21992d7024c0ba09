#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace armd {

using NodeId = int;
using EdgeId = int;

enum class Zone { A, B, C, Safe };

std::string zone_name(Zone z);
Zone parse_zone(const std::string& s);

// Travel time of a closed or otherwise impassable link.
inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

inline bool is_reachable(double cost) { return cost < kUnreachable; }

struct Node {
  NodeId id = 0;
  double x_km = 0.0;
  double y_km = 0.0;
  Zone zone = Zone::Safe;
};

struct Edge {
  EdgeId id = 0;
  NodeId tail = 0;
  NodeId head = 0;
  double length_km = 0.0;
  double free_flow_min = 0.0;
  double capacity_vph = 0.0;
};

class NetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Unreachable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Directed road graph. Node and edge ids are dense indices (id == position).
class RoadNetwork {
 public:
  RoadNetwork() = default;
  RoadNetwork(std::vector<Node> nodes, std::vector<Edge> edges, std::vector<NodeId> stations);

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Node& node(NodeId n) const { return nodes_.at(static_cast<std::size_t>(n)); }
  const Edge& edge(EdgeId e) const { return edges_.at(static_cast<std::size_t>(e)); }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  // Station index -> node id.
  const std::vector<NodeId>& stations() const { return stations_; }
  std::size_t station_count() const { return stations_.size(); }

  const std::vector<EdgeId>& out_edges(NodeId n) const {
    return out_.at(static_cast<std::size_t>(n));
  }

  std::vector<NodeId> safe_nodes() const;
  std::vector<double> free_flow_costs() const;

 private:
  void validate() const;

  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::vector<NodeId> stations_;
  std::vector<std::vector<EdgeId>> out_;
};

// Per-step, per-edge travel times in minutes.
class TravelTimeField {
 public:
  TravelTimeField() = default;
  explicit TravelTimeField(std::size_t edge_count) : edges_(edge_count) {}

  std::size_t steps() const { return edges_ == 0 ? 0 : values_.size() / edges_; }
  std::size_t edge_count() const { return edges_; }
  std::span<const double> row(std::size_t step) const {
    return {values_.data() + step * edges_, edges_};
  }
  double at(std::size_t step, EdgeId e) const {
    return values_[step * edges_ + static_cast<std::size_t>(e)];
  }
  void push_row(std::span<const double> row);

 private:
  std::size_t edges_ = 0;
  std::vector<double> values_;
};

struct LineGraph {
  std::size_t size = 0;
  std::vector<double> adjacency;  // size x size, row-major, 0/1
  std::vector<double> degree;     // diagonal entries
  double adj(std::size_t r, std::size_t c) const { return adjacency[r * size + c]; }
};

// Edge adjacency with self-loops: (e1, e2) = 1 iff head(e1) == tail(e2) or e1 == e2.
LineGraph line_graph_adjacency(const RoadNetwork& net);

// BPR volume-delay: t0 * (1 + 0.15 (flow / capacity)^4).
double congested_travel_time(const Edge& edge, double flow_vph);

struct Path {
  std::vector<EdgeId> edges;
  double cost = 0.0;
};

// Dijkstra over per-edge costs; unreachable edges are skipped. Ties go to the
// lexicographically smallest edge-id sequence. Throws Unreachable.
Path shortest_path(const RoadNetwork& net, std::span<const double> costs, NodeId origin,
                   NodeId dest);

// One-to-all variant; result[n] is kUnreachable-cost with empty edges when n
// cannot be reached.
std::vector<Path> shortest_paths_from(const RoadNetwork& net, std::span<const double> costs,
                                      NodeId origin);

double path_length_km(const RoadNetwork& net, const std::vector<EdgeId>& path);

// Position of a vehicle along a route: route[pos] is the edge being driven,
// `progress` the fraction of it already covered.
struct RouteCursor {
  std::vector<EdgeId> route;
  std::size_t pos = 0;
  double progress = 0.0;

  bool done() const { return pos >= route.size(); }
  bool mid_edge() const { return !done() && progress > 0.0; }
  EdgeId current_edge() const { return route[pos]; }
};

struct AdvanceResult {
  double used_min = 0.0;
  double km = 0.0;
  bool blocked = false;  // next edge is unreachable under the costs
};

// Drives along the route for at most `budget_min` minutes and `max_km`
// kilometres under per-edge costs. Stops early at the route end.
AdvanceResult advance_on_route(const RoadNetwork& net, RouteCursor& cur, std::span<const double> costs,
                               double budget_min, double max_km = kUnreachable);

// The node a vehicle reaches next (tail of the current edge when sitting at
// its start, head when mid-edge) and the distance left on the current edge.
NodeId next_node(const RoadNetwork& net, const RouteCursor& cur, NodeId fallback);
double remaining_edge_km(const RoadNetwork& net, const RouteCursor& cur);

}  // namespace armd
