#include "armd/router.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace armd {

double Forecast::at(double t_min, EdgeId e) const {
  double r = std::floor((t_min - start_min) / step_min);
  r = std::clamp(r, 0.0, static_cast<double>(rows - 1));
  return values[static_cast<std::size_t>(r) * edges + static_cast<std::size_t>(e)];
}

Forecast constant_forecast(std::span<const double> snapshot, std::size_t rows, double start_min,
                           double step_min) {
  Forecast f;
  f.rows = rows;
  f.edges = snapshot.size();
  f.start_min = start_min;
  f.step_min = step_min;
  f.values.reserve(rows * snapshot.size());
  for (std::size_t r = 0; r < rows; ++r) f.values.insert(f.values.end(), snapshot.begin(), snapshot.end());
  return f;
}

Forecast PersistenceForecaster::forecast(const TravelTimeField&, std::span<const double> current,
                                         double now_min, double step_min) const {
  return constant_forecast(current, horizon_, now_min, step_min);
}

namespace {

struct Label {
  double t;
  std::vector<EdgeId> path;
  NodeId node;
};

bool earlier(double t1, const std::vector<EdgeId>& p1, double t2, const std::vector<EdgeId>& p2) {
  if (t1 != t2) return t1 < t2;
  return std::lexicographical_compare(p1.begin(), p1.end(), p2.begin(), p2.end());
}

struct LabelLater {
  bool operator()(const Label& a, const Label& b) const { return earlier(b.t, b.path, a.t, a.path); }
};

}  // namespace

TimedPath plan_route(const RoadNetwork& net, const Forecast& forecast, double depart_min,
                     NodeId origin, NodeId dest) {
  if (forecast.edges != net.edge_count() || forecast.rows == 0)
    throw NetworkError("forecast does not match the network");
  if (origin == dest) return TimedPath{{}, depart_min};
  std::vector<double> best_t(net.node_count(), kUnreachable);
  std::vector<std::vector<EdgeId>> best_p(net.node_count());
  std::vector<char> settled(net.node_count(), 0);
  std::priority_queue<Label, std::vector<Label>, LabelLater> open;
  best_t[static_cast<std::size_t>(origin)] = depart_min;
  open.push({depart_min, {}, origin});
  while (!open.empty()) {
    Label cur = open.top();
    open.pop();
    const auto u = static_cast<std::size_t>(cur.node);
    if (settled[u]) continue;
    settled[u] = 1;
    if (cur.node == dest) return TimedPath{std::move(cur.path), cur.t};
    for (EdgeId e : net.out_edges(cur.node)) {
      const double w = forecast.at(cur.t, e);
      if (!is_reachable(w)) continue;
      const NodeId v = net.edge(e).head;
      const auto vi = static_cast<std::size_t>(v);
      if (settled[vi]) continue;
      std::vector<EdgeId> p = cur.path;
      p.push_back(e);
      const double t = cur.t + w;
      if (earlier(t, p, best_t[vi], best_p[vi])) {
        best_t[vi] = t;
        best_p[vi] = p;
        open.push({t, std::move(p), v});
      }
    }
  }
  throw Unreachable("no finite-cost route from node " + std::to_string(origin) + " to node " +
                    std::to_string(dest));
}

double predicted_arrival(const RoadNetwork& /*net*/, const Forecast& forecast, const RouteCursor& cur,
                         double now_min) {
  double t = now_min;
  for (std::size_t i = cur.pos; i < cur.route.size(); ++i) {
    const double w = forecast.at(t, cur.route[i]);
    if (!is_reachable(w)) return kUnreachable;
    t += (i == cur.pos ? 1.0 - cur.progress : 1.0) * w;
  }
  return t;
}

bool rolling_update(const RoadNetwork& net, const Forecast& forecast, RouteCursor& cur,
                    double now_min, NodeId current_node, NodeId dest) {
  NodeId from = current_node;
  double depart = now_min;
  std::vector<EdgeId> head_part;
  if (cur.mid_edge()) {
    const EdgeId e = cur.current_edge();
    const double w = forecast.at(now_min, e);
    if (!is_reachable(w)) return false;
    depart = now_min + (1.0 - cur.progress) * w;
    from = net.edge(e).head;
    head_part.push_back(e);
  }
  TimedPath tp;
  try {
    tp = plan_route(net, forecast, depart, from, dest);
  } catch (const Unreachable&) {
    return false;
  }
  std::vector<EdgeId> route(cur.route.begin(), cur.route.begin() + static_cast<std::ptrdiff_t>(cur.pos));
  route.insert(route.end(), head_part.begin(), head_part.end());
  route.insert(route.end(), tp.edges.begin(), tp.edges.end());
  cur.route = std::move(route);
  return true;
}

}  // namespace armd
