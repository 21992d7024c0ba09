#include <algorithm>
#include <functional>

#include "armd/rng.hpp"
#include "armd/router.hpp"
#include "doctest.h"
#include "toy.hpp"

using namespace armd;

namespace {

RoadNetwork random_net(Rng& rng, int n) {
  std::vector<Edge> edges;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      if (a != b && rng.bernoulli(0.35)) edges.push_back(toy::edge(int(edges.size()), a, b, 1 + 19 * rng.uniform()));
  return toy::net(n, edges);
}

// Rows never decrease per edge, so entering later never arrives earlier.
Forecast fifo_forecast(const RoadNetwork& net, Rng& rng, std::size_t rows) {
  Forecast f;
  f.rows = rows;
  f.edges = net.edge_count();
  f.values.resize(rows * f.edges);
  for (std::size_t e = 0; e < f.edges; ++e) {
    double v = net.edges()[e].free_flow_min;
    for (std::size_t r = 0; r < rows; ++r) {
      if (rng.bernoulli(0.3)) v += 15 * rng.uniform();
      f.values[r * f.edges + e] = v;
    }
  }
  return f;
}

double follow(const Forecast& f, const std::vector<EdgeId>& p, double t) {
  for (EdgeId e : p) t += f.at(t, e);
  return t;
}

// Minimum arrival over every simple path.
double brute_force(const RoadNetwork& net, const Forecast& f, double depart, NodeId o, NodeId d) {
  double best = kUnreachable;
  std::vector<char> seen(net.node_count(), 0);
  std::vector<EdgeId> path;
  std::function<void(NodeId)> dfs = [&](NodeId u) {
    if (u == d) {
      best = std::min(best, follow(f, path, depart));
      return;
    }
    seen[std::size_t(u)] = 1;
    for (EdgeId e : net.out_edges(u)) {
      const NodeId v = net.edge(e).head;
      if (seen[std::size_t(v)]) continue;
      path.push_back(e);
      dfs(v);
      path.pop_back();
    }
    seen[std::size_t(u)] = 0;
  };
  dfs(o);
  return best;
}

// Route A = edges 0,1 via node 1; route B = edges 2,3 via node 2. Edge 1
// jumps from 10 to 60 at step 4.
RoadNetwork two_routes() {
  return toy::net(4, {toy::edge(0, 0, 1, 12), toy::edge(1, 1, 3, 10), toy::edge(2, 0, 2, 12.5),
                      toy::edge(3, 2, 3, 12.5)});
}

Forecast jump_forecast() {
  Forecast f = constant_forecast(std::vector<double>{12, 10, 12.5, 12.5}, 12, 0.0, 5.0);
  for (std::size_t r = 4; r < 12; ++r) f.values[r * 4 + 1] = 60;
  return f;
}

}  // namespace

TEST_CASE("forecast lookup") {
  Forecast f = jump_forecast();
  CHECK(f.at(19.99, 1) == 10.0);
  CHECK(f.at(20.0, 1) == 60.0);
  CHECK(f.at(1e6, 1) == 60.0);
  CHECK(f.at(-3.0, 1) == 10.0);
}

TEST_CASE("constant forecast reproduces the static shortest path") {
  Rng rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    auto net = random_net(rng, 6);
    std::vector<double> costs;
    for (const Edge& e : net.edges()) costs.push_back(e.free_flow_min);
    auto f = constant_forecast(costs, 12, 100.0, 5.0);
    for (NodeId d = 1; d < 6; ++d) {
      bool reach = true;
      Path sp;
      try {
        sp = shortest_path(net, costs, 0, d);
      } catch (const Unreachable&) {
        reach = false;
      }
      if (!reach) {
        CHECK_THROWS_AS(plan_route(net, f, 100.0, 0, d), Unreachable);
        continue;
      }
      auto tp = plan_route(net, f, 100.0, 0, d);
      CHECK(tp.edges == sp.edges);
      CHECK(tp.arrival_min == doctest::Approx(100.0 + sp.cost).epsilon(1e-12));
    }
  }
}

TEST_CASE("impending jump diverts to the constant route") {
  auto net = two_routes();
  auto f = jump_forecast();
  auto early = plan_route(net, f, 0.0, 0, 3);
  CHECK(early.edges == std::vector<EdgeId>{0, 1});
  CHECK(early.arrival_min == 22.0);
  auto late = plan_route(net, f, 10.0, 0, 3);
  CHECK(late.edges == std::vector<EdgeId>{2, 3});
  CHECK(late.arrival_min == 35.0);
  // The snapshot at departure still prefers A.
  CHECK(shortest_path(net, f.row(2), 0, 3).edges == std::vector<EdgeId>{0, 1});
}

TEST_CASE("origin equals destination") {
  auto net = two_routes();
  auto tp = plan_route(net, jump_forecast(), 17.0, 2, 2);
  CHECK(tp.edges.empty());
  CHECK(tp.arrival_min == 17.0);
}

TEST_CASE("planned arrival matches brute force over simple paths") {
  Rng rng(32);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 4 + int(rng.index(5));
    auto net = random_net(rng, n);
    auto f = fifo_forecast(net, rng, 12);
    const double depart = 40 * rng.uniform();
    for (NodeId d = 1; d < n; ++d) {
      const double bf = brute_force(net, f, depart, 0, d);
      if (!is_reachable(bf)) {
        CHECK_THROWS_AS(plan_route(net, f, depart, 0, d), Unreachable);
        continue;
      }
      auto tp = plan_route(net, f, depart, 0, d);
      CHECK(tp.arrival_min == doctest::Approx(bf).epsilon(1e-12));
      CHECK(follow(f, tp.edges, depart) == doctest::Approx(tp.arrival_min).epsilon(1e-12));
      ++checked;
    }
  }
  CHECK(checked > 50);
}

TEST_CASE("rolling update") {
  auto net = two_routes();

  SUBCASE("unchanged forecast keeps the route") {
    auto f = constant_forecast(std::vector<double>{12, 10, 12.5, 12.5}, 12, 0.0, 5.0);
    auto tp = plan_route(net, f, 0.0, 0, 3);
    RouteCursor cur{tp.edges, 0, 0.4};
    const auto before = cur.route;
    CHECK(rolling_update(net, f, cur, 4.8, 0, 3));
    CHECK(cur.route == before);
  }

  SUBCASE("incident on the next edge switches route") {
    // Leave node 0 on edge 0; an incident raises edge 1 above the detour.
    auto net2 = toy::net(4, {toy::edge(0, 0, 1, 5), toy::edge(1, 1, 3, 10), toy::edge(2, 1, 2, 6),
                             toy::edge(3, 2, 3, 6)});
    auto calm = constant_forecast(std::vector<double>{5, 10, 6, 6}, 12, 0.0, 5.0);
    auto tp = plan_route(net2, calm, 0.0, 0, 3);
    REQUIRE(tp.edges == std::vector<EdgeId>{0, 1});
    RouteCursor cur{tp.edges, 0, 0.5};
    auto incident = constant_forecast(std::vector<double>{5, 40, 6, 6}, 12, 0.0, 5.0);
    CHECK(rolling_update(net2, incident, cur, 2.5, 0, 3));
    CHECK(cur.route == std::vector<EdgeId>{0, 2, 3});
    CHECK(cur.pos == 0);
    CHECK(predicted_arrival(net2, incident, cur, 2.5) == 17.0);
  }

  SUBCASE("unreachable destination leaves the route untouched") {
    auto f = constant_forecast(std::vector<double>{12, kUnreachable, 12.5, kUnreachable}, 12, 0.0, 5.0);
    RouteCursor cur{{0, 1}, 0, 0.0};
    CHECK_FALSE(rolling_update(net, f, cur, 0.0, 0, 3));
    CHECK(cur.route == std::vector<EdgeId>{0, 1});
  }
}

TEST_CASE("re-planning never increases predicted arrival") {
  Rng rng(33);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 5 + int(rng.index(4));
    auto net = random_net(rng, n);
    auto old_f = fifo_forecast(net, rng, 12);
    TimedPath tp;
    try {
      tp = plan_route(net, old_f, 0.0, 0, n - 1);
    } catch (const Unreachable&) {
      continue;
    }
    if (tp.edges.empty()) continue;
    RouteCursor cur{tp.edges, rng.index(tp.edges.size()), 0.0};
    if (rng.bernoulli(0.5)) cur.progress = 0.9 * rng.uniform();
    const NodeId at = net.edge(cur.route[cur.pos]).tail;
    const double now = 30 * rng.uniform();
    auto new_f = fifo_forecast(net, rng, 12);
    const double before = predicted_arrival(net, new_f, cur, now);
    if (!rolling_update(net, new_f, cur, now, at, n - 1)) continue;
    const double after = predicted_arrival(net, new_f, cur, now);
    CHECK(after <= before + 1e-9);
    CHECK(net.edge(cur.route.back()).head == n - 1);
    ++checked;
  }
  CHECK(checked > 50);
}
