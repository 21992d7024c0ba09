#include <algorithm>
#include <functional>

#include "armd/network.hpp"
#include "armd/rng.hpp"
#include "doctest.h"
#include "toy.hpp"

using namespace armd;

TEST_CASE("line graph: single edge has a self loop only") {
  auto n = toy::net(2, {toy::edge(0, 0, 1, 5)}, {1});
  auto lg = line_graph_adjacency(n);
  CHECK(lg.size == 1);
  CHECK(lg.adj(0, 0) == 1.0);
  CHECK(lg.degree[0] == 1.0);
}

TEST_CASE("line graph: head/tail rule is directional") {
  auto n = toy::net(3, {toy::edge(0, 0, 1, 5), toy::edge(1, 1, 2, 5)}, {2});
  auto lg = line_graph_adjacency(n);
  CHECK(lg.adj(0, 1) == 1.0);
  CHECK(lg.adj(1, 0) == 0.0);
}

TEST_CASE("line graph: 3-cycle rows hold self and successor") {
  auto n = toy::net(3, {toy::edge(0, 0, 1, 5), toy::edge(1, 1, 2, 5), toy::edge(2, 2, 0, 5)}, {2});
  auto lg = line_graph_adjacency(n);
  for (std::size_t r = 0; r < 3; ++r) {
    double sum = 0;
    for (std::size_t c = 0; c < 3; ++c) sum += lg.adj(r, c);
    CHECK(sum == 2.0);
    CHECK(lg.degree[r] == sum);
    CHECK(lg.adj(r, (r + 1) % 3) == 1.0);
  }
}

TEST_CASE("BPR travel time") {
  Edge e{0, 0, 1, 10.0, 10.0, 100.0};
  CHECK(congested_travel_time(e, 0.0) == 10.0);
  CHECK(congested_travel_time(e, 100.0) == doctest::Approx(11.5).epsilon(1e-15));
  CHECK(congested_travel_time(e, 200.0) == doctest::Approx(34.0).epsilon(1e-15));
  double prev = 0;
  for (double f = 0; f < 500; f += 7) {
    double t = congested_travel_time(e, f);
    CHECK(t >= prev);
    prev = t;
  }
}

TEST_CASE("shortest path basics") {
  auto n = toy::net(2, {toy::edge(0, 0, 1, 7), toy::edge(1, 0, 1, 5)}, {1});
  auto costs = n.free_flow_costs();
  auto same = shortest_path(n, costs, 0, 0);
  CHECK(same.edges.empty());
  CHECK(same.cost == 0.0);
  auto p = shortest_path(n, costs, 0, 1);
  CHECK(p.edges == std::vector<EdgeId>{1});
  CHECK(p.cost == 5.0);
}

TEST_CASE("shortest path on a diamond") {
  // 0->1->3 costs 2+2, 0->2->3 costs 1+4.
  auto n = toy::net(4, {toy::edge(0, 0, 1, 2), toy::edge(1, 1, 3, 2), toy::edge(2, 0, 2, 1), toy::edge(3, 2, 3, 4)},
                    {3});
  auto p = shortest_path(n, n.free_flow_costs(), 0, 3);
  CHECK(p.cost == 4.0);
  CHECK(p.edges == std::vector<EdgeId>{0, 1});
}

TEST_CASE("shortest path ties go to the smaller edge sequence") {
  auto n = toy::net(4, {toy::edge(0, 0, 2, 1), toy::edge(1, 2, 3, 2), toy::edge(2, 0, 1, 2), toy::edge(3, 1, 3, 1)},
                    {3});
  auto p = shortest_path(n, n.free_flow_costs(), 0, 3);
  CHECK(p.cost == 3.0);
  CHECK(p.edges == std::vector<EdgeId>{0, 1});
}

TEST_CASE("unreachable destination throws") {
  auto n = toy::net(3, {toy::edge(0, 0, 1, 2), toy::edge(1, 1, 2, 2)}, {2});
  auto costs = n.free_flow_costs();
  costs[1] = kUnreachable;
  CHECK_THROWS_AS(shortest_path(n, costs, 0, 2), Unreachable);
  CHECK_THROWS_AS(shortest_path(n, n.free_flow_costs(), 2, 0), Unreachable);
}

namespace {

RoadNetwork random_net(Rng& rng, int n, int m) {
  std::vector<Edge> edges;
  for (int e = 0; e < m; ++e) {
    int a = int(rng.index(std::size_t(n))), b = int(rng.index(std::size_t(n)));
    if (a == b) b = (a + 1) % n;
    edges.push_back(toy::edge(e, a, b, 1.0 + double(rng.index(9))));
  }
  return toy::net(n, std::move(edges), {0});
}

// Minimum over all simple paths by depth-first enumeration.
double brute_force(const RoadNetwork& net, const std::vector<double>& costs, int from, int to) {
  double best = kUnreachable;
  std::vector<char> seen(net.node_count(), 0);
  std::function<void(int, double)> dfs = [&](int v, double acc) {
    if (v == to) {
      best = std::min(best, acc);
      return;
    }
    seen[std::size_t(v)] = 1;
    for (EdgeId e : net.out_edges(v)) {
      int h = net.edge(e).head;
      if (!seen[std::size_t(h)] && is_reachable(costs[std::size_t(e)])) dfs(h, acc + costs[std::size_t(e)]);
    }
    seen[std::size_t(v)] = 0;
  };
  dfs(from, 0.0);
  return best;
}

}  // namespace

TEST_CASE("shortest path equals brute force on small random networks") {
  Rng rng(42);
  for (int trial = 0; trial < 60; ++trial) {
    int n = 3 + int(rng.index(6));
    auto net = random_net(rng, n, 2 * n + int(rng.index(8)));
    auto costs = net.free_flow_costs();
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        double oracle = brute_force(net, costs, a, b);
        if (!is_reachable(oracle)) {
          CHECK_THROWS_AS(shortest_path(net, costs, a, b), Unreachable);
          continue;
        }
        auto p = shortest_path(net, costs, a, b);
        CHECK(p.cost == doctest::Approx(oracle).epsilon(1e-12));
        // Removing an edge never makes things cheaper.
        auto cut = costs;
        cut[rng.index(cut.size())] = kUnreachable;
        double after = brute_force(net, cut, a, b);
        CHECK(after >= oracle);
      }
  }
}

TEST_CASE("network validation") {
  CHECK_THROWS_AS(RoadNetwork(toy::nodes(2), {toy::edge(0, 0, 5, 1)}, {1}), NetworkError);
  CHECK_THROWS_AS(RoadNetwork(toy::nodes(2), {Edge{0, 0, 1, 0.0, 1.0, 1.0}}, {1}), NetworkError);
  CHECK_THROWS_AS(RoadNetwork(toy::nodes(2), {toy::edge(0, 0, 1, 1)}, {}), NetworkError);
  CHECK_THROWS_AS(RoadNetwork(toy::nodes(2, Zone::A), {toy::edge(0, 0, 1, 1)}, {1}), NetworkError);
}
