#include <algorithm>
#include <cmath>

#include "armd/demand.hpp"
#include "doctest.h"
#include "toy.hpp"

using namespace armd;

TEST_CASE("departure sigmoid") {
  CHECK(departure_fraction(15.0, 0.2, 15.0) == 0.5);
  CHECK(departure_fraction(25.0, 0.2, 15.0) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-15));
  CHECK(departure_fraction(25.0, 0.2, 15.0) == doctest::Approx(0.88080).epsilon(1e-5));
  CHECK(departure_fraction(-1e4, 0.2, 15.0) == doctest::Approx(0.0));
  double prev = -1;
  for (double t = -20; t < 80; t += 0.5) {
    double f = departure_fraction(t, 0.2, 21.0);
    CHECK(f > prev);
    prev = f;
  }
}

TEST_CASE("inverse-CDF departures reproduce the truncated sigmoid") {
  Rng rng(9);
  const double alpha = 0.2, beta = 21.0, horizon = 48.0;
  std::vector<double> t(10000);
  for (double& v : t) v = sample_departure_h(rng.uniform(), alpha, beta, horizon);
  std::sort(t.begin(), t.end());
  const double f0 = departure_fraction(0, alpha, beta), f1 = departure_fraction(horizon, alpha, beta);
  double ks = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double model = (departure_fraction(t[i], alpha, beta) - f0) / (f1 - f0);
    ks = std::max({ks, std::abs(double(i + 1) / double(t.size()) - model), std::abs(double(i) / double(t.size()) - model)});
    CHECK(t[i] >= 0.0);
    CHECK(t[i] <= horizon);
  }
  CHECK(ks < 0.02);
}

namespace {

// Zone A at nodes 0-1, zone B at 2, safe at 3.
RoadNetwork zoned() {
  std::vector<Node> nodes{{0, 0, 0, Zone::A}, {1, 1, 0, Zone::A}, {2, 2, 0, Zone::B}, {3, 3, 0, Zone::Safe}};
  std::vector<Edge> edges{toy::edge(0, 0, 2, 5), toy::edge(1, 1, 2, 5), toy::edge(2, 2, 3, 5)};
  return RoadNetwork(nodes, edges, {2});
}

}  // namespace

TEST_CASE("evacuee generation") {
  auto net = zoned();
  DemandSpec spec;
  spec.households = {100, 40, 0};
  Rng rng(1);
  auto evs = generate_evacuees(spec, net, net.free_flow_costs(), 48.0, rng);
  CHECK(evs.size() == 65 + 26);
  for (const auto& e : evs) {
    CHECK(e.destination == 3);
    CHECK(e.departure_min >= 0.0);
    CHECK(e.departure_min <= 48.0 * 60.0);
    if (e.is_ev) {
      CHECK(e.soc >= 0.3);
      CHECK(e.soc <= 0.8);
      CHECK(e.battery_kwh == 60.0);
    }
  }

  spec.compliance = 0.0;
  CHECK(generate_evacuees(spec, net, net.free_flow_costs(), 48.0, rng).empty());
}

TEST_CASE("EV share is binomial") {
  auto net = zoned();
  DemandSpec spec;
  spec.households = {10000, 0, 0};
  spec.compliance = 1.0;
  Rng rng(17);
  auto evs = generate_evacuees(spec, net, net.free_flow_costs(), 48.0, rng);
  REQUIRE(evs.size() == 10000);
  const long n_ev = std::count_if(evs.begin(), evs.end(), [](const Evacuee& e) { return e.is_ev; });
  const double sigma = std::sqrt(10000 * 0.15 * 0.85);
  CHECK(std::abs(double(n_ev) - 1500.0) <= 3 * sigma);
}

TEST_CASE("evacuees cut off from safety start stranded") {
  auto net = zoned();
  auto costs = net.free_flow_costs();
  costs[2] = kUnreachable;
  DemandSpec spec;
  spec.households = {10, 0, 0};
  Rng rng(2);
  auto evs = generate_evacuees(spec, net, costs, 48.0, rng);
  REQUIRE(!evs.empty());
  for (const auto& e : evs) CHECK(e.status == EvacueeStatus::Stranded);
}

TEST_CASE("station selection") {
  // 0 -> 1 (station 0, 5 min, 5 km), 0 -> 2 (station 1, 9 min, 9 km).
  std::vector<Edge> edges{toy::edge(0, 0, 1, 5), toy::edge(1, 0, 2, 9), toy::edge(2, 1, 3, 1), toy::edge(3, 2, 3, 1)};
  auto net = toy::net(4, edges, {1, 2});
  auto costs = net.free_flow_costs();
  CHECK(select_station(net, costs, 0, 100.0, {}) == 0);
  CHECK(select_station(net, costs, 0, 6.0, {}) == 0);
  std::vector<char> avail{0, 1};
  CHECK(select_station(net, costs, 0, 100.0, avail) == 1);

  // Nearest station 12 km away along every path, 10 km of range.
  std::vector<Edge> far{toy::edge(0, 0, 1, 6), toy::edge(1, 1, 2, 6), toy::edge(2, 0, 3, 4), toy::edge(3, 3, 2, 8)};
  auto far_net = toy::net(4, far, {2});
  CHECK_FALSE(select_station(far_net, far_net.free_flow_costs(), 0, 10.0, {}).has_value());
  CHECK(select_station(far_net, far_net.free_flow_costs(), 0, 12.0, {}) == 0);
}
