#include "armd/policies.hpp"
#include "doctest.h"

using namespace armd;

namespace {

Observation obs(std::vector<StationObs> c) {
  Observation o;
  o.candidates = std::move(c);
  return o;
}

}  // namespace

TEST_CASE("greedy picks the largest R*Q") {
  auto o = obs({{0, 4, 0.5, 1, 0, 30}, {1, 2, 0.9, 1, 0, 10}});
  CHECK(greedy_choice(o) == 0);
}

TEST_CASE("greedy ties go to the nearest, then the smaller id") {
  auto o = obs({{0, 0, 0.5, 1, 0, 30}, {1, 0, 0.9, 1, 0, 10}, {2, 0, 0.2, 1, 0, 50}});
  CHECK(greedy_choice(o) == 1);
  auto same = obs({{3, 1, 0.5, 1, 0, 10}, {4, 1, 0.5, 1, 0, 10}});
  CHECK(greedy_choice(same) == 3);
  CHECK(greedy_choice(obs({{7, 0, 0.1, 0, 0, 99}})) == 7);
}

TEST_CASE("greedy skips unreachable stations") {
  auto o = obs({{0, 50, 1.0, 1, 0, kUnreachable}, {1, 1, 0.1, 1, 0, 10}});
  CHECK(greedy_choice(o) == 1);
  CHECK_FALSE(greedy_choice(obs({{0, 5, 1.0, 1, 0, kUnreachable}})).has_value());
}

TEST_CASE("greedy is invariant to rescaling the risk") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<StationObs> c;
    for (int i = 0; i < 5; ++i) c.push_back({i, double(rng.index(6)), rng.uniform(), 1, 0, double(rng.index(4))});
    auto a = greedy_choice(obs(c));
    const double scale = 0.1 + 10 * rng.uniform();
    for (auto& x : c) x.risk *= scale;
    CHECK(greedy_choice(obs(c)) == a);
  }
}

TEST_CASE("nearest choice") {
  auto o = obs({{0, 0, 0, 0, 0, 30}, {1, 0, 0, 0, 0, 10}, {2, 0, 0, 0, 0, 10}});
  CHECK(nearest_choice(o) == 1);
}

TEST_CASE("greedy policy acts only for listed idle trucks") {
  Scenario s = default_scenario();
  s.fleet.trucks = 2;
  Simulator sim(s, 1);
  GreedyPolicy g;
  DecisionContext ctx{sim, 0, {sim.observe(0, 0), sim.observe(1, 0)}, sim.policy_rng()};
  auto a = g.decide(ctx);
  REQUIRE(a.size() == 2);
  for (const auto& [k, st] : a) CHECK(ctx.observations[std::size_t(k)].contains(st));
}
