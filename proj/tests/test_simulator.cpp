#include <cmath>
#include <map>

#include "armd/policies.hpp"
#include "armd/simulator.hpp"
#include "doctest.h"

using namespace armd;

namespace {

class Idle : public DispatchPolicy {
 public:
  std::string name() const override { return "none"; }
  JointAction decide(DecisionContext&) override { return {}; }
};

Scenario with_fleet(int trucks) {
  Scenario s = default_scenario();
  s.fleet.trucks = trucks;
  return s;
}

}  // namespace

TEST_CASE("empty world only advances the clock") {
  Scenario s = with_fleet(0);
  s.demand.households = {0, 0, 0};
  Simulator sim(s, 1);
  for (int i = 0; i < 40; ++i) sim.step();
  CHECK(sim.clock() == 40);
  CHECK(sim.evacuees().empty());
  CHECK(sim.field().steps() == 40);
  for (const auto& st : sim.stations()) {
    CHECK(st.queue.empty());
    CHECK(st.arrivals == 0);
  }
  for (int m = 0; m < 2; ++m) CHECK(sim.epoch_reward(m) == 0.0);
  for (std::size_t e = 0; e < s.network.edge_count(); ++e)
    CHECK(sim.field().at(39, int(e)) == s.network.edge(int(e)).free_flow_min);
}

TEST_CASE("a charger delivers 10 kWh per full step") {
  Scenario s = with_fleet(0);
  s.hazard.kappa = 0.0;
  Simulator sim(s, 3);
  long full_steps = 0;
  while (!sim.done()) {
    std::map<int, double> before;
    for (const auto& e : sim.evacuees())
      if (e.status == EvacueeStatus::Charging) before[e.id] = e.soc;
    sim.step();
    for (const auto& [id, soc] : before) {
      const auto& e = sim.evacuees()[std::size_t(id)];
      if (e.status != EvacueeStatus::Charging) continue;
      CHECK((e.soc - soc) * e.battery_kwh == doctest::Approx(10.0).epsilon(1e-9));
      ++full_steps;
    }
  }
  CHECK(full_steps > 0);
}

TEST_CASE("observation candidate sets") {
  Scenario s = with_fleet(1);
  s.fleet.depots = {s.network.stations()[5]};
  Simulator sim(s, 1);
  auto o0 = sim.observe(0, 0);
  CHECK(o0.candidates.size() == s.network.station_count());
  auto o1 = sim.observe(0, 1);
  CHECK(o1.candidates.size() == 5);
  CHECK(sim.observe(0, 3).candidates.size() == 6);
  for (const auto& c : o0.candidates)
    if (c.station == 5) CHECK(c.travel_min == 0.0);
  for (std::size_t i = 1; i < o1.candidates.size(); ++i)
    CHECK(o1.candidates[i - 1].station < o1.candidates[i].station);
  CHECK(o0.hazard_h == 48.0);
  CHECK(o0.capability_kwh == 3000.0);
}

TEST_CASE("actions") {
  Scenario s = with_fleet(2);
  s.fleet.depots = {s.network.stations()[5], s.network.stations()[0]};
  s.epochs.epoch_h = 0.5;
  Simulator sim(s, 1);
  // Station outside truck 0's local set at epoch 1.
  auto o1 = sim.observe(0, 1);
  int outside = -1;
  for (int i = 0; i < 6; ++i)
    if (!o1.contains(i)) outside = i;
  REQUIRE(outside >= 0);
  CHECK_THROWS_AS(sim.apply_actions({{0, outside}}, 1), InvalidAction);

  sim.apply_actions({{0, 5}, {1, 2}}, 0);
  CHECK(sim.trucks()[0].phase == TruckPhase::Serving);
  CHECK(sim.stations()[5].serving_mcts == 1);
  CHECK(sim.trucks()[1].phase == TruckPhase::Traveling);
  CHECK(sim.trucks()[1].target == 2);
  // Truck 1 is still on the road at the next epoch; a new action is ignored.
  while (sim.clock() < s.steps_per_epoch()) sim.step();
  REQUIRE(sim.trucks()[1].phase == TruckPhase::Traveling);
  sim.apply_actions({{1, 0}}, sim.epoch());
  CHECK(sim.trucks()[1].target == 2);
  CHECK(sim.trips().size() == 2);
}

TEST_CASE("serving ends after the service period") {
  Scenario s = with_fleet(1);
  s.fleet.depots = {s.network.stations()[1]};
  Simulator sim(s, 1);
  sim.apply_actions({{0, 1}}, 0);
  int steps = 0;
  while (sim.trucks()[0].phase == TruckPhase::Serving) {
    CHECK(sim.trucks()[0].service_remaining_min <= 120.0);
    CHECK(sim.trucks()[0].node == s.network.stations()[1]);
    sim.step();
    ++steps;
  }
  CHECK(steps * s.step_min == 120.0);
  CHECK(sim.stations()[1].serving_mcts == 0);
}

TEST_CASE("epoch reward of a hand-built trace") {
  // One station, Q = 2, R = 0.5 over a 2.5 h epoch of 5-min steps.
  double sum = 0;
  for (int s = 0; s < 30; ++s) sum += 0.5 * 2.0 * (5.0 / 60.0);
  CHECK(-sum == doctest::Approx(-2.5).epsilon(1e-12));
}

TEST_CASE("episode bookkeeping") {
  Scenario s = with_fleet(0);
  Idle none;
  auto r = run_episode(s, none, 4);
  CHECK(r.truck_rows.empty());
  CHECK(r.trace.steps() == 576);
  CHECK(r.trace.queue.size() == 576 * 6);
  CHECK(r.epoch_rewards.size() == 20);
  CHECK(r.n_evac > 0);

  double sum = 0;
  for (double x : r.epoch_rewards) sum += x;
  CHECK(sum == doctest::Approx(-r.total_risk).epsilon(1e-12));
}

TEST_CASE("decision epochs every 2.5 h") {
  Scenario s = with_fleet(0);
  Simulator sim(s, 1);
  int offered = 0;
  while (!sim.done()) {
    if (sim.at_decision_epoch()) {
      CHECK(std::fmod(sim.now_h(), 2.5) == 0.0);
      ++offered;
    }
    sim.step();
  }
  CHECK(offered == int(std::floor(48 / 2.5)) + 1);
}

TEST_CASE("identical seeds give identical traces") {
  Scenario s = with_fleet(3);
  GreedyPolicy g;
  auto a = run_episode(s, g, 8);
  auto b = run_episode(s, g, 8);
  CHECK(a.trace.queue == b.trace.queue);
  CHECK(a.trace.chargers == b.trace.chargers);
  CHECK(a.total_risk == b.total_risk);
  CHECK(a.truck_rows.size() == b.truck_rows.size());
  auto c = run_episode(s, g, 9);
  CHECK(c.trace.queue != a.trace.queue);
}

TEST_CASE("flow and energy conservation") {
  for (std::uint64_t seed : {1, 2, 3}) {
    Scenario s = with_fleet(4);
    GreedyPolicy g;
    auto r = run_episode(s, g, seed);
    double mct = 0, fixed = 0, trucks = 0;
    for (const auto& st : r.stations) {
      CHECK(st.arrivals == st.served + long(st.queue.size()) + long(st.in_service.size()) + st.departed_stranded);
      CHECK(long(st.in_service.size()) <= st.chargers + 3 * st.serving_mcts);
      mct += st.delivered_mct_kwh;
      fixed += st.delivered_fixed_kwh;
    }
    for (const auto& t : r.trucks) {
      CHECK(t.delivered_kwh <= 3000.0 + 1e-9);
      CHECK(t.capability_kwh >= 0.0);
      CHECK(t.delivered_kwh + t.capability_kwh == doctest::Approx(3000.0).epsilon(1e-12));
      trucks += t.delivered_kwh;
    }
    CHECK(mct == doctest::Approx(trucks).epsilon(1e-12));
    CHECK(r.ev_gain_kwh == doctest::Approx(mct + fixed).epsilon(1e-12));
    CHECK(mct > 0.0);
  }
}

TEST_CASE("exhausted trucks stop serving") {
  Scenario s = with_fleet(4);
  s.fleet.capability_kwh = 25.0;
  GreedyPolicy g;
  auto r = run_episode(s, g, 2);
  double mct = 0;
  for (const auto& st : r.stations) mct += st.delivered_mct_kwh;
  CHECK(mct <= 4 * 25.0 + 1e-9);
  for (const auto& t : r.trucks) CHECK(t.delivered_kwh <= 25.0 + 1e-12);
}

TEST_CASE("charger counts never increase") {
  Scenario s = with_fleet(0);
  s.hazard.kappa = 0.05;
  Idle none;
  auto r = run_episode(s, none, 5);
  for (std::size_t t = 1; t < r.trace.steps(); ++t)
    for (std::size_t i = 0; i < 6; ++i) CHECK(r.trace.chargers[t * 6 + i] <= r.trace.chargers[(t - 1) * 6 + i]);
}

TEST_CASE("MCTs lower total risk under greedy") {
  Idle none;
  GreedyPolicy g;
  auto base = run_episode(with_fleet(0), none, 6);
  auto with = run_episode(with_fleet(4), g, 6);
  CHECK(with.total_risk < base.total_risk);
}
