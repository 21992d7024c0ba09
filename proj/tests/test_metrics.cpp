#include <cmath>
#include <sstream>

#include "armd/metrics.hpp"
#include "armd/policies.hpp"
#include "armd/trace_io.hpp"
#include "doctest.h"

using namespace armd;

namespace {

EpisodeTrace flat_trace(int stations, int steps) {
  EpisodeTrace t;
  t.stations = stations;
  t.step_h = 5.0 / 60.0;
  for (int s = 0; s < steps; ++s) {
    t.time_min.push_back(5.0 * s);
    for (int i = 0; i < stations; ++i) {
      t.queue.push_back(0);
      t.risk.push_back(0.1);
      t.chargers.push_back(2);
      t.serving.push_back(0);
    }
  }
  return t;
}

// Mean-absolute-difference Gini.
double gini_oracle(const std::vector<double>& x) {
  double sum = 0, diff = 0;
  for (double a : x) {
    sum += a;
    for (double b : x) diff += std::abs(a - b);
  }
  if (sum == 0) return 0;
  const double n = double(x.size());
  return diff / (2 * n * n * (sum / n));
}

}  // namespace

TEST_CASE("zero queues give zero risk metrics") {
  auto t = flat_trace(3, 576);
  auto m = risk_metrics(t, 10);
  CHECK(m.are == 0.0);
  CHECK(m.psre == 0.0);
  CHECK(m.asre_l == 0.0);
}

TEST_CASE("late-window fixture") {
  auto t = flat_trace(1, 576);
  for (int s = 576 - 144; s < 576; ++s) {
    t.queue[std::size_t(s)] = 2;
    t.risk[std::size_t(s)] = 0.5;
  }
  auto m = risk_metrics(t, 4);
  CHECK(std::abs(m.psre - 1.0) <= 1e-12);
  CHECK(std::abs(m.asre_l - 1.0) <= 1e-12);
  // 144 steps of 1.0 * 5/60 h over 4 EVs.
  CHECK(std::abs(m.are - 144 * (5.0 / 60.0) / 4) <= 1e-12);

  // Positive entries before the window do not count.
  t.queue[0] = 10;
  t.risk[0] = 0.9;
  auto m2 = risk_metrics(t, 4);
  CHECK(std::abs(m2.asre_l - 1.0) <= 1e-12);
  CHECK(std::abs(m2.psre - 9.0) <= 1e-12);
}

TEST_CASE("doubling queues doubles ARE and PSRE") {
  Scenario s = default_scenario();
  s.fleet.trucks = 0;
  GreedyPolicy g;
  auto r = run_episode(s, g, 2);
  auto m = risk_metrics(r.trace, r.n_evac);
  auto doubled = r.trace;
  for (double& q : doubled.queue) q *= 2;
  auto m2 = risk_metrics(doubled, r.n_evac);
  CHECK(m2.are == 2 * m.are);
  CHECK(m2.psre == 2 * m.psre);
  CHECK(m.are * double(r.n_evac) == doctest::Approx(r.total_risk).epsilon(1e-12));
  CHECK(m.psre >= m.are * double(r.n_evac) / (6 * 576 * (5.0 / 60.0)));
  CHECK_THROWS(risk_metrics(r.trace, 0));
}

TEST_CASE("AFD fixtures") {
  auto same = afd_report({{1, 2}, {3, 4}}, {{1, 2}, {3, 4}});
  CHECK(same.mean == 0.0);
  CHECK(same.gini == 0.0);

  auto one = afd_report({{3}, {5}}, {{4}, {4}});
  CHECK(std::abs(one.per_station[0] - 1.0) <= 1e-12);
  CHECK(std::abs(one.mean - 1.0) <= 1e-12);

  CHECK(std::abs(gini({0, 0, 3}) - 2.0 / 3.0) <= 1e-12);
  CHECK(gini({2, 2, 2, 2}) == 0.0);
  CHECK(gini({0, 0}) == 0.0);
  CHECK_THROWS_AS(afd_report({{1, 2}}, {{1}}), GridMismatch);
  CHECK_THROWS_AS(afd_report({{1}, {2}}, {{1}}), GridMismatch);
}

TEST_CASE("gini matches the pairwise formula and ignores order") {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(1 + rng.index(9));
    for (double& v : x) v = rng.index(3) == 0 ? 0.0 : 10 * rng.uniform();
    const double g = gini(x);
    CHECK(std::abs(g - gini_oracle(x)) <= 1e-12);
    CHECK(g >= 0.0);
    CHECK(g < 1.0);
    std::reverse(x.begin(), x.end());
    CHECK(std::abs(gini(x) - g) <= 1e-12);
  }
}

TEST_CASE("seed summary") {
  auto s = summarize({1, 2, 3, 4});
  CHECK(s.mean == 2.5);
  CHECK(s.stderr_ == doctest::Approx(std::sqrt(1.6666666666666667 / 4)).epsilon(1e-14));
}

TEST_CASE("trace round trip reproduces metrics exactly") {
  Scenario s = default_scenario();
  s.fleet.trucks = 2;
  GreedyPolicy g;
  auto r = run_episode(s, g, 3);
  std::ostringstream out;
  write_station_trace(out, r.trace);
  const std::string text = out.str();
  CHECK(text.rfind(kStationTraceHeader, 0) == 0);
  std::size_t lines = 0;
  for (char c : text) lines += c == '\n';
  CHECK(lines == 1 + 576 * 6);
  std::istringstream in(text);
  auto back = read_station_trace(in, s.step_min);
  auto a = risk_metrics(r.trace, r.n_evac);
  auto b = risk_metrics(back, r.n_evac);
  CHECK(a.are == b.are);
  CHECK(a.psre == b.psre);
  CHECK(a.asre_l == b.asre_l);

  EpisodeTrace empty;
  empty.stations = 6;
  std::ostringstream e;
  write_station_trace(e, empty);
  CHECK(e.str() == std::string(kStationTraceHeader) + "\n");
}

TEST_CASE("shortest round-trip decimal") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.5, 0.0}) CHECK(std::stod(fmt_double(v)) == v);
  CHECK(fmt_double(0.5) == "0.5");
}
