#include <cmath>

#include "armd/hazard.hpp"
#include "doctest.h"

using namespace armd;

TEST_CASE("local hazard") {
  HazardModel m;
  CHECK(local_hazard(m, Zone::A, 0.0) == 48.0);
  CHECK(local_hazard(m, Zone::C, 48.0) == 9.0);
  CHECK(local_hazard(m, Zone::A, 54.0) == -6.0);
  CHECK(local_hazard(m, Zone::B, 10.0) == 44.0);
}

TEST_CASE("per-capita risk") {
  HazardModel m;
  CHECK(per_capita_risk(m, Zone::A, 48.0) == 1.0);
  CHECK(per_capita_risk(m, Zone::A, 60.0) == 1.0);
  CHECK(per_capita_risk(m, Zone::A, 36.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(per_capita_risk(m, Zone::A, 24.0) == doctest::Approx(0.1353352832366127).epsilon(1e-14));
  CHECK(saturation_time(m, Zone::B) == 54.0);
}

TEST_CASE("risk is monotone in time and ordered by zone offset") {
  HazardModel m;
  const Zone zones[] = {Zone::A, Zone::B, Zone::C, Zone::Safe};
  for (Zone z : zones) {
    double prev = 0.0;
    for (double t = 0; t <= 72; t += 0.25) {
      double r = per_capita_risk(m, z, t);
      CHECK(r > 0.0);
      CHECK(r <= 1.0);
      CHECK(r >= prev);
      prev = r;
    }
  }
  for (double t = 0; t <= 72; t += 0.5)
    for (int a = 0; a < 4; ++a)
      for (int b = a + 1; b < 4; ++b) CHECK(per_capita_risk(m, zones[a], t) >= per_capita_risk(m, zones[b], t));
}

TEST_CASE("charger failures") {
  HazardModel m;
  Rng rng(3);
  m.kappa = 0.0;
  CHECK(sample_charger_failures(m, Zone::A, 7, 47.0, rng) == 7);
  m.kappa = 1.0;
  CHECK(sample_charger_failures(m, Zone::A, 7, 50.0, rng) == 0);

  // R = 0.5 at H = tau ln 2; expected failures 10 * 0.002 * 0.5 = 0.01 per step.
  m.kappa = 0.002;
  const double t = m.landfall_h - m.tau_h * std::log(2.0);
  CHECK(per_capita_risk(m, Zone::A, t) == doctest::Approx(0.5).epsilon(1e-12));
  const int steps = 100000;
  long failures = 0;
  for (int s = 0; s < steps; ++s) failures += 10 - sample_charger_failures(m, Zone::A, 10, t, rng);
  const double n = 10.0 * steps, p = 0.001;
  const double sigma = std::sqrt(n * p * (1 - p));
  CHECK(std::abs(double(failures) - n * p) <= 3 * sigma);
}

TEST_CASE("hazard validation") {
  HazardModel m;
  m.tau_h = 0.0;
  CHECK_THROWS(m.validate());
  m = HazardModel{};
  m.kappa = 1.5;
  CHECK_THROWS(m.validate());
  m = HazardModel{};
  m.offset_b_h = -1;
  CHECK_THROWS(m.validate());
}
