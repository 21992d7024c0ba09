#include "armd/hazard.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace armd {

void HazardModel::validate() const {
  if (!(landfall_h > 0.0)) throw std::invalid_argument("hazard.landfall_h must be > 0");
  if (!(tau_h > 0.0)) throw std::invalid_argument("hazard.tau_h must be > 0");
  if (!(kappa >= 0.0 && kappa <= 1.0)) throw std::invalid_argument("hazard.kappa must be in [0,1]");
  if (offset_a_h < 0.0 || offset_b_h < 0.0 || offset_c_h < 0.0 || offset_safe_h < 0.0)
    throw std::invalid_argument("hazard zone offsets must be >= 0");
  if (!(step_min > 0.0)) throw std::invalid_argument("hazard.step_min must be > 0");
}

double HazardModel::offset(Zone z) const {
  switch (z) {
    case Zone::A: return offset_a_h;
    case Zone::B: return offset_b_h;
    case Zone::C: return offset_c_h;
    case Zone::Safe: return offset_safe_h;
  }
  return 0.0;
}

double global_hazard(const HazardModel& model, double t_h) { return model.landfall_h - t_h; }

double local_hazard(const HazardModel& model, Zone zone, double t_h) {
  return global_hazard(model, t_h) + model.offset(zone);
}

double per_capita_risk(const HazardModel& model, Zone zone, double t_h) {
  const double h = local_hazard(model, zone, t_h);
  if (h > 0.0) return std::exp(-h / model.tau_h);
  return 1.0;
}

double saturation_time(const HazardModel& model, Zone zone) {
  return model.landfall_h + model.offset(zone);
}

int sample_charger_failures(const HazardModel& model, Zone zone, int operational, double t_h,
                            Rng& rng) {
  if (operational <= 0) return 0;
  const double p = std::min(1.0, model.kappa * per_capita_risk(model, zone, t_h));
  if (p <= 0.0) return operational;
  int alive = 0;
  for (int c = 0; c < operational; ++c)
    if (!rng.bernoulli(p)) ++alive;
  return alive;
}

}  // namespace armd
