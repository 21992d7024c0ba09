#pragma once

#include "armd/network.hpp"
#include "armd/rng.hpp"

namespace armd {

// Hurricane hazard clock. H(t) is the remaining time to landfall (hours);
// stations see it shifted by a zone offset, and per-capita risk is the
// exponential map exp(-H_i / tau) saturating at 1 once H_i <= 0.
struct HazardModel {
  double landfall_h = 48.0;
  double offset_a_h = 0.0;
  double offset_b_h = 6.0;
  double offset_c_h = 9.0;
  // Stations in the safe zone sit further from the impact area.
  double offset_safe_h = 12.0;
  double tau_h = 12.0;
  // Per-step failure probability scale for each operational charger.
  double kappa = 0.002;
  double step_min = 5.0;

  void validate() const;
  double offset(Zone z) const;
};

double global_hazard(const HazardModel& model, double t_h);
double local_hazard(const HazardModel& model, Zone zone, double t_h);
double per_capita_risk(const HazardModel& model, Zone zone, double t_h);

// Time at which the local hazard of `zone` reaches zero.
double saturation_time(const HazardModel& model, Zone zone);

// Each operational charger fails with probability min(1, kappa * R). Returns
// the surviving count; failures are permanent.
int sample_charger_failures(const HazardModel& model, Zone zone, int operational, double t_h,
                            Rng& rng);

}  // namespace armd
