#include "armd/policies.hpp"

namespace armd {

std::optional<int> greedy_choice(const Observation& obs) {
  const StationObs* best = nullptr;
  double best_rq = 0.0;
  for (const StationObs& c : obs.candidates) {
    if (!is_reachable(c.travel_min)) continue;
    const double rq = c.risk * c.queue;
    if (!best || rq > best_rq || (rq == best_rq && (c.travel_min < best->travel_min ||
                                                    (c.travel_min == best->travel_min && c.station < best->station)))) {
      best = &c;
      best_rq = rq;
    }
  }
  if (!best) return std::nullopt;
  return best->station;
}

std::optional<int> nearest_choice(const Observation& obs) {
  const StationObs* best = nullptr;
  for (const StationObs& c : obs.candidates) {
    if (!is_reachable(c.travel_min)) continue;
    if (!best || c.travel_min < best->travel_min ||
        (c.travel_min == best->travel_min && c.station < best->station))
      best = &c;
  }
  if (!best) return std::nullopt;
  return best->station;
}

JointAction GreedyPolicy::decide(DecisionContext& ctx) {
  JointAction a;
  for (const Observation& o : ctx.observations)
    if (auto s = greedy_choice(o)) a.emplace_back(o.truck, *s);
  return a;
}

}  // namespace armd
