#pragma once

#include <optional>

#include "armd/simulator.hpp"

namespace armd {

// Largest R*Q among reachable candidates; ties by shorter travel time, then
// smaller station id. nullopt when no candidate is reachable.
std::optional<int> greedy_choice(const Observation& obs);

// Nearest reachable candidate by (travel time, id).
std::optional<int> nearest_choice(const Observation& obs);

class GreedyPolicy : public DispatchPolicy {
 public:
  std::string name() const override { return "greedy"; }
  JointAction decide(DecisionContext& ctx) override;
};

}  // namespace armd
