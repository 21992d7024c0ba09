#pragma once

#include <span>
#include <vector>

#include "armd/network.hpp"

namespace armd {

// Per-edge travel times for a run of future steps. Row r covers
// [start_min + r * step_min, start_min + (r + 1) * step_min); times past the
// last row hold the last row constant.
struct Forecast {
  std::size_t rows = 0;
  std::size_t edges = 0;
  double start_min = 0.0;
  double step_min = 5.0;
  std::vector<double> values;

  double at(double t_min, EdgeId e) const;
  std::span<const double> row(std::size_t r) const { return {values.data() + r * edges, edges}; }
};

// Repeats one snapshot for `rows` steps.
Forecast constant_forecast(std::span<const double> snapshot, std::size_t rows, double start_min,
                           double step_min);

class Forecaster {
 public:
  virtual ~Forecaster() = default;
  // `history` holds every travel-time row observed so far (one per step);
  // `now_min` is the start of the step about to be simulated.
  virtual Forecast forecast(const TravelTimeField& history, std::span<const double> current,
                            double now_min, double step_min) const = 0;
};

// Last observed travel times held for the whole horizon.
class PersistenceForecaster : public Forecaster {
 public:
  explicit PersistenceForecaster(std::size_t horizon = 12) : horizon_(horizon) {}
  Forecast forecast(const TravelTimeField& history, std::span<const double> current, double now_min,
                    double step_min) const override;

 private:
  std::size_t horizon_;
};

struct TimedPath {
  std::vector<EdgeId> edges;
  double arrival_min = 0.0;
};

// Time-dependent Dijkstra: an edge entered at time s costs forecast.at(s, e).
// FIFO travel times make the label-setting search exact. Ties go to the
// lexicographically smallest edge-id sequence. Throws Unreachable.
TimedPath plan_route(const RoadNetwork& net, const Forecast& forecast, double depart_min,
                     NodeId origin, NodeId dest);

// Predicted arrival time of following `cur` from `now_min`: the remainder of
// the current edge, then each later edge entered at its predicted time.
double predicted_arrival(const RoadNetwork& net, const Forecast& forecast, const RouteCursor& cur,
                         double now_min);

// Re-plans the part of the route after the current edge; a mid-edge vehicle
// finishes that edge first. The destination does not change. Returns false
// (route untouched) when the destination is unreachable under the forecast.
bool rolling_update(const RoadNetwork& net, const Forecast& forecast, RouteCursor& cur,
                    double now_min, NodeId current_node, NodeId dest);

enum class RoutingMode {
  Static,      // snapshot shortest path at dispatch, never revised
  Predictive,  // forecast-based plan, revised every route-update interval
};

}  // namespace armd
