#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "armd/metrics.hpp"
#include "armd/simulator.hpp"

namespace armd {

// Shortest decimal text that parses back to the same double.
std::string fmt_double(double v);

inline constexpr const char* kStationTraceHeader = "time_min,station_id,queue,risk,chargers,serving_mcts";
inline constexpr const char* kTruckTraceHeader = "time_min,truck_id,phase,location,capability_kwh";
inline constexpr const char* kSummaryHeader =
    "scenario,policy,seed,fleet,n_evac,are,psre,asre_l,total_risk";

void write_station_trace(std::ostream& out, const EpisodeTrace& trace);
void write_truck_trace(std::ostream& out, const std::vector<TruckRow>& rows);
EpisodeTrace read_station_trace(std::istream& in, double step_min);

struct SummaryRow {
  std::string scenario;
  std::string policy;
  std::uint64_t seed = 0;
  int fleet = 0;
  long n_evac = 0;
  RiskMetrics metrics;
  double total_risk = 0.0;
};

SummaryRow summarize_episode(const EpisodeResult& r);
void write_summary_row(std::ostream& out, const SummaryRow& row);

// Reads a whole file; throws std::runtime_error on failure.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& text);

}  // namespace armd
