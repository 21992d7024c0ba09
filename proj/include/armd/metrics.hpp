#pragma once

#include <stdexcept>
#include <vector>

#include "armd/simulator.hpp"

namespace armd {

struct RiskMetrics {
  double are = 0.0;
  double psre = 0.0;
  double asre_l = 0.0;
};

// ARE weights each step by its length in hours; ASRE-L covers the last
// `late_window_h` hours of the trace.
RiskMetrics risk_metrics(const EpisodeTrace& trace, long n_evac, double late_window_h = 12.0);

class GridMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct AfdReport {
  std::vector<double> per_station;
  double mean = 0.0;
  double gini = 0.0;
};

// real/pred indexed [interval][station].
AfdReport afd_report(const std::vector<std::vector<double>>& real, const std::vector<std::vector<double>>& pred);

// Sorted-cumulative Gini; 0 when every value is 0.
double gini(std::vector<double> values);

struct SeedSummary {
  double mean = 0.0;
  double stderr_ = 0.0;
};
SeedSummary summarize(const std::vector<double>& values);

}  // namespace armd
