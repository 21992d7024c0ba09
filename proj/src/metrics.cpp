#include "armd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace armd {

RiskMetrics risk_metrics(const EpisodeTrace& trace, long n_evac, double late_window_h) {
  if (n_evac <= 0) throw std::invalid_argument("risk_metrics: EV evacuee count must be positive");
  RiskMetrics m;
  const std::size_t steps = trace.steps();
  const std::size_t stations = static_cast<std::size_t>(trace.stations);
  const double end_min = steps == 0 ? 0.0 : trace.time_min.back() + trace.step_h * 60.0;
  const double late_start = end_min - late_window_h * 60.0;
  double total = 0.0;
  double late_sum = 0.0;
  long late_pos = 0;
  for (std::size_t s = 0; s < steps; ++s) {
    const bool late = trace.time_min[s] >= late_start - 1e-9;
    for (std::size_t i = 0; i < stations; ++i) {
      const double rq = trace.r(s, i) * trace.q(s, i);
      total += rq * trace.step_h;
      m.psre = std::max(m.psre, rq);
      if (late) {
        late_sum += rq;
        if (rq > 0.0) ++late_pos;
      }
    }
  }
  m.are = total / static_cast<double>(n_evac);
  m.asre_l = late_pos > 0 ? late_sum / static_cast<double>(late_pos) : 0.0;
  return m;
}

double gini(std::vector<double> values) {
  const std::size_t n = values.size();
  if (n == 0) return 0.0;
  std::sort(values.begin(), values.end());
  double total = 0.0;
  double weighted = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += values[i];
    weighted += static_cast<double>(i + 1) * values[i];
  }
  if (total <= 0.0) return 0.0;
  const double nd = static_cast<double>(n);
  return 2.0 * weighted / (nd * total) - (nd + 1.0) / nd;
}

AfdReport afd_report(const std::vector<std::vector<double>>& real, const std::vector<std::vector<double>>& pred) {
  if (real.size() != pred.size() || real.empty())
    throw GridMismatch("afd_report: interval counts differ or are empty");
  const std::size_t stations = real[0].size();
  for (std::size_t h = 0; h < real.size(); ++h)
    if (real[h].size() != stations || pred[h].size() != stations)
      throw GridMismatch("afd_report: station counts differ at interval " + std::to_string(h));
  AfdReport r;
  r.per_station.assign(stations, 0.0);
  for (std::size_t h = 0; h < real.size(); ++h)
    for (std::size_t i = 0; i < stations; ++i) r.per_station[i] += std::abs(real[h][i] - pred[h][i]);
  for (double& v : r.per_station) v /= static_cast<double>(real.size());
  for (double v : r.per_station) r.mean += v;
  if (stations > 0) r.mean /= static_cast<double>(stations);
  r.gini = gini(r.per_station);
  return r;
}

SeedSummary summarize(const std::vector<double>& values) {
  SeedSummary s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  for (double v : values) s.mean += v;
  s.mean /= n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stderr_ = std::sqrt(ss / (n - 1.0) / n);
  }
  return s;
}

}  // namespace armd
