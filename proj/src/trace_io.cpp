#include "armd/trace_io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace armd {

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_station_trace(std::ostream& out, const EpisodeTrace& trace) {
  out << kStationTraceHeader << '\n';
  for (std::size_t s = 0; s < trace.steps(); ++s)
    for (std::size_t i = 0; i < static_cast<std::size_t>(trace.stations); ++i) {
      const std::size_t k = s * static_cast<std::size_t>(trace.stations) + i;
      out << fmt_double(trace.time_min[s]) << ',' << i << ',' << fmt_double(trace.queue[k]) << ','
          << fmt_double(trace.risk[k]) << ',' << fmt_double(trace.chargers[k]) << ','
          << fmt_double(trace.serving[k]) << '\n';
    }
}

void write_truck_trace(std::ostream& out, const std::vector<TruckRow>& rows) {
  out << kTruckTraceHeader << '\n';
  for (const TruckRow& r : rows)
    out << fmt_double(r.time_min) << ',' << r.truck << ',' << phase_name(r.phase) << ',' << r.location << ','
        << fmt_double(r.capability_kwh) << '\n';
}

namespace {

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::runtime_error("trace: bad number '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

EpisodeTrace read_station_trace(std::istream& in, double step_min) {
  std::string line;
  if (!std::getline(in, line) || line != kStationTraceHeader)
    throw std::runtime_error("trace: missing or wrong header");
  // time -> rows in station order
  std::map<double, std::vector<std::vector<double>>> by_time;
  int stations = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 6) throw std::runtime_error("trace: expected 6 fields");
    const double t = parse_double(f[0]);
    const int id = static_cast<int>(parse_double(f[1]));
    auto& rows = by_time[t];
    if (id != static_cast<int>(rows.size())) throw std::runtime_error("trace: stations out of order");
    rows.push_back({parse_double(f[2]), parse_double(f[3]), parse_double(f[4]), parse_double(f[5])});
    stations = std::max(stations, id + 1);
  }
  EpisodeTrace tr;
  tr.stations = stations;
  tr.step_h = step_min / 60.0;
  for (const auto& [t, rows] : by_time) {
    if (static_cast<int>(rows.size()) != stations) throw std::runtime_error("trace: ragged step");
    tr.time_min.push_back(t);
    for (const auto& r : rows) {
      tr.queue.push_back(r[0]);
      tr.risk.push_back(r[1]);
      tr.chargers.push_back(r[2]);
      tr.serving.push_back(r[3]);
    }
  }
  return tr;
}

SummaryRow summarize_episode(const EpisodeResult& r) {
  SummaryRow row;
  row.scenario = r.scenario;
  row.policy = r.policy;
  row.seed = r.seed;
  row.fleet = r.fleet;
  row.n_evac = r.n_evac;
  row.metrics = risk_metrics(r.trace, std::max<long>(r.n_evac, 1));
  row.total_risk = r.total_risk;
  return row;
}

void write_summary_row(std::ostream& out, const SummaryRow& row) {
  out << row.scenario << ',' << row.policy << ',' << row.seed << ',' << row.fleet << ',' << row.n_evac << ','
      << fmt_double(row.metrics.are) << ',' << fmt_double(row.metrics.psre) << ','
      << fmt_double(row.metrics.asre_l) << ',' << fmt_double(row.total_risk) << '\n';
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace armd
