#include "armd/mip.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <queue>
#include <sstream>

#include "armd/policies.hpp"
#include "armd/trace_io.hpp"

namespace armd {

double MipInstance::ell0(int k, int i) const {
  const double l = l0[ki(k, i)];
  return is_reachable(l) ? std::max(0.0, delta_h - l) : 0.0;
}

double MipInstance::ell(int p, int k, int j, int i) const {
  const double l = relocation[pkji(p, k, j, i)];
  return is_reachable(l) ? std::max(0.0, delta_h - l) : 0.0;
}

MipInstance MipInstance::sized(int stations, int trucks, int epochs) {
  MipInstance m;
  m.stations = stations;
  m.trucks = trucks;
  m.epochs = epochs;
  const auto F = static_cast<std::size_t>(stations), K = static_cast<std::size_t>(trucks),
             P = static_cast<std::size_t>(epochs);
  m.arrivals.assign(P * F, 0.0);
  m.chargers.assign(P * F, 0.0);
  m.q0.assign(F, 0.0);
  m.l0.assign(K * F, 0.0);
  m.relocation.assign(P * K * F * F, 0.0);
  m.capability.assign(K, 0.0);
  m.fixed0.assign(K, -1);
  m.zones.assign(F, Zone::A);
  return m;
}

void MipInstance::validate() const {
  const auto F = static_cast<std::size_t>(stations), K = static_cast<std::size_t>(trucks),
             P = static_cast<std::size_t>(epochs);
  if (stations <= 0 || trucks < 0 || epochs <= 0) throw MipError("instance needs stations and epochs");
  if (!(delta_h > 0.0)) throw MipError("epoch length must be > 0");
  if (arrivals.size() != P * F || chargers.size() != P * F || q0.size() != F || l0.size() != K * F ||
      relocation.size() != P * K * F * F || capability.size() != K || fixed0.size() != K || zones.size() != F)
    throw MipError("instance arrays have the wrong size");
  auto nonneg = [](const std::vector<double>& v, const char* what) {
    for (double x : v)
      if (!(x >= 0.0)) throw MipError(std::string("instance ") + what + " must be >= 0");
  };
  nonneg(arrivals, "arrivals");
  nonneg(chargers, "chargers");
  nonneg(q0, "initial queues");
  nonneg(l0, "travel times");
  nonneg(relocation, "relocation times");
  nonneg(capability, "capabilities");
  if (mu_fcs < 0.0 || mu_mct < 0.0) throw MipError("service rates must be >= 0");
  for (int f : fixed0)
    if (f < -1 || f >= stations) throw MipError("fixed assignment out of range");
}

ObjectiveCoeffs objective_coeffs(const MipInstance& inst, int i, int p) {
  const Zone z = inst.zones.at(static_cast<std::size_t>(i));
  const double tau = inst.hazard.tau_h;
  const double t0 = inst.tau(p);
  const double t1 = t0 + inst.delta_h;
  const double tsat = saturation_time(inst.hazard, z);
  const double ts = std::clamp(tsat, t0, t1);
  // Pre-saturation part: R = exp((t - tsat) / tau).
  auto F = [&](double t) { return tau * std::exp((t - tsat) / tau); };
  const double i0 = F(ts) - F(t0);
  const double i1 = ((ts - t0) * F(ts) - tau * F(ts)) - (0.0 - tau * F(t0));
  // Saturated part: R = 1.
  const double j0 = t1 - ts;
  const double j1 = 0.5 * ((t1 - t0) * (t1 - t0) - (ts - t0) * (ts - t0));
  ObjectiveCoeffs c;
  c.b = (i1 + j1) / inst.delta_h;
  c.a = (i0 + j0) - c.b;
  return c;
}

double evaluate_objective(const MipInstance& inst, const std::vector<double>& q) {
  double total = 0.0;
  for (int p = 0; p < inst.epochs; ++p)
    for (int i = 0; i < inst.stations; ++i) {
      const ObjectiveCoeffs c = objective_coeffs(inst, i, p);
      total += c.a * q[inst.pi(p, i)] + c.b * q[inst.pi(p + 1, i)] + c.constant;
    }
  return total;
}

namespace {

// Serving y vehicles at (i, q) lowers the objective by w[q][i] * y.
struct Weights {
  std::vector<double> w;  // [q][i]
  double base = 0.0;      // objective with no service at all
};

Weights service_weights(const MipInstance& inst) {
  const int P = inst.epochs, F = inst.stations;
  std::vector<double> a(static_cast<std::size_t>(P * F)), b(a.size());
  for (int p = 0; p < P; ++p)
    for (int i = 0; i < F; ++i) {
      const ObjectiveCoeffs c = objective_coeffs(inst, i, p);
      a[inst.pi(p, i)] = c.a;
      b[inst.pi(p, i)] = c.b;
    }
  Weights out;
  out.w.assign(a.size(), 0.0);
  for (int i = 0; i < F; ++i) {
    double tail = 0.0;  // sum_{p >= q+1} a + sum_{p >= q} b
    for (int q = P - 1; q >= 0; --q) {
      tail += b[inst.pi(q, i)];
      out.w[inst.pi(q, i)] = tail;
      tail += a[inst.pi(q, i)];
    }
    double qn = inst.q0[static_cast<std::size_t>(i)];
    for (int p = 0; p < P; ++p) {
      const double next = qn + inst.arrivals[inst.pi(p, i)];
      out.base += a[inst.pi(p, i)] * qn + b[inst.pi(p, i)] * next;
      qn = next;
    }
  }
  return out;
}

struct Relaxation {
  LinearProgram lp;
  std::vector<int> s_var;  // [p][i]
  std::vector<int> u_var;  // [p][k][i], -1 when absent
};

// fixed[p*K + k] is a station or -1. Unfixed groups get continuous x with
// sum x <= 1 and U <= mu * ell_bar * x.
Relaxation build_relaxation(const MipInstance& inst, const Weights& wt, const std::vector<int>& fixed) {
  const int P = inst.epochs, K = inst.trucks, F = inst.stations;
  Relaxation r;
  r.s_var.assign(static_cast<std::size_t>(P * F), -1);
  r.u_var.assign(static_cast<std::size_t>(P * K * F), -1);
  std::vector<int> x_var(r.u_var.size(), -1);
  int n = 0;
  for (int p = 0; p < P; ++p)
    for (int i = 0; i < F; ++i) r.s_var[inst.pi(p, i)] = n++;
  auto uk = [&](int p, int k, int i) { return static_cast<std::size_t>((p * K + k) * F + i); };
  for (int p = 0; p < P; ++p)
    for (int k = 0; k < K; ++k) {
      const int f = fixed[static_cast<std::size_t>(p * K + k)];
      for (int i = 0; i < F; ++i) {
        if (f >= 0 && f != i) continue;
        r.u_var[uk(p, k, i)] = n++;
        if (f < 0) x_var[uk(p, k, i)] = n++;
      }
    }
  LinearProgram& lp = r.lp;
  lp.vars = n;
  lp.maximize = true;
  lp.c.assign(static_cast<std::size_t>(n), 0.0);
  for (int p = 0; p < P; ++p)
    for (int i = 0; i < F; ++i) {
      const double w = wt.w[inst.pi(p, i)];
      lp.c[static_cast<std::size_t>(r.s_var[inst.pi(p, i)])] = w;
      for (int k = 0; k < K; ++k)
        if (r.u_var[uk(p, k, i)] >= 0) lp.c[static_cast<std::size_t>(r.u_var[uk(p, k, i)])] = w;
    }
  auto row = [&]() { return std::vector<double>(static_cast<std::size_t>(n), 0.0); };
  for (int p = 0; p < P; ++p)
    for (int i = 0; i < F; ++i) {
      auto a = row();
      a[static_cast<std::size_t>(r.s_var[inst.pi(p, i)])] = 1.0;
      lp.add_row(std::move(a), RowSense::Le, inst.mu_fcs * inst.chargers[inst.pi(p, i)] * inst.delta_h);
    }
  for (int p = 0; p < P; ++p)
    for (int k = 0; k < K; ++k) {
      const int prev = p == 0 ? -1 : fixed[static_cast<std::size_t>((p - 1) * K + k)];
      auto ell_bar = [&](int i) {
        if (p == 0) return inst.ell0(k, i);
        if (prev >= 0) return inst.ell(p, k, prev, i);
        double best = 0.0;
        for (int j = 0; j < F; ++j) best = std::max(best, inst.ell(p, k, j, i));
        return best;
      };
      const int f = fixed[static_cast<std::size_t>(p * K + k)];
      if (f >= 0) {
        auto a = row();
        a[static_cast<std::size_t>(r.u_var[uk(p, k, f)])] = 1.0;
        lp.add_row(std::move(a), RowSense::Le, inst.mu_mct * ell_bar(f));
        continue;
      }
      auto sum = row();
      for (int i = 0; i < F; ++i) {
        auto a = row();
        a[static_cast<std::size_t>(r.u_var[uk(p, k, i)])] = 1.0;
        a[static_cast<std::size_t>(x_var[uk(p, k, i)])] = -inst.mu_mct * ell_bar(i);
        lp.add_row(std::move(a), RowSense::Le, 0.0);
        sum[static_cast<std::size_t>(x_var[uk(p, k, i)])] = 1.0;
      }
      lp.add_row(std::move(sum), RowSense::Le, 1.0);
    }
  for (int i = 0; i < F; ++i) {
    auto a = row();
    double cap = inst.q0[static_cast<std::size_t>(i)];
    for (int p = 0; p < P; ++p) {
      a[static_cast<std::size_t>(r.s_var[inst.pi(p, i)])] = 1.0;
      for (int k = 0; k < K; ++k)
        if (r.u_var[uk(p, k, i)] >= 0) a[static_cast<std::size_t>(r.u_var[uk(p, k, i)])] = 1.0;
      cap += inst.arrivals[inst.pi(p, i)];
      lp.add_row(a, RowSense::Le, cap);
    }
  }
  for (int k = 0; k < K; ++k) {
    auto a = row();
    for (int p = 0; p < P; ++p)
      for (int i = 0; i < F; ++i)
        if (r.u_var[uk(p, k, i)] >= 0) a[static_cast<std::size_t>(r.u_var[uk(p, k, i)])] = 1.0;
    lp.add_row(std::move(a), RowSense::Le, inst.capability[static_cast<std::size_t>(k)]);
  }
  return r;
}

std::vector<int> initial_fixing(const MipInstance& inst) {
  std::vector<int> fixed(static_cast<std::size_t>(inst.epochs * inst.trucks), -1);
  for (int k = 0; k < inst.trucks; ++k) fixed[static_cast<std::size_t>(k)] = inst.fixed0[static_cast<std::size_t>(k)];
  return fixed;
}

}  // namespace

MipSolution solve_fixed(const MipInstance& inst, const std::vector<int>& x) {
  inst.validate();
  const int P = inst.epochs, K = inst.trucks, F = inst.stations;
  if (x.size() != static_cast<std::size_t>(P * K)) throw MipError("assignment has the wrong size");
  for (int v : x)
    if (v < 0 || v >= F) throw MipError("assignment out of range");
  const Weights wt = service_weights(inst);
  const Relaxation r = build_relaxation(inst, wt, x);
  LpSolution lp;
  try {
    lp = solve_lp(r.lp);
  } catch (const LpInfeasible& e) {
    throw MipInfeasible(e.what());
  }
  MipSolution sol;
  sol.x = x;
  sol.u.assign(static_cast<std::size_t>(P * K * F), 0.0);
  sol.s.assign(static_cast<std::size_t>(P * F), 0.0);
  for (std::size_t v = 0; v < sol.u.size(); ++v)
    if (r.u_var[v] >= 0) sol.u[v] = lp.x[static_cast<std::size_t>(r.u_var[v])];
  for (std::size_t v = 0; v < sol.s.size(); ++v) sol.s[v] = lp.x[static_cast<std::size_t>(r.s_var[v])];
  sol.q.assign(static_cast<std::size_t>((P + 1) * F), 0.0);
  for (int i = 0; i < F; ++i) {
    sol.q[inst.pi(0, i)] = inst.q0[static_cast<std::size_t>(i)];
    for (int p = 0; p < P; ++p) {
      double served = sol.s[inst.pi(p, i)];
      for (int k = 0; k < K; ++k) served += sol.u[static_cast<std::size_t>((p * K + k) * F + i)];
      const double next = sol.q[inst.pi(p, i)] + inst.arrivals[inst.pi(p, i)] - served;
      sol.q[inst.pi(p + 1, i)] = std::abs(next) < 1e-9 ? 0.0 : next;
    }
  }
  sol.objective = evaluate_objective(inst, sol.q);
  sol.root_bound = sol.objective;
  sol.exact = true;
  sol.nodes = 1;
  return sol;
}

MipSolution solve_heuristic(const MipInstance& inst) {
  inst.validate();
  const int P = inst.epochs, K = inst.trucks, F = inst.stations;
  const Weights wt = service_weights(inst);
  std::vector<int> x(static_cast<std::size_t>(P * K), 0);
  std::vector<double> q(inst.q0);
  std::vector<double> cap(inst.capability);
  std::vector<int> prev(static_cast<std::size_t>(K), -1);
  for (int p = 0; p < P; ++p) {
    std::vector<double> rem(static_cast<std::size_t>(F));
    for (int i = 0; i < F; ++i) {
      const double backlog = q[static_cast<std::size_t>(i)] + inst.arrivals[inst.pi(p, i)];
      rem[static_cast<std::size_t>(i)] =
          backlog - std::min(backlog, inst.mu_fcs * inst.chargers[inst.pi(p, i)] * inst.delta_h);
    }
    for (int k = 0; k < K; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      auto ell = [&](int i) { return p == 0 ? inst.ell0(k, i) : inst.ell(p, k, prev[kk], i); };
      int best = p == 0 ? inst.fixed0[kk] : -1;
      if (best < 0) {
        double best_gain = -1.0, best_ell = -1.0;
        for (int i = 0; i < F; ++i) {
          const double amount = std::min({inst.mu_mct * ell(i), rem[static_cast<std::size_t>(i)], cap[kk]});
          const double gain = wt.w[inst.pi(p, i)] * amount;
          if (gain > best_gain + 1e-12 || (std::abs(gain - best_gain) <= 1e-12 && ell(i) > best_ell)) {
            best_gain = gain;
            best_ell = ell(i);
            best = i;
          }
        }
      }
      const auto b = static_cast<std::size_t>(best);
      const double amount = std::min({inst.mu_mct * ell(best), rem[b], cap[kk]});
      rem[b] -= amount;
      cap[kk] -= amount;
      x[static_cast<std::size_t>(p * K + k)] = best;
      prev[kk] = best;
    }
    q = rem;
  }
  MipSolution sol = solve_fixed(inst, x);
  sol.exact = false;
  return sol;
}

MipSolution solve_exact(const MipInstance& inst, const MipOptions& opt) {
  inst.validate();
  const int P = inst.epochs, K = inst.trucks, F = inst.stations;
  const std::vector<int> start = initial_fixing(inst);
  std::vector<int> groups;  // branching order, epoch-major
  for (int g = 0; g < P * K; ++g)
    if (start[static_cast<std::size_t>(g)] < 0) groups.push_back(g);
  if (P * K > opt.max_groups)
    throw SizeLimit("exact solve limited to " + std::to_string(opt.max_groups) + " truck-epoch groups, got " +
                    std::to_string(P * K));
  const Weights wt = service_weights(inst);
  auto relax = [&](const std::vector<int>& fixed) {
    try {
      return solve_lp(build_relaxation(inst, wt, fixed).lp).objective;
    } catch (const LpInfeasible& e) {
      throw MipInfeasible(e.what());
    }
  };

  MipSolution best = solve_heuristic(inst);
  double incumbent = wt.base - best.objective;  // service value, maximised
  long nodes = 0;
  const double root = relax(start);
  ++nodes;
  const double root_bound = wt.base - root;

  struct Node {
    double bound;
    long seq;
    std::size_t depth;
    std::vector<int> fixed;
  };
  auto worse = [](const Node& a, const Node& b) { return a.bound < b.bound || (a.bound == b.bound && a.seq > b.seq); };
  std::priority_queue<Node, std::vector<Node>, decltype(worse)> open(worse);
  long seq = 0;
  bool complete = true;
  auto slack = [&]() { return 1e-9 * std::max(1.0, std::abs(incumbent)); };
  if (groups.empty()) {
    best = solve_fixed(inst, start);
  } else {
    open.push(Node{root, seq++, 0, start});
  }
  while (!open.empty()) {
    Node node = open.top();
    open.pop();
    if (node.bound <= incumbent + slack()) break;
    const int g = groups[node.depth];
    for (int i = 0; i < F; ++i) {
      if (nodes >= opt.node_limit) {
        complete = false;
        break;
      }
      std::vector<int> fixed = node.fixed;
      fixed[static_cast<std::size_t>(g)] = i;
      const double bound = relax(fixed);
      ++nodes;
      if (node.depth + 1 == groups.size()) {
        if (bound > incumbent + slack()) {
          incumbent = bound;
          best = solve_fixed(inst, fixed);
        }
      } else if (bound > incumbent + slack()) {
        open.push(Node{bound, seq++, node.depth + 1, std::move(fixed)});
      }
    }
    if (!complete) break;
  }
  best.exact = complete;
  best.nodes = nodes;
  best.root_bound = root_bound;
  return best;
}

MipSolution solve_mip(const MipInstance& inst, const MipOptions& opt) {
  if (inst.epochs * inst.trucks > opt.max_groups) {
    if (!opt.allow_heuristic)
      throw SizeLimit("instance exceeds the exact-solve limit of " + std::to_string(opt.max_groups) + " groups");
    return solve_heuristic(inst);
  }
  return solve_exact(inst, opt);
}

std::vector<std::string> check_solution(const MipInstance& inst, const MipSolution& sol, double tol) {
  std::vector<std::string> bad;
  const int P = inst.epochs, K = inst.trucks, F = inst.stations;
  auto fail = [&](const std::string& what) { bad.push_back(what); };
  if (sol.x.size() != static_cast<std::size_t>(P * K) || sol.u.size() != static_cast<std::size_t>(P * K * F) ||
      sol.s.size() != static_cast<std::size_t>(P * F) || sol.q.size() != static_cast<std::size_t>((P + 1) * F)) {
    fail("solution arrays have the wrong size");
    return bad;
  }
  auto near_le = [&](double lhs, double rhs) { return lhs <= rhs + tol * std::max(1.0, std::abs(rhs)); };
  // x as binaries; each truck on exactly one station.
  auto X = [&](int p, int k, int i) { return sol.x[static_cast<std::size_t>(p * K + k)] == i ? 1 : 0; };
  for (int p = 0; p < P; ++p)
    for (int k = 0; k < K; ++k) {
      int total = 0;
      for (int i = 0; i < F; ++i) total += X(p, k, i);
      if (total != 1) fail("assignment p=" + std::to_string(p) + " k=" + std::to_string(k));
    }
  for (int k = 0; k < K; ++k) {
    const int f = inst.fixed0[static_cast<std::size_t>(k)];
    if (f >= 0 && X(0, k, f) != 1) fail("fixed assignment k=" + std::to_string(k));
  }
  auto U = [&](int p, int k, int i) { return sol.u[static_cast<std::size_t>((p * K + k) * F + i)]; };
  for (int p = 0; p < P; ++p)
    for (int k = 0; k < K; ++k)
      for (int i = 0; i < F; ++i) {
        double cap = 0.0;
        if (p == 0) {
          cap = inst.mu_mct * inst.ell0(k, i) * X(0, k, i);
        } else {
          for (int j = 0; j < F; ++j) {
            // z is 1 exactly when both endpoints are; check the linking rows.
            const int z = X(p - 1, k, j) * X(p, k, i);
            if (z > X(p - 1, k, j) || z > X(p, k, i) || z < X(p - 1, k, j) + X(p, k, i) - 1)
              fail("transition p=" + std::to_string(p));
            cap += inst.mu_mct * inst.ell(p, k, j, i) * z;
          }
        }
        if (U(p, k, i) < -tol) fail("negative truck service");
        if (!near_le(U(p, k, i), cap))
          fail("truck service p=" + std::to_string(p) + " k=" + std::to_string(k) + " i=" + std::to_string(i));
      }
  for (int p = 0; p < P; ++p)
    for (int i = 0; i < F; ++i) {
      const double s = sol.s[inst.pi(p, i)];
      if (s < -tol) fail("negative fixed service");
      if (!near_le(s, inst.mu_fcs * inst.chargers[inst.pi(p, i)] * inst.delta_h)) fail("fixed service cap");
      double served = s;
      for (int k = 0; k < K; ++k) served += U(p, k, i);
      const double q = sol.q[inst.pi(p, i)];
      const double a = inst.arrivals[inst.pi(p, i)];
      if (!near_le(served, q + a)) fail("service exceeds demand p=" + std::to_string(p) + " i=" + std::to_string(i));
      const double next = q + a - served;
      if (std::abs(sol.q[inst.pi(p + 1, i)] - next) > tol * std::max(1.0, std::abs(next)))
        fail("queue recursion p=" + std::to_string(p) + " i=" + std::to_string(i));
    }
  for (int i = 0; i < F; ++i)
    if (std::abs(sol.q[inst.pi(0, i)] - inst.q0[static_cast<std::size_t>(i)]) > tol) fail("initial queue");
  for (double q : sol.q)
    if (q < -tol) fail("negative queue");
  for (int k = 0; k < K; ++k) {
    double total = 0.0;
    for (int p = 0; p < P; ++p)
      for (int i = 0; i < F; ++i) total += U(p, k, i);
    if (!near_le(total, inst.capability[static_cast<std::size_t>(k)])) fail("capability k=" + std::to_string(k));
  }
  const double obj = evaluate_objective(inst, sol.q);
  if (std::abs(obj - sol.objective) > tol * std::max(1.0, std::abs(obj))) fail("objective value");
  return bad;
}

// ------------------------------------------------------------------ LP file

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string vname(const char* p, std::initializer_list<int> idx) {
  std::string s = p;
  for (int i : idx) s += "_" + std::to_string(i);
  return s;
}

}  // namespace

LpModel build_lp_model(const MipInstance& inst) {
  inst.validate();
  const int P = inst.epochs, K = inst.trucks, F = inst.stations;
  LpModel m;
  auto X = [](int k, int i, int p) { return vname("x", {k, i, p}); };
  auto Z = [](int k, int j, int i, int p) { return vname("z", {k, j, i, p}); };
  auto U = [](int k, int i, int p) { return vname("U", {k, i, p}); };
  auto S = [](int i, int p) { return vname("S", {i, p}); };
  auto Q = [](int i, int p) { return vname("Q", {i, p}); };
  auto add = [](std::map<std::string, double>& row, const std::string& v, double c) {
    if (c != 0.0) row[v] += c;
  };
  for (int p = 0; p < P; ++p)
    for (int i = 0; i < F; ++i) {
      const ObjectiveCoeffs c = objective_coeffs(inst, i, p);
      add(m.objective, Q(i, p), c.a);
      add(m.objective, Q(i, p + 1), c.b);
      m.objective_constant += c.constant;
    }
  for (int k = 0; k < K; ++k)
    for (int p = 0; p < P; ++p) {
      LpModel::Row r{vname("assign", {k, p}), {}, RowSense::Eq, 1.0};
      for (int i = 0; i < F; ++i) add(r.coeffs, X(k, i, p), 1.0);
      m.rows.push_back(std::move(r));
    }
  for (int k = 0; k < K; ++k) {
    const int f = inst.fixed0[static_cast<std::size_t>(k)];
    if (f >= 0) m.rows.push_back(LpModel::Row{vname("fixed", {k}), {{X(k, f, 0), 1.0}}, RowSense::Eq, 1.0});
  }
  for (int p = 1; p < P; ++p)
    for (int k = 0; k < K; ++k)
      for (int j = 0; j < F; ++j)
        for (int i = 0; i < F; ++i) {
          m.rows.push_back({vname("trans1", {k, j, i, p}), {{Z(k, j, i, p), 1.0}, {X(k, j, p - 1), -1.0}}, RowSense::Le, 0.0});
          m.rows.push_back({vname("trans2", {k, j, i, p}), {{Z(k, j, i, p), 1.0}, {X(k, i, p), -1.0}}, RowSense::Le, 0.0});
          LpModel::Row r{vname("trans3", {k, j, i, p}), {{Z(k, j, i, p), 1.0}}, RowSense::Ge, -1.0};
          add(r.coeffs, X(k, j, p - 1), -1.0);
          add(r.coeffs, X(k, i, p), -1.0);
          m.rows.push_back(std::move(r));
        }
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < F; ++i) {
      LpModel::Row r{vname("mct", {k, i, 0}), {{U(k, i, 0), 1.0}}, RowSense::Le, 0.0};
      add(r.coeffs, X(k, i, 0), -inst.mu_mct * inst.ell0(k, i));
      m.rows.push_back(std::move(r));
      for (int p = 1; p < P; ++p) {
        LpModel::Row rp{vname("mct", {k, i, p}), {{U(k, i, p), 1.0}}, RowSense::Le, 0.0};
        for (int j = 0; j < F; ++j) add(rp.coeffs, Z(k, j, i, p), -inst.mu_mct * inst.ell(p, k, j, i));
        m.rows.push_back(std::move(rp));
      }
    }
  for (int i = 0; i < F; ++i)
    for (int p = 0; p < P; ++p) {
      LpModel::Row r{vname("service", {i, p}), {{S(i, p), 1.0}, {Q(i, p), -1.0}}, RowSense::Le,
                     inst.arrivals[inst.pi(p, i)]};
      LpModel::Row q{vname("queue", {i, p}), {{Q(i, p + 1), 1.0}, {Q(i, p), -1.0}, {S(i, p), 1.0}}, RowSense::Eq,
                     inst.arrivals[inst.pi(p, i)]};
      for (int k = 0; k < K; ++k) {
        add(r.coeffs, U(k, i, p), 1.0);
        add(q.coeffs, U(k, i, p), 1.0);
      }
      m.rows.push_back(std::move(r));
      m.rows.push_back(std::move(q));
    }
  for (int k = 0; k < K; ++k) {
    LpModel::Row r{vname("capability", {k}), {}, RowSense::Le, inst.capability[static_cast<std::size_t>(k)]};
    for (int p = 0; p < P; ++p)
      for (int i = 0; i < F; ++i) add(r.coeffs, U(k, i, p), 1.0);
    m.rows.push_back(std::move(r));
  }
  for (int i = 0; i < F; ++i) {
    const double q0 = inst.q0[static_cast<std::size_t>(i)];
    m.bounds[Q(i, 0)] = {q0, q0};
    for (int p = 0; p < P; ++p) m.bounds[S(i, p)] = {0.0, inst.mu_fcs * inst.chargers[inst.pi(p, i)] * inst.delta_h};
  }
  for (int k = 0; k < K; ++k)
    for (int p = 0; p < P; ++p)
      for (int i = 0; i < F; ++i) m.binaries.push_back(X(k, i, p));
  for (int k = 0; k < K; ++k)
    for (int p = 1; p < P; ++p)
      for (int j = 0; j < F; ++j)
        for (int i = 0; i < F; ++i) m.binaries.push_back(Z(k, j, i, p));
  return m;
}

namespace {

void write_terms(std::ostringstream& out, const std::map<std::string, double>& terms) {
  int n = 0;
  for (const auto& [name, c] : terms) {
    if (n > 0 && n % 6 == 0) out << "\n  ";
    out << (c < 0 ? " - " : (n == 0 ? " " : " + ")) << num(std::abs(c)) << ' ' << name;
    ++n;
  }
  if (n == 0) out << " 0";
}

const char* sense_str(RowSense s) {
  switch (s) {
    case RowSense::Le: return "<=";
    case RowSense::Ge: return ">=";
    case RowSense::Eq: return "=";
  }
  return "=";
}

}  // namespace

std::string write_lp(const LpModel& m) {
  std::ostringstream out;
  out << "\\ mobile charging truck allocation\n";
  out << "Minimize\n " << m.objective_name << ":";
  write_terms(out, m.objective);
  if (m.objective_constant != 0.0) out << (m.objective_constant < 0 ? " - " : " + ") << num(std::abs(m.objective_constant));
  out << "\nSubject To\n";
  for (const auto& r : m.rows) {
    out << ' ' << r.name << ":";
    write_terms(out, r.coeffs);
    out << ' ' << sense_str(r.sense) << ' ' << num(r.rhs) << '\n';
  }
  out << "Bounds\n";
  for (const auto& [name, b] : m.bounds) {
    if (b[0] == b[1])
      out << ' ' << name << " = " << num(b[0]) << '\n';
    else
      out << ' ' << num(b[0]) << " <= " << name << " <= " << num(b[1]) << '\n';
  }
  out << "Binaries\n";
  for (std::size_t i = 0; i < m.binaries.size(); ++i)
    out << (i % 8 == 0 ? (i == 0 ? " " : "\n ") : " ") << m.binaries[i];
  out << "\nEnd\n";
  return out.str();
}

namespace {

bool is_number(const std::string& s) {
  if (s.empty()) return false;
  char* end = nullptr;
  std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

double to_num(const std::string& s) {
  if (!is_number(s)) throw MipError("lp parse: expected a number, got '" + s + "'");
  return std::strtod(s.c_str(), nullptr);
}

// Parses "[name:] [+|-] [coef] var ..." into terms; returns the constant.
double parse_terms(const std::vector<std::string>& tok, std::size_t begin, std::size_t end,
                   std::map<std::string, double>& terms) {
  double sign = 1.0, coef = 1.0, constant = 0.0;
  bool have_coef = false;
  for (std::size_t i = begin; i < end; ++i) {
    const std::string& t = tok[i];
    if (t == "+" || t == "-") {
      if (have_coef) {
        constant += sign * coef;
        have_coef = false;
      }
      sign = t == "-" ? -1.0 : 1.0;
    } else if (is_number(t)) {
      if (have_coef) throw MipError("lp parse: two numbers in a row");
      coef = to_num(t);
      have_coef = true;
    } else {
      terms[t] += sign * (have_coef ? coef : 1.0);
      sign = 1.0;
      coef = 1.0;
      have_coef = false;
    }
  }
  if (have_coef) constant += sign * coef;
  // Written as "0" for an empty expression.
  return constant;
}

}  // namespace

LpModel parse_lp(const std::string& text) {
  enum class Sec { None, Obj, Rows, Bounds, Bin, End };
  LpModel m;
  m.objective_name.clear();
  std::istringstream in(text);
  std::string line;
  Sec sec = Sec::None;
  std::vector<std::string> pending;  // tokens of the current row
  auto flush_obj = [&]() {
    std::size_t b = 0;
    if (!pending.empty() && pending[0].back() == ':') {
      m.objective_name = pending[0].substr(0, pending[0].size() - 1);
      b = 1;
    }
    m.objective_constant = parse_terms(pending, b, pending.size(), m.objective);
    pending.clear();
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '\\') continue;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    const std::string head = tok[0];
    if (head == "Minimize" || head == "Maximize") {
      if (head == "Maximize") throw MipError("lp parse: only minimisation models are supported");
      sec = Sec::Obj;
      continue;
    }
    if (head == "Subject" && tok.size() == 2 && tok[1] == "To") {
      flush_obj();
      sec = Sec::Rows;
      continue;
    }
    if (head == "Bounds" || head == "Binaries" || head == "End") {
      if (sec == Sec::Obj) flush_obj();
      if (!pending.empty()) throw MipError("lp parse: unterminated constraint");
      sec = head == "Bounds" ? Sec::Bounds : head == "Binaries" ? Sec::Bin : Sec::End;
      continue;
    }
    switch (sec) {
      case Sec::Obj:
        pending.insert(pending.end(), tok.begin(), tok.end());
        break;
      case Sec::Rows: {
        pending.insert(pending.end(), tok.begin(), tok.end());
        const std::size_t n = pending.size();
        if (n >= 2 && (pending[n - 2] == "<=" || pending[n - 2] == ">=" || pending[n - 2] == "=") &&
            is_number(pending[n - 1])) {
          LpModel::Row r;
          std::size_t b = 0;
          if (pending[0].back() == ':') {
            r.name = pending[0].substr(0, pending[0].size() - 1);
            b = 1;
          }
          r.sense = pending[n - 2] == "<=" ? RowSense::Le : pending[n - 2] == ">=" ? RowSense::Ge : RowSense::Eq;
          const double c = parse_terms(pending, b, n - 2, r.coeffs);
          r.rhs = to_num(pending[n - 1]) - c;
          m.rows.push_back(std::move(r));
          pending.clear();
        }
        break;
      }
      case Sec::Bounds:
        if (tok.size() == 3 && tok[1] == "=") {
          const double v = to_num(tok[2]);
          m.bounds[tok[0]] = {v, v};
        } else if (tok.size() == 5 && tok[1] == "<=" && tok[3] == "<=") {
          m.bounds[tok[2]] = {to_num(tok[0]), to_num(tok[4])};
        } else {
          throw MipError("lp parse: unsupported bound '" + line + "'");
        }
        break;
      case Sec::Bin:
        m.binaries.insert(m.binaries.end(), tok.begin(), tok.end());
        break;
      case Sec::None:
      case Sec::End:
        throw MipError("lp parse: text outside a section");
    }
  }
  if (sec != Sec::End) throw MipError("lp parse: missing End");
  return m;
}

void export_lp_file(const MipInstance& inst, const std::string& path) { write_file(path, write_lp(build_lp_model(inst))); }

std::string solution_csv(const MipInstance& inst, const MipSolution& sol) {
  const int P = inst.epochs, K = inst.trucks, F = inst.stations;
  std::ostringstream out;
  out << "variable,value\n";
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < F; ++i)
      for (int p = 0; p < P; ++p)
        out << vname("x", {k, i, p}) << ',' << (sol.x[static_cast<std::size_t>(p * K + k)] == i ? 1 : 0) << '\n';
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < F; ++i)
      for (int p = 0; p < P; ++p)
        out << vname("U", {k, i, p}) << ',' << fmt_double(sol.u[static_cast<std::size_t>((p * K + k) * F + i)]) << '\n';
  for (int i = 0; i < F; ++i)
    for (int p = 0; p < P; ++p) out << vname("S", {i, p}) << ',' << fmt_double(sol.s[inst.pi(p, i)]) << '\n';
  for (int i = 0; i < F; ++i)
    for (int p = 0; p <= P; ++p) out << vname("Q", {i, p}) << ',' << fmt_double(sol.q[inst.pi(p, i)]) << '\n';
  out << "objective," << fmt_double(sol.objective) << '\n';
  return out.str();
}

// ----------------------------------------------------------------- profiles

std::vector<std::vector<double>> Profiles::arrival_grid() const {
  std::vector<std::vector<double>> g(static_cast<std::size_t>(epochs));
  for (int p = 0; p < epochs; ++p)
    for (int i = 0; i < stations; ++i) g[static_cast<std::size_t>(p)].push_back(arrival(p, i));
  return g;
}

Profiles forecast_profiles(const Scenario& scenario, const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw std::invalid_argument("forecast_profiles needs at least one run");
  Scenario s = scenario;
  s.fleet.trucks = 0;
  const RoadNetwork& net = s.network;
  Profiles pr;
  pr.epochs = s.epoch_count();
  pr.stations = static_cast<int>(net.station_count());
  pr.nodes = static_cast<int>(net.node_count());
  pr.runs = static_cast<int>(seeds.size());
  const auto PF = static_cast<std::size_t>(pr.epochs * pr.stations);
  pr.arrivals.assign(PF, 0.0);
  pr.chargers.assign(PF, 0.0);
  const std::size_t travel_n = static_cast<std::size_t>(pr.epochs * pr.nodes * pr.stations);
  std::vector<double> travel_sum(travel_n, 0.0);
  std::vector<int> travel_cnt(travel_n, 0);
  const int spe = s.steps_per_epoch();
  SimOptions opt;
  opt.record_trucks = false;
  for (std::uint64_t seed : seeds) {
    GreedyPolicy none;
    const EpisodeResult r = run_episode(s, none, seed, opt);
    for (int p = 0; p < pr.epochs; ++p) {
      const auto step = static_cast<std::size_t>(std::min(p * spe, static_cast<int>(r.trace.steps()) - 1));
      const std::span<const double> costs = r.field.row(step);
      for (int i = 0; i < pr.stations; ++i) {
        const std::size_t at = static_cast<std::size_t>(p * pr.stations + i);
        if (static_cast<std::size_t>(p) < r.arrivals.size()) pr.arrivals[at] += r.arrivals[static_cast<std::size_t>(p)][static_cast<std::size_t>(i)];
        pr.chargers[at] += r.trace.chargers[step * static_cast<std::size_t>(pr.stations) + static_cast<std::size_t>(i)];
      }
      for (int n = 0; n < pr.nodes; ++n) {
        const auto paths = shortest_paths_from(net, costs, n);
        for (int i = 0; i < pr.stations; ++i) {
          if (!r.stations[static_cast<std::size_t>(i)].available) continue;
          const double c = paths[static_cast<std::size_t>(net.stations()[static_cast<std::size_t>(i)])].cost;
          if (!is_reachable(c)) continue;
          const std::size_t at = static_cast<std::size_t>((p * pr.nodes + n) * pr.stations + i);
          travel_sum[at] += c / 60.0;
          ++travel_cnt[at];
        }
      }
    }
  }
  const double runs = static_cast<double>(seeds.size());
  for (double& v : pr.arrivals) v /= runs;
  for (double& v : pr.chargers) v /= runs;
  pr.travel_h.assign(travel_n, kUnreachable);
  for (std::size_t i = 0; i < travel_n; ++i)
    if (travel_cnt[i] > 0) pr.travel_h[i] = travel_sum[i] / travel_cnt[i];
  return pr;
}

// ------------------------------------------------------------------ drivers

std::optional<int> repair_target(const Observation& obs, int target) {
  std::optional<int> nearest;
  double best = kUnreachable;
  for (const StationObs& c : obs.candidates) {
    if (!is_reachable(c.travel_min)) continue;
    if (c.station == target) return target;
    if (c.travel_min < best) {
      best = c.travel_min;
      nearest = c.station;
    }
  }
  return nearest;
}

MipPolicy::MipPolicy(MipMode mode, Profiles profiles, MipPolicyOptions opt)
    : mode_(mode), profiles_(std::move(profiles)), opt_(opt) {}

namespace {

MipInstance base_instance(const Simulator& sim, int epochs, double start_h) {
  const Scenario& sc = sim.scenario();
  const int F = static_cast<int>(sim.stations().size());
  const int K = static_cast<int>(sim.trucks().size());
  MipInstance inst = MipInstance::sized(F, K, epochs);
  inst.delta_h = sc.epochs.epoch_h;
  inst.start_h = start_h;
  inst.hazard = sc.hazard;
  for (int i = 0; i < F; ++i) inst.zones[static_cast<std::size_t>(i)] = sim.stations()[static_cast<std::size_t>(i)].zone;
  for (int k = 0; k < K; ++k)
    inst.capability[static_cast<std::size_t>(k)] = sim.trucks()[static_cast<std::size_t>(k)].capability_kwh / kKwhPerVehicle;
  return inst;
}

}  // namespace

MipInstance offline_instance(const Simulator& sim, const Profiles& prof) {
  const int P = prof.epochs;
  const int F = prof.stations;
  if (F != static_cast<int>(sim.stations().size())) throw MipError("profiles do not match the scenario");
  MipInstance inst = base_instance(sim, P, 0.0);
  const auto& st = sim.stations();
  for (int i = 0; i < F; ++i) inst.q0[static_cast<std::size_t>(i)] = static_cast<double>(st[static_cast<std::size_t>(i)].queue.size());
  for (int p = 0; p < P; ++p)
    for (int i = 0; i < F; ++i) {
      inst.arrivals[inst.pi(p, i)] = prof.arrival(p, i);
      inst.chargers[inst.pi(p, i)] = prof.charger(p, i);
    }
  for (int k = 0; k < inst.trucks; ++k) {
    const NodeId at = sim.trucks()[static_cast<std::size_t>(k)].node;
    for (int i = 0; i < F; ++i) inst.l0[inst.ki(k, i)] = prof.travel(0, at, i);
    for (int p = 1; p < P; ++p)
      for (int j = 0; j < F; ++j)
        for (int i = 0; i < F; ++i)
          inst.relocation[inst.pkji(p, k, j, i)] = j == i ? 0.0 : prof.travel(p, st[static_cast<std::size_t>(j)].node, i);
  }
  return inst;
}

void MipPolicy::on_episode_start(const Simulator& sim) {
  trucks_ = static_cast<int>(sim.trucks().size());
  plan_.clear();
  if (mode_ != MipMode::Offline || trucks_ == 0) return;
  const MipSolution sol = solve_mip(offline_instance(sim, profiles_), opt_.solver);
  ++solves_;
  if (sol.exact) ++exact_solves_;
  plan_ = sol.x;
}

MipInstance MipPolicy::rolling_instance(const Simulator& sim, int epoch) const {
  const int total = profiles_.epochs;
  const int P = std::max(1, std::min(opt_.rolling_epochs, total - epoch));
  MipInstance inst = base_instance(sim, P, sim.now_h());
  const int F = inst.stations, K = inst.trucks;
  const auto& st = sim.stations();
  for (int i = 0; i < F; ++i) {
    const StationState& s = st[static_cast<std::size_t>(i)];
    const double now_m = s.available ? static_cast<double>(s.chargers) : 0.0;
    inst.q0[static_cast<std::size_t>(i)] = static_cast<double>(s.queue.size());
    for (int p = 0; p < P; ++p) {
      const int pe = std::min(epoch + p, total - 1);
      inst.arrivals[inst.pi(p, i)] = profiles_.arrival(pe, i);
      inst.chargers[inst.pi(p, i)] = p == 0 ? now_m : std::min(now_m, profiles_.charger(pe, i));
    }
  }
  for (int k = 0; k < K; ++k) {
    const TruckState& t = sim.trucks()[static_cast<std::size_t>(k)];
    const std::vector<double> travel = sim.station_travel_times(t.node);
    for (int i = 0; i < F; ++i) inst.l0[inst.ki(k, i)] = travel[static_cast<std::size_t>(i)] / 60.0;
    if (t.phase == TruckPhase::Serving) {
      inst.fixed0[static_cast<std::size_t>(k)] = t.target;
      const double left = std::min(inst.delta_h, t.service_remaining_min / 60.0);
      inst.l0[inst.ki(k, t.target)] = inst.delta_h - left;
    } else if (t.phase == TruckPhase::Traveling) {
      inst.fixed0[static_cast<std::size_t>(k)] = t.target;
    }
    for (int p = 1; p < P; ++p) {
      const int pe = std::min(epoch + p, total - 1);
      for (int j = 0; j < F; ++j)
        for (int i = 0; i < F; ++i)
          inst.relocation[inst.pkji(p, k, j, i)] = j == i ? 0.0 : profiles_.travel(pe, st[static_cast<std::size_t>(j)].node, i);
    }
  }
  return inst;
}

JointAction MipPolicy::decide(DecisionContext& ctx) {
  JointAction out;
  if (ctx.observations.empty()) return out;
  std::vector<int> targets;
  if (mode_ == MipMode::Offline) {
    if (plan_.empty()) return out;
    const int P = static_cast<int>(plan_.size()) / trucks_;
    const int p = std::min(ctx.epoch, P - 1);
    targets.assign(plan_.begin() + p * trucks_, plan_.begin() + (p + 1) * trucks_);
  } else {
    const MipInstance inst = rolling_instance(ctx.sim, ctx.epoch);
    const MipSolution sol = solve_mip(inst, opt_.solver);
    ++solves_;
    if (sol.exact) ++exact_solves_;
    targets.assign(sol.x.begin(), sol.x.begin() + trucks_);
  }
  for (const Observation& obs : ctx.observations) {
    const int want = targets[static_cast<std::size_t>(obs.truck)];
    const std::optional<int> go = repair_target(obs, want);
    if (!go) continue;
    if (*go != want) ++repairs_;
    out.emplace_back(obs.truck, *go);
  }
  return out;
}

}  // namespace armd
