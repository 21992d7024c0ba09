#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "armd/mip.hpp"

// Reference evaluation of the allocation model, built from the instance data
// without the solver's internals.
namespace oracle {

inline double risk(const armd::HazardModel& h, armd::Zone z, double t) {
  double off = h.offset_safe_h;
  if (z == armd::Zone::A) off = h.offset_a_h;
  if (z == armd::Zone::B) off = h.offset_b_h;
  if (z == armd::Zone::C) off = h.offset_c_h;
  const double H = h.landfall_h - t + off;
  return H <= 0 ? 1.0 : std::exp(-H / h.tau_h);
}

inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 2000) {
  if (b <= a) return 0.0;
  const double hh = (b - a) / n;
  double s = f(a) + f(b);
  for (int k = 1; k < n; ++k) s += (k % 2 ? 4.0 : 2.0) * f(a + k * hh);
  return s * hh / 3.0;
}

// Weights on Q^p and Q^{p+1} of the risk-weighted linear queue interpolant.
inline std::pair<double, double> coeffs(const armd::MipInstance& in, int i, int p) {
  const armd::Zone z = in.zones[std::size_t(i)];
  const double t0 = in.start_h + p * in.delta_h, t1 = t0 + in.delta_h;
  double off = in.hazard.offset_safe_h;
  if (z == armd::Zone::A) off = in.hazard.offset_a_h;
  if (z == armd::Zone::B) off = in.hazard.offset_b_h;
  if (z == armd::Zone::C) off = in.hazard.offset_c_h;
  const double kink = std::clamp(in.hazard.landfall_h + off, t0, t1);
  auto lo = [&](double t) { return risk(in.hazard, z, t) * (t1 - t) / in.delta_h; };
  auto hi = [&](double t) { return risk(in.hazard, z, t) * (t - t0) / in.delta_h; };
  return {simpson(lo, t0, kink) + simpson(lo, kink, t1), simpson(hi, t0, kink) + simpson(hi, kink, t1)};
}

inline double cap(double l, double delta) { return armd::is_reachable(l) ? std::max(0.0, delta - l) : 0.0; }

// Optimal risk for one full assignment x[p*K+k], as an LP over U, S and
// Q^1..Q^P. Returns +inf when infeasible.
inline double assignment_value(const armd::MipInstance& in, const std::vector<int>& x) {
  const int P = in.epochs, K = in.trucks, F = in.stations;
  const int nU = P * K * F, nS = P * F;
  auto U = [&](int p, int k, int i) { return (p * K + k) * F + i; };
  auto S = [&](int p, int i) { return nU + p * F + i; };
  auto Q = [&](int p, int i) { return nU + nS + (p - 1) * F + i; };  // p >= 1
  armd::LinearProgram lp;
  lp.vars = nU + 2 * nS;
  lp.c.assign(std::size_t(lp.vars), 0.0);
  double constant = 0.0;
  for (int p = 0; p < P; ++p)
    for (int i = 0; i < F; ++i) {
      auto [a, b] = coeffs(in, i, p);
      if (p == 0)
        constant += a * in.q0[std::size_t(i)];
      else
        lp.c[std::size_t(Q(p, i))] += a;
      lp.c[std::size_t(Q(p + 1, i))] += b;
    }
  auto row = [&] { return std::vector<double>(std::size_t(lp.vars), 0.0); };
  for (int p = 0; p < P; ++p)
    for (int k = 0; k < K; ++k) {
      const int at = x[std::size_t(p * K + k)];
      for (int i = 0; i < F; ++i) {
        double c = 0.0;
        if (at == i) {
          const double l = p == 0 ? in.l0[std::size_t(k * F + i)]
                                  : in.relocation[std::size_t(((p * K + k) * F + x[std::size_t((p - 1) * K + k)]) * F + i)];
          c = in.mu_mct * cap(l, in.delta_h);
        }
        auto r = row();
        r[std::size_t(U(p, k, i))] = 1;
        lp.add_row(r, armd::RowSense::Le, c);
      }
    }
  for (int p = 0; p < P; ++p)
    for (int i = 0; i < F; ++i) {
      const double A = in.arrivals[std::size_t(p * F + i)];
      auto r = row();
      r[std::size_t(S(p, i))] = 1;
      lp.add_row(r, armd::RowSense::Le, in.mu_fcs * in.chargers[std::size_t(p * F + i)] * in.delta_h);
      // Served within the backlog.
      auto d = row();
      d[std::size_t(S(p, i))] = 1;
      for (int k = 0; k < K; ++k) d[std::size_t(U(p, k, i))] = 1;
      double rhs = A;
      if (p == 0)
        rhs += in.q0[std::size_t(i)];
      else
        d[std::size_t(Q(p, i))] = -1;
      lp.add_row(d, armd::RowSense::Le, rhs);
      // Queue recursion.
      auto e = row();
      e[std::size_t(Q(p + 1, i))] = 1;
      e[std::size_t(S(p, i))] = 1;
      for (int k = 0; k < K; ++k) e[std::size_t(U(p, k, i))] = 1;
      double erhs = A;
      if (p == 0)
        erhs += in.q0[std::size_t(i)];
      else
        e[std::size_t(Q(p, i))] = -1;
      lp.add_row(e, armd::RowSense::Eq, erhs);
    }
  for (int k = 0; k < K; ++k) {
    auto r = row();
    for (int p = 0; p < P; ++p)
      for (int i = 0; i < F; ++i) r[std::size_t(U(p, k, i))] = 1;
    lp.add_row(r, armd::RowSense::Le, in.capability[std::size_t(k)]);
  }
  try {
    return armd::solve_lp(lp).objective + constant;
  } catch (const armd::LpInfeasible&) {
    return INFINITY;
  }
}

// Minimum over every assignment that honours the epoch-0 commitments.
inline double brute_force(const armd::MipInstance& in, long* assignments = nullptr) {
  const int G = in.epochs * in.trucks;
  std::vector<int> x(std::size_t(G), 0);
  double best = INFINITY;
  long count = 0;
  std::function<void(int)> rec = [&](int g) {
    if (g == G) {
      ++count;
      best = std::min(best, assignment_value(in, x));
      return;
    }
    const int fixed = g < in.trucks ? in.fixed0[std::size_t(g)] : -1;
    for (int i = 0; i < in.stations; ++i) {
      if (fixed >= 0 && i != fixed) continue;
      x[std::size_t(g)] = i;
      rec(g + 1);
    }
  };
  rec(0);
  if (assignments) *assignments = count;
  return best;
}

inline armd::MipInstance random_instance(armd::Rng& rng, int F, int K, int P) {
  auto in = armd::MipInstance::sized(F, K, P);
  in.delta_h = 2.5;
  in.start_h = 30 + 15 * rng.uniform();
  const armd::Zone zs[4] = {armd::Zone::A, armd::Zone::B, armd::Zone::C, armd::Zone::Safe};
  for (int i = 0; i < F; ++i) {
    in.zones[std::size_t(i)] = zs[rng.index(4)];
    in.q0[std::size_t(i)] = double(rng.index(20));
  }
  for (int p = 0; p < P; ++p)
    for (int i = 0; i < F; ++i) {
      in.arrivals[std::size_t(p * F + i)] = 30 * rng.uniform();
      in.chargers[std::size_t(p * F + i)] = double(rng.index(3));
    }
  for (auto& l : in.l0) l = rng.bernoulli(0.1) ? armd::kUnreachable : 2.0 * rng.uniform();
  for (int p = 1; p < P; ++p)
    for (int k = 0; k < K; ++k)
      for (int j = 0; j < F; ++j)
        for (int i = 0; i < F; ++i) in.relocation[in.pkji(p, k, j, i)] = i == j ? 0.0 : 2.0 * rng.uniform();
  for (auto& u : in.capability) u = 20 + 80 * rng.uniform();
  for (int k = 0; k < K; ++k)
    if (rng.bernoulli(0.3)) in.fixed0[std::size_t(k)] = int(rng.index(std::size_t(F)));
  return in;
}

}  // namespace oracle
