#include "armd/lp.hpp"

#include <cmath>
#include <limits>

namespace armd {

void LinearProgram::add_row(std::vector<double> coeffs, RowSense s, double b) {
  if (coeffs.size() > static_cast<std::size_t>(vars)) throw std::invalid_argument("lp row wider than variable count");
  coeffs.resize(static_cast<std::size_t>(vars), 0.0);
  rows.push_back(std::move(coeffs));
  sense.push_back(s);
  rhs.push_back(b);
}

namespace {

class Tableau {
 public:
  Tableau(int m, int n) : m_(m), n_(n), a_(static_cast<std::size_t>(m + 1) * static_cast<std::size_t>(n + 1), 0.0) {}

  double& at(int r, int c) { return a_[static_cast<std::size_t>(r) * static_cast<std::size_t>(n_ + 1) + static_cast<std::size_t>(c)]; }
  double& rhs(int r) { return at(r, n_); }
  // Row m holds the reduced costs of the minimisation objective.
  double& cost(int c) { return at(m_, c); }

  void pivot(int pr, int pc) {
    const double p = at(pr, pc);
    for (int c = 0; c <= n_; ++c) at(pr, c) /= p;
    for (int r = 0; r <= m_; ++r) {
      if (r == pr) continue;
      const double f = at(r, pc);
      if (f == 0.0) continue;
      double* row = &at(r, 0);
      const double* src = &at(pr, 0);
      for (int c = 0; c <= n_; ++c) row[c] -= f * src[c];
      row[pc] = 0.0;
    }
  }

  int m_, n_;

 private:
  std::vector<double> a_;
};

// Minimises the tableau cost row over columns with allowed[c]; Bland's rule.
int run_simplex(Tableau& t, std::vector<int>& basis, const std::vector<char>& allowed, double tol) {
  int pivots = 0;
  for (;;) {
    int pc = -1;
    for (int c = 0; c < t.n_; ++c)
      if (allowed[static_cast<std::size_t>(c)] && t.cost(c) < -tol) {
        pc = c;
        break;
      }
    if (pc < 0) return pivots;
    int pr = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < t.m_; ++r) {
      const double a = t.at(r, pc);
      if (a <= tol) continue;
      const double ratio = t.rhs(r) / a;
      if (ratio < best - tol || (std::abs(ratio - best) <= tol && basis[static_cast<std::size_t>(r)] < basis[static_cast<std::size_t>(pr)])) {
        best = ratio;
        pr = r;
      }
    }
    if (pr < 0) throw LpUnbounded("lp is unbounded");
    t.pivot(pr, pc);
    basis[static_cast<std::size_t>(pr)] = pc;
    ++pivots;
  }
}

}  // namespace

LpSolution solve_lp(const LinearProgram& lp, double tol) {
  const int n = lp.vars;
  const int m = static_cast<int>(lp.rows.size());
  if (static_cast<int>(lp.c.size()) != n || lp.sense.size() != lp.rows.size() || lp.rhs.size() != lp.rows.size())
    throw std::invalid_argument("lp dimensions inconsistent");

  // Normalise to b >= 0.
  std::vector<std::vector<double>> a = lp.rows;
  std::vector<RowSense> sense = lp.sense;
  std::vector<double> b = lp.rhs;
  int n_slack = 0, n_art = 0;
  for (int r = 0; r < m; ++r) {
    auto ri = static_cast<std::size_t>(r);
    if (a[ri].size() != static_cast<std::size_t>(n)) throw std::invalid_argument("lp row width mismatch");
    if (b[ri] < 0.0) {
      for (double& v : a[ri]) v = -v;
      b[ri] = -b[ri];
      if (sense[ri] == RowSense::Le)
        sense[ri] = RowSense::Ge;
      else if (sense[ri] == RowSense::Ge)
        sense[ri] = RowSense::Le;
    }
    if (sense[ri] != RowSense::Eq) ++n_slack;
    if (sense[ri] != RowSense::Le) ++n_art;
  }
  const int art0 = n + n_slack;
  const int cols = art0 + n_art;
  Tableau t(m, cols);
  std::vector<int> basis(static_cast<std::size_t>(m), -1);
  int s = n, ar = art0;
  for (int r = 0; r < m; ++r) {
    auto ri = static_cast<std::size_t>(r);
    for (int c = 0; c < n; ++c) t.at(r, c) = a[ri][static_cast<std::size_t>(c)];
    t.rhs(r) = b[ri];
    if (sense[ri] == RowSense::Le) {
      t.at(r, s) = 1.0;
      basis[ri] = s++;
    } else {
      if (sense[ri] == RowSense::Ge) t.at(r, s++) = -1.0;
      t.at(r, ar) = 1.0;
      basis[ri] = ar++;
    }
  }

  LpSolution sol;
  std::vector<char> allowed(static_cast<std::size_t>(cols), 1);
  if (n_art > 0) {
    // Phase 1: minimise the artificial sum.
    for (int r = 0; r < m; ++r)
      if (basis[static_cast<std::size_t>(r)] >= art0)
        for (int c = 0; c <= cols; ++c)
          if (c < art0 || c == cols) t.at(m, c) -= t.at(r, c);
    sol.pivots += run_simplex(t, basis, allowed, tol);
    const double scale = 1.0 + std::abs(t.rhs(m));
    if (-t.rhs(m) > tol * 1e3 * scale) throw LpInfeasible("lp is infeasible");
    // Drive remaining artificials out of the basis.
    for (int r = 0; r < m; ++r) {
      if (basis[static_cast<std::size_t>(r)] < art0) continue;
      for (int c = 0; c < art0; ++c)
        if (std::abs(t.at(r, c)) > tol) {
          t.pivot(r, c);
          basis[static_cast<std::size_t>(r)] = c;
          ++sol.pivots;
          break;
        }
    }
    for (int c = art0; c < cols; ++c) allowed[static_cast<std::size_t>(c)] = 0;
  }

  // Phase 2 cost row: minimise sign * c.x.
  const double sign = lp.maximize ? -1.0 : 1.0;
  for (int c = 0; c <= cols; ++c) t.at(m, c) = 0.0;
  for (int c = 0; c < n; ++c) t.at(m, c) = sign * lp.c[static_cast<std::size_t>(c)];
  for (int r = 0; r < m; ++r) {
    const int bc = basis[static_cast<std::size_t>(r)];
    const double f = t.at(m, bc);
    if (f == 0.0) continue;
    for (int c = 0; c <= cols; ++c) t.at(m, c) -= f * t.at(r, c);
  }
  sol.pivots += run_simplex(t, basis, allowed, tol);

  sol.x.assign(static_cast<std::size_t>(n), 0.0);
  for (int r = 0; r < m; ++r) {
    const int bc = basis[static_cast<std::size_t>(r)];
    if (bc < n) sol.x[static_cast<std::size_t>(bc)] = std::max(0.0, t.rhs(r));
  }
  sol.objective = 0.0;
  for (int c = 0; c < n; ++c) sol.objective += lp.c[static_cast<std::size_t>(c)] * sol.x[static_cast<std::size_t>(c)];
  return sol;
}

}  // namespace armd
