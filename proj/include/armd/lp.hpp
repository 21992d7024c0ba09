#pragma once

#include <stdexcept>
#include <vector>

namespace armd {

enum class RowSense { Le, Ge, Eq };

// Dense LP over x >= 0: optimise c.x subject to rows a_r.x (sense) b_r.
struct LinearProgram {
  int vars = 0;
  bool maximize = false;
  std::vector<double> c;
  std::vector<std::vector<double>> rows;
  std::vector<RowSense> sense;
  std::vector<double> rhs;

  // Appends a row; missing trailing coefficients are zero.
  void add_row(std::vector<double> coeffs, RowSense s, double b);
};

struct LpSolution {
  double objective = 0.0;
  std::vector<double> x;
  int pivots = 0;
};

class LpInfeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LpUnbounded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Two-phase tableau simplex with Bland's rule.
LpSolution solve_lp(const LinearProgram& lp, double tol = 1e-9);

}  // namespace armd
