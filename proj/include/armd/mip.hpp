#pragma once

#include <array>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "armd/hazard.hpp"
#include "armd/lp.hpp"
#include "armd/simulator.hpp"

namespace armd {

// Fluid service rates: one vehicle per 18 min per charger.
inline constexpr double kMuFcs = 60.0 / 18.0;       // veh/h per fixed charger
inline constexpr double kMuMct = 3.0 * 60.0 / 18.0;  // veh/h per truck (3 chargers)
inline constexpr double kKwhPerVehicle = 36.0;

// Allocation problem over P epochs of length delta_h. Times in hours,
// quantities in vehicles. Index helpers give the flat layouts.
struct MipInstance {
  int stations = 0;
  int trucks = 0;
  int epochs = 0;
  double delta_h = 2.5;
  double start_h = 0.0;  // tau_0
  double mu_fcs = kMuFcs;
  double mu_mct = kMuMct;
  std::vector<double> arrivals;    // [p][i]
  std::vector<double> chargers;    // [p][i]
  std::vector<double> q0;          // [i]
  std::vector<double> l0;          // [k][i], kUnreachable allowed
  std::vector<double> relocation;  // [p][k][j][i]; p = 0 unused
  std::vector<double> capability;  // [k]
  // Trucks committed for epoch 0 (station index), -1 when free.
  std::vector<int> fixed0;
  HazardModel hazard;
  std::vector<Zone> zones;  // [i]

  std::size_t pi(int p, int i) const { return static_cast<std::size_t>(p * stations + i); }
  std::size_t ki(int k, int i) const { return static_cast<std::size_t>(k * stations + i); }
  std::size_t pkji(int p, int k, int j, int i) const {
    return static_cast<std::size_t>(((p * trucks + k) * stations + j) * stations + i);
  }
  double tau(int p) const { return start_h + p * delta_h; }
  // Effective service window max(0, delta - L).
  double ell0(int k, int i) const;
  double ell(int p, int k, int j, int i) const;

  // Empty instance with zeroed data of the right sizes.
  static MipInstance sized(int stations, int trucks, int epochs);
  void validate() const;
};

class MipError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class MipInfeasible : public MipError {
 public:
  using MipError::MipError;
};
class SizeLimit : public MipError {
 public:
  using MipError::MipError;
};

struct ObjectiveCoeffs {
  double a = 0.0;  // on Q^p
  double b = 0.0;  // on Q^{p+1}
  double constant = 0.0;
};

// Integral of R_i(t) times the linear queue interpolant over epoch p, split
// at the saturation time.
ObjectiveCoeffs objective_coeffs(const MipInstance& inst, int i, int p);

struct MipSolution {
  std::vector<int> x;          // [p][k] station index
  std::vector<double> u;       // [p][k][i]
  std::vector<double> s;       // [p][i]
  std::vector<double> q;       // [p][i], p = 0..P (Q^P closes the last epoch)
  double objective = 0.0;      // cumulative risk exposure
  double root_bound = 0.0;     // lower bound on the objective from the root relaxation
  bool exact = false;
  long nodes = 0;

  std::size_t pk(int p, int k, int trucks) const { return static_cast<std::size_t>(p * trucks + k); }
};

struct MipOptions {
  int max_groups = 12;     // exact solve limit on |K| * |P|
  long node_limit = 200000;
  bool allow_heuristic = false;  // fall back instead of throwing SizeLimit
};

// Best-first branch and bound over the assignment groups.
MipSolution solve_exact(const MipInstance& inst, const MipOptions& opt = {});
// Per-epoch greedy assignment, then one LP for the continuous variables.
MipSolution solve_heuristic(const MipInstance& inst);
// Optimal continuous variables for a complete assignment x[p][k].
MipSolution solve_fixed(const MipInstance& inst, const std::vector<int>& x);
// Exact when within the size limit, else the heuristic.
MipSolution solve_mip(const MipInstance& inst, const MipOptions& opt = {});

// Independent check of every constraint; empty when feasible.
std::vector<std::string> check_solution(const MipInstance& inst, const MipSolution& sol, double tol = 1e-6);
double evaluate_objective(const MipInstance& inst, const std::vector<double>& q);

// Full model in named-variable form, as written to an LP file.
struct LpModel {
  struct Row {
    std::string name;
    std::map<std::string, double> coeffs;
    RowSense sense = RowSense::Le;
    double rhs = 0.0;
  };
  std::string objective_name = "risk";
  std::map<std::string, double> objective;
  double objective_constant = 0.0;
  std::vector<Row> rows;
  std::map<std::string, std::array<double, 2>> bounds;  // lower, upper
  std::vector<std::string> binaries;
};

LpModel build_lp_model(const MipInstance& inst);
std::string write_lp(const LpModel& m);
LpModel parse_lp(const std::string& text);
void export_lp_file(const MipInstance& inst, const std::string& path);
std::string solution_csv(const MipInstance& inst, const MipSolution& sol);

// Mean No-MCT profiles per epoch.
struct Profiles {
  int epochs = 0;
  int stations = 0;
  int nodes = 0;
  std::vector<double> arrivals;  // [p][i]
  std::vector<double> chargers;  // [p][i] at epoch start
  std::vector<double> travel_h;  // [p][node][i], node to station
  int runs = 0;

  double arrival(int p, int i) const { return arrivals[static_cast<std::size_t>(p * stations + i)]; }
  double charger(int p, int i) const { return chargers[static_cast<std::size_t>(p * stations + i)]; }
  double travel(int p, NodeId n, int i) const {
    return travel_h[static_cast<std::size_t>((p * nodes + n) * stations + i)];
  }
  // [p][i] nested layout for AFD.
  std::vector<std::vector<double>> arrival_grid() const;
};

Profiles forecast_profiles(const Scenario& scenario, const std::vector<std::uint64_t>& seeds);

// Full-horizon instance at episode start, built from the profiles.
MipInstance offline_instance(const Simulator& sim, const Profiles& prof);

enum class MipMode { Offline, Rolling };

struct MipPolicyOptions {
  int rolling_epochs = 3;
  MipOptions solver{12, 300, true};
};

// OF-MIP (one plan from profiles) or RH-MIP (re-solved each epoch from the
// realized state, first epoch executed).
class MipPolicy : public DispatchPolicy {
 public:
  MipPolicy(MipMode mode, Profiles profiles, MipPolicyOptions opt = {});
  std::string name() const override { return mode_ == MipMode::Offline ? "of-mip" : "rh-mip"; }
  void on_episode_start(const Simulator& sim) override;
  JointAction decide(DecisionContext& ctx) override;

  const std::vector<int>& plan() const { return plan_; }
  long repairs() const { return repairs_; }
  long solves() const { return solves_; }
  long exact_solves() const { return exact_solves_; }

 private:
  MipInstance rolling_instance(const Simulator& sim, int epoch) const;

  MipMode mode_;
  Profiles profiles_;
  MipPolicyOptions opt_;
  std::vector<int> plan_;  // offline [p][k]
  int trucks_ = 0;
  long repairs_ = 0;
  long solves_ = 0;
  long exact_solves_ = 0;
};

// Target if it is a reachable candidate, else the nearest reachable
// candidate (ties by station id); nullopt when none is reachable.
std::optional<int> repair_target(const Observation& obs, int target);

}  // namespace armd
