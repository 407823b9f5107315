#pragma once

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "bessplan/acpf/residuals.hpp"
#include "bessplan/benders/master.hpp"
#include "bessplan/opf/subproblem.hpp"

namespace bessplan::benders {

// none: MILP master, SOC subproblems, relative-gap stop.
// relaxed_socp: U relaxed, SOC subproblems, absolute-gap stop.
// dc_lp: U relaxed, DC subproblems, absolute-gap stop.
enum class ValidationMode { none, relaxed_socp, dc_lp };
const char* to_string(ValidationMode m);
ValidationMode parse_validation_mode(const std::string& s);

struct GbdConfig {
  opf::OpfWeights weights;
  ValidationMode mode = ValidationMode::none;
  double capex_scale = 1.0;
  double alpha_floor = 0.0;
  double epsilon = 5e-3;
  double delta = 1e-1;
  double gap_floor = 1e-9;  // absolute gap accepted when LB is ~0
  // Total linking slack (p.u.) above which a stalled subproblem counts as
  // infeasible.
  double infeasibility_tol = 1e-7;
  int workers = 1;
  int max_iterations = 500;
  bool refine = true;
  conic::SolverSettings solver;
  acpf::AcpfOptions acpf;
};

struct IterationRecord {
  int iteration = 0;
  double lb = 0.0;
  std::optional<double> ub;
  std::optional<double> gap;  // relative
  int feasible_days = 0;
  int optimality_cuts = 0;
  int feasibility_cuts = 0;
  double master_time = 0.0;
  double max_subproblem_time = 0.0;
  double total_subproblem_time = 0.0;
  double stage_wall_time = 0.0;
  int master_nodes = 0;

  std::string to_json() const;  // one line
};

struct BendersState {
  int iteration = 0;
  CutStore cuts;
  std::vector<double> lb_history;
  std::vector<std::optional<double>> ub_history;
  std::set<std::pair<int, int>> phi;  // (day, iteration) with a feasible subproblem
  std::vector<IterationRecord> trace;
};

struct DayOutcome {
  bool feasible = false;
  double opex = 0.0;
  double solve_time = 0.0;
  conic::SolveStatus status = conic::SolveStatus::numerical_failure;
};

struct Bounds {
  double lb = 0.0;
  std::optional<double> ub;
};

Bounds compute_bounds(const MasterSolution& master, const std::vector<DayOutcome>& days,
                      double capex_scale);

// day_infeasible: some day stays infeasible for every storage decision
// (its feasibility subproblem has no solution).
enum class PlanStatus {
  converged,
  iteration_cap,
  numerical_failure,
  master_infeasible,
  day_infeasible
};
const char* to_string(PlanStatus s);

struct PlanResult {
  PlanStatus status = PlanStatus::numerical_failure;
  std::string message;
  BendersState state;
  MasterSolution master;
  Eigen::VectorXd day_opex;
  double lb = 0.0;
  std::optional<double> ub;
  std::vector<opf::OperatingPoint> operating_points;
  std::vector<acpf::RecoveryResult> refinement;
  bool refined = false;
  double refined_opex = 0.0;

  bool converged() const { return status == PlanStatus::converged; }
  bool refinement_ok() const;
  bool lb_nondecreasing(double tol = 1e-6) const;
};

PlanResult run_gbd(const NetworkModel& net, const std::vector<opf::DayData>& days,
                   const GbdConfig& config);

// Monolithic oracle over the whole horizon with U relaxed to [0, 1].
struct CentralizedSolution {
  conic::SolveStatus status = conic::SolveStatus::numerical_failure;
  Eigen::VectorXd u, w, c;
  double objective = 0.0;
  double capex = 0.0;
  double solve_time = 0.0;
  std::vector<opf::OperatingPoint> days;
};

CentralizedSolution solve_centralized(const NetworkModel& net,
                                      const std::vector<opf::DayData>& days,
                                      const GbdConfig& config);

}  // namespace bessplan::benders
