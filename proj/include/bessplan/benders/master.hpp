#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bessplan/conic/program.hpp"
#include "bessplan/network.hpp"
#include "bessplan/opf/cuts.hpp"

namespace bessplan::benders {

class MasterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CutStore {
  int num_sites = 0;
  int num_days = 0;
  std::vector<opf::OptimalityCut> optimality;
  std::vector<opf::FeasibilityCut> feasibility;

  std::size_t size() const { return optimality.size() + feasibility.size(); }
  // Raises MasterError when a cut has the wrong dimension or day.
  void check() const;
};

struct MasterOptions {
  double alpha_floor = 0.0;
  double capex_scale = 1.0;
  bool relax_integrality = false;
  double tie_break = 1e-9;  // per site id, on U
  double gap_abs = 1e-6;
  double integrality_tol = 1e-6;
  int max_nodes = 100000;
  conic::SolverSettings lp;
};

enum class MasterStatus { optimal, infeasible, failed };
const char* to_string(MasterStatus s);

struct MasterSolution {
  MasterStatus status = MasterStatus::failed;
  Eigen::VectorXd u, w, c, alpha;
  double capex = 0.0;      // sum of IC_p W + IC_e C
  double objective = 0.0;  // capex_scale * capex + sum alpha
  int nodes = 0;
  int lp_solves = 0;
  double solve_time = 0.0;
  std::vector<std::string> report;  // infeasible: constraints in the certificate
  std::string message;
};

// Mixed-integer master over U (binary), W, C, alpha. Branching bounds on U
// are parameters of one compiled LP.
class MasterProblem {
 public:
  MasterProblem(const std::vector<CandidateSite>& sites, const CutStore& cuts,
                const MasterOptions& options);

  const conic::Program& program() const { return program_; }
  int num_sites() const { return static_cast<int>(sites_.size()); }
  int num_days() const { return num_days_; }
  const MasterOptions& options() const { return options_; }

  // LP with lo <= U <= hi.
  MasterSolution solve_relaxation(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) const;
  // Branch and bound (or the LP when integrality is relaxed).
  MasterSolution solve() const;
  // Minimum over all 2^S fixed U patterns; test oracle for small S.
  MasterSolution enumerate() const;

 private:
  std::vector<CandidateSite> sites_;
  int num_days_;
  MasterOptions options_;
  conic::Program program_;
  std::shared_ptr<const conic::CompiledProgram> compiled_;
  std::vector<conic::Var> u_, w_, c_, alpha_;
  std::vector<conic::Param> lo_, hi_;
};

MasterProblem build_master(const std::vector<CandidateSite>& sites, const CutStore& cuts,
                           const MasterOptions& options);
MasterSolution solve_master(const MasterProblem& master);

}  // namespace bessplan::benders
