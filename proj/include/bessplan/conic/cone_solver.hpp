#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace bessplan::conic {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

// Cone K = R^l_+ x Q^{q_1} x ... x Q^{q_k}, stacked in that order.
struct ConeDims {
  int nonneg = 0;
  std::vector<int> soc;

  int total() const;
  // Barrier degree: one per orthant coordinate and one per Lorentz cone.
  int degree() const;
};

// Standard-form cone program
//
//   minimize    c'x
//   subject to  A x = b
//               G x + s = h,   s in K
//
// with dual
//
//   maximize   -b'y - h'z
//   subject to  A'y + G'z + c = 0,   z in K.
struct ConeProblemData {
  Eigen::VectorXd c;
  SparseMatrix A;
  Eigen::VectorXd b;
  SparseMatrix G;
  Eigen::VectorXd h;
  ConeDims cones;

  int num_variables() const { return static_cast<int>(c.size()); }
  int num_equalities() const { return static_cast<int>(b.size()); }
  int num_cone_rows() const { return static_cast<int>(h.size()); }
};

enum class SolveStatus { optimal, infeasible, unbounded, numerical_failure };

const char* to_string(SolveStatus status);

struct SolverSettings {
  double feastol = 1e-8;
  double abstol = 1e-8;
  double reltol = 1e-8;
  // Fallback thresholds accepted when the iteration stalls before reaching
  // full accuracy. The result is flagged reduced_accuracy.
  double feastol_inaccurate = 1e-4;
  double abstol_inaccurate = 5e-5;
  double reltol_inaccurate = 5e-5;
  int max_iterations = 150;
  bool equilibrate = true;
  double static_regularization = 1e-9;
  double dynamic_regularization = 1e-8;
  int refinement_steps = 10;
};

struct ConeSolverResult {
  SolveStatus status = SolveStatus::numerical_failure;
  bool reduced_accuracy = false;
  // On optimal: primal/dual solution. On infeasible: (y, z) is a Farkas
  // certificate with b'y + h'z = -1. On unbounded: (x, s) is a ray with
  // c'x = -1.
  Eigen::VectorXd x, y, z, s;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  std::string diagnostics;
};

// Backend boundary: anything that solves a ConeProblemData.
class ConeBackend {
 public:
  virtual ~ConeBackend() = default;
  virtual ConeSolverResult solve(const ConeProblemData& data,
                                 const SolverSettings& settings) const = 0;
  virtual std::string name() const = 0;
};

// Primal-dual interior-point method on the homogeneous self-dual embedding
// with Nesterov-Todd scaling and Mehrotra predictor-corrector steps.
class InteriorPointBackend final : public ConeBackend {
 public:
  ConeSolverResult solve(const ConeProblemData& data,
                         const SolverSettings& settings) const override;
  std::string name() const override { return "hsde-ipm"; }
};

std::shared_ptr<const ConeBackend> default_backend();

}  // namespace bessplan::conic
