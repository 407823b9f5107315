#pragma once

#include <vector>

#include <Eigen/Core>

namespace bessplan::conic::detail {

// Sparse LDL' factorization for quasi-definite matrices: the leading block is
// expected positive definite and the trailing block negative definite, so
// every symmetric permutation admits a factorization with 1x1 pivots. Pivots
// whose sign disagrees with the expected one are replaced by +/- delta.
//
// The matrix is described once by its upper-triangular entries (row <= col)
// as coordinate lists; duplicates are summed. Numeric values are later passed
// in the same order as the coordinates.
class QuasiDefiniteLdl {
 public:
  void analyze(int n, const std::vector<int>& rows, const std::vector<int>& cols,
               const std::vector<int>& pivot_signs);

  // Returns the number of regularized pivots.
  int factorize(const std::vector<double>& values, double delta, double eps);

  // Solves (L D L') x = rhs in place (original ordering).
  void solve(Eigen::VectorXd& rhs) const;

  int size() const { return n_; }
  long factor_nonzeros() const { return static_cast<long>(li_.size()); }

 private:
  int n_ = 0;
  std::vector<int> perm_;  // new -> old
  std::vector<int> pinv_;  // old -> new
  std::vector<int> ap_, ai_;
  std::vector<double> ax_;
  std::vector<int> slot_;  // coordinate -> position in ax_
  std::vector<int> sign_;  // permuted
  std::vector<int> lp_, li_, parent_, lnz_;
  std::vector<double> lx_, d_;
  std::vector<double> y_;
  std::vector<int> pattern_, flag_;
  mutable Eigen::VectorXd work_;
};

}  // namespace bessplan::conic::detail
