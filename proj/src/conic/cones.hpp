#pragma once

#include <vector>

#include <Eigen/Core>

#include "bessplan/conic/cone_solver.hpp"

namespace bessplan::conic::detail {

// Nesterov-Todd scaling W (symmetric, block diagonal) with W z = W^{-1} s = lambda.
// Lorentz blocks are eta * Wbar where Wbar = [a w1'; w1 I + w1 w1'/(1+a)] and
// a^2 - |w1|^2 = 1.
struct NtScaling {
  Eigen::VectorXd orthant;  // sqrt(s/z)
  std::vector<double> eta;
  std::vector<Eigen::VectorXd> wbar;
  Eigen::VectorXd lambda;
};

class ConeOps {
 public:
  explicit ConeOps(const ConeDims& dims);

  const ConeDims& dims() const { return dims_; }
  int size() const { return size_; }
  int soc_offset(int k) const { return offsets_[k]; }

  Eigen::VectorXd identity() const;

  // Largest alpha >= 0 with u + alpha du in K (may be +inf). u must be interior.
  double max_step(const Eigen::VectorXd& u, const Eigen::VectorXd& du) const;

  // inf{alpha : u + alpha e in K}.
  double interior_margin(const Eigen::VectorXd& u) const;

  bool interior(const Eigen::VectorXd& u) const;

  // Returns false if s or z are not strictly interior.
  bool compute_scaling(const Eigen::VectorXd& s, const Eigen::VectorXd& z, NtScaling& w) const;

  void apply_w(const NtScaling& w, const Eigen::VectorXd& v, Eigen::VectorXd& out) const;
  void apply_w_inv(const NtScaling& w, const Eigen::VectorXd& v, Eigen::VectorXd& out) const;

  // Jordan product u o v, and its inverse u \ v (solves u o x = v).
  void jordan_product(const Eigen::VectorXd& u, const Eigen::VectorXd& v, Eigen::VectorXd& out) const;
  void jordan_divide(const Eigen::VectorXd& u, const Eigen::VectorXd& v, Eigen::VectorXd& out) const;

  // Dense W^2 block of Lorentz cone k.
  Eigen::MatrixXd soc_w_squared(const NtScaling& w, int k) const;

 private:
  ConeDims dims_;
  int size_ = 0;
  std::vector<int> offsets_;
};

}  // namespace bessplan::conic::detail
