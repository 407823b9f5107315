#pragma once

#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "bessplan/conic/program.hpp"
#include "bessplan/opf/subproblem.hpp"

namespace bessplan::opf {

class CutError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Gamma(W, C) = opex + lambda'(W - W_hat) + mu'(C - C_hat)
struct OptimalityCut {
  int day = 0;
  int iteration = 0;
  double opex = 0.0;
  Eigen::VectorXd lambda, mu;
  Eigen::VectorXd w_hat, c_hat;

  double value(const Eigen::VectorXd& w, const Eigen::VectorXd& c) const;
  double anchor_value() const { return opex; }
};

// Upsilon(W, C) = v + nu'(W - W_hat) + xi'(C - C_hat) <= 0 with
// v = w_slack * sum(s_W + s_C).
struct FeasibilityCut {
  int day = 0;
  int iteration = 0;
  Eigen::VectorXd slack_w, slack_c;
  Eigen::VectorXd nu, xi;
  Eigen::VectorXd w_hat, c_hat;
  double w_slack = 0.0;

  double violation_at_anchor() const;
  double value(const Eigen::VectorXd& w, const Eigen::VectorXd& c) const;
  double anchor_value() const { return violation_at_anchor(); }
};

OptimalityCut extract_optimality_cut(const SubproblemModel& model,
                                     const conic::SolutionRecord& sol,
                                     const Eigen::VectorXd& w_hat, const Eigen::VectorXd& c_hat,
                                     int day, int iteration);

FeasibilityCut extract_feasibility_cut(const SubproblemModel& model,
                                       const conic::SolutionRecord& sol,
                                       const Eigen::VectorXd& w_hat, const Eigen::VectorXd& c_hat,
                                       int day, int iteration, double w_slack);

}  // namespace bessplan::opf
