#pragma once

#include <vector>

#include <Eigen/Core>

#include "bessplan/acpf/power_flow.hpp"
#include "bessplan/network.hpp"
#include "bessplan/opf/subproblem.hpp"

namespace bessplan::acpf {

struct Distribution {
  int count = 0;
  double min = 0.0, q05 = 0.0, q25 = 0.0, median = 0.0, q75 = 0.0, q95 = 0.0, max = 0.0;
};

Distribution summarize(std::vector<double> values);

struct ResidualReport {
  int hours = 0;
  Eigen::MatrixXd nodal_p, nodal_q;  // hours x N
  Eigen::MatrixXd branch;            // hours x L, v_s v_r sin(delta) - (X p_s - R q_s)
  Eigen::MatrixXd cycle;             // hours x cycles, wrapped into (-pi, pi]
  Eigen::MatrixXd cone_gap;          // hours x L

  double max_nodal() const;
  double max_branch() const;
  double max_cycle() const;
  double max_cone_gap() const;  // largest |gap|
};

// Residuals of a relaxed point against the AC equations. Nodal residuals
// use v = sqrt(V) and the nodal angles; branch and cycle residuals use the
// angle implied by each branch's flows, arg(V_s conj V_r) =
// atan2(X p_s - R q_s, V_s - R p_s - X q_s).
ResidualReport evaluate_residuals(const NetworkModel& net, const opf::OperatingPoint& op,
                                  const CycleBasis& cycles);

// Operating point of exact AC states. p_n/q_n are the specified injections
// (generation minus load), so nodal residuals equal the power-flow mismatch.
opf::OperatingPoint operating_point_from_states(const NetworkModel& net,
                                                const std::vector<AcpfState>& states,
                                                const Eigen::MatrixXd& load_p,
                                                const Eigen::MatrixXd& load_q);

struct RecoveryOptions {
  AcpfOptions acpf;
  int workers = 1;
  opf::LossMode loss_mode = opf::LossMode::linear;
  double w_loss = 1.0;
  std::vector<double> oc;  // empty means 1
};

struct RecoveryResult {
  std::vector<AcpfState> states;
  std::vector<bool> used_flat_start;
  std::vector<int> failed_hours;
  Eigen::VectorXd active_losses;    // per hour, sum of branch p losses
  Eigen::VectorXd reactive_losses;  // per hour, sum of X |I|^2
  double opex = 0.0;                // loss cost recomputed from exact flows
  bool ok() const { return failed_hours.empty(); }
};

// Storage injections of `relaxed` are fixed as PQ loads; voltage magnitudes
// of slack and PV buses are held at sqrt(V); the slack absorbs the rest.
// Each hour starts from the relaxed phasors and falls back to a flat start.
RecoveryResult recover_feasible(const NetworkModel& net, const opf::OperatingPoint& relaxed,
                                const Eigen::MatrixXd& load_p, const Eigen::MatrixXd& load_q,
                                const RecoveryOptions& options = {});

}  // namespace bessplan::acpf
