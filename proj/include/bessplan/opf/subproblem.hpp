#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "bessplan/conic/program.hpp"
#include "bessplan/network.hpp"

namespace bessplan::opf {

using conic::Param;
using conic::Var;

enum class LossMode { linear, quadratic };
enum class SubproblemKind { standard, feasibility, dc };

const char* to_string(LossMode mode);
LossMode parse_loss_mode(const std::string& s);

struct OpfWeights {
  LossMode loss_mode = LossMode::linear;
  double w_loss = 1.0;
  double w_slack = 1e3;
  std::vector<double> oc;  // per-branch loss cost; empty means 1 everywhere
  double dt = 1.0;         // hours per step
  double initial_soe_factor = 0.5;
  // Ampacity used for branches without a limit; <= 0 derives a loose bound
  // from the loads.
  double unlimited_current = 0.0;
  // Nodal angle window [-pi, pi].
  bool angle_window = true;
};

// Net bus loads (consumption positive), one row per hour.
struct DayData {
  Eigen::MatrixXd load_p;
  Eigen::MatrixXd load_q;
  int hours() const { return static_cast<int>(load_p.rows()); }
};

struct HourHandles {
  std::vector<Var> v, theta_n, p_n, q_n;                 // per bus
  std::vector<Var> theta_l, p_s, q_s, p_o, q_o, k_o;     // per branch
  Var slack_p, slack_q;
  std::vector<Var> gen_q;  // per non-slack generator
  std::vector<Var> st_p, st_q;  // per site
};

struct SubproblemModel {
  SubproblemKind kind = SubproblemKind::standard;
  int hours = 0;
  conic::Program program;
  std::vector<HourHandles> hour;
  std::vector<std::vector<Var>> energy;  // [site][state], hours + 1 states
  std::vector<Var> w, c;
  std::vector<Var> slack_w, slack_c;  // feasibility variant only
  std::vector<Param> w_hat, c_hat;
  std::vector<int> link_w, link_c;  // tagged linking equalities
  std::vector<int> nonslack_gens;

  int num_sites() const { return static_cast<int>(w.size()); }
  conic::CompiledProgram::ParameterValues parameters(const Eigen::VectorXd& w_hat_values,
                                                     const Eigen::VectorXd& c_hat_values) const;
};

// Daily SOC-OPF with storage and linking equalities W = W^, C = C^.
SubproblemModel build_subproblem(const NetworkModel& net, const DayData& day,
                                 const OpfWeights& weights);

// Same body, linking through nonnegative slacks and a slack-only objective.
SubproblemModel build_feasibility_subproblem(const NetworkModel& net, const DayData& day,
                                             const OpfWeights& weights);

// Lossless DC flow with |flow| loss proxy. With `feasibility`, the linking
// equalities carry slacks as in the feasibility variant.
SubproblemModel build_dc_subproblem(const NetworkModel& net, const DayData& day,
                                    const OpfWeights& weights, bool feasibility = false);

// Whole-horizon problem with storage sizes as variables; U relaxed to [0, 1].
struct CentralizedModel {
  conic::Program program;
  bool dc = false;
  int day_length = 0;
  std::vector<HourHandles> hour;  // all hours of the horizon
  std::vector<std::vector<Var>> energy;  // [site][state], T + 1 states
  std::vector<Var> u, w, c;
};

CentralizedModel build_centralized(const NetworkModel& net, const std::vector<DayData>& days,
                                   const OpfWeights& weights, double capex_scale, bool dc);

struct OperatingPoint {
  int hours = 0;
  Eigen::MatrixXd v, theta_n, p_n, q_n;              // hours x N
  Eigen::MatrixXd theta_l, p_s, q_s, p_o, q_o, k_o;  // hours x L
  Eigen::VectorXd slack_p, slack_q;                  // hours
  Eigen::MatrixXd gen_q;                             // hours x generators
  Eigen::MatrixXd storage_p, storage_q;              // hours x S
  Eigen::MatrixXd energy;                            // (hours + 1) x S
};

OperatingPoint extract_operating_point(const NetworkModel& net,
                                       const std::vector<HourHandles>& hours,
                                       const std::vector<std::vector<Var>>& energy,
                                       const conic::SolutionRecord& sol, int first_hour = 0,
                                       int num_hours = -1);

OperatingPoint extract_operating_point(const NetworkModel& net, const SubproblemModel& model,
                                       const conic::SolutionRecord& sol);

// q_o - X (p_s^2 + q_s^2) / V_s per hour and branch.
Eigen::MatrixXd relaxation_gaps(const NetworkModel& net, const OperatingPoint& op);

}  // namespace bessplan::opf
