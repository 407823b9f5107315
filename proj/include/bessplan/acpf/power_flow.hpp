#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "bessplan/network.hpp"

namespace bessplan::acpf {

// Bus admittance matrix of the series branch model plus bus shunts.
class AdmittanceModel {
 public:
  explicit AdmittanceModel(const NetworkModel& net);

  const NetworkModel& network() const { return *net_; }
  int size() const { return n_; }
  const Eigen::MatrixXd& g() const { return g_; }
  const Eigen::MatrixXd& b() const { return b_; }

  // Net injections P + jQ = V conj(Y V) at the given polar state.
  void injections(const Eigen::VectorXd& vm, const Eigen::VectorXd& va, Eigen::VectorXd& p,
                  Eigen::VectorXd& q) const;

  // Sending-end flows and series current magnitude of branch k.
  void branch_flow(int k, const Eigen::VectorXd& vm, const Eigen::VectorXd& va, double& p,
                   double& q, double& current) const;

 private:
  const NetworkModel* net_;
  int n_;
  Eigen::MatrixXd g_, b_;
};

// Unknown layout of the Newton system: angles of all non-slack buses, then
// magnitudes of PQ buses, in bus order.
struct NewtonLayout {
  std::vector<BusKind> kind;
  std::vector<int> angle_buses;
  std::vector<int> magnitude_buses;
  int size() const { return static_cast<int>(angle_buses.size() + magnitude_buses.size()); }
};

NewtonLayout make_layout(const std::vector<BusKind>& kind);

// Specified minus calculated injections on the layout rows.
Eigen::VectorXd mismatch(const AdmittanceModel& model, const NewtonLayout& layout,
                         const Eigen::VectorXd& vm, const Eigen::VectorXd& va,
                         const Eigen::VectorXd& p_spec, const Eigen::VectorXd& q_spec);

// d(calculated injections)/d(unknowns), i.e. minus the Jacobian of mismatch().
Eigen::MatrixXd jacobian(const AdmittanceModel& model, const NewtonLayout& layout,
                         const Eigen::VectorXd& vm, const Eigen::VectorXd& va);

struct AcpfOptions {
  bool enforce_q_limits = true;
  int max_newton_iterations = 30;
  int max_switch_rounds = 10;
  double tolerance = 1e-8;
};

struct AcpfInit {
  Eigen::VectorXd vm, va;
};

struct AcpfState {
  Eigen::VectorXd vm, va;
  Eigen::VectorXd p, q;          // net bus injections at the solution
  Eigen::VectorXd gen_p, gen_q;  // per generator
  double slack_p = 0.0, slack_q = 0.0;
  std::vector<BusKind> final_kind;
  bool converged = false;
  int iterations = 0;
  int switch_rounds = 0;
  double mismatch_norm = 0.0;
  double solve_time = 0.0;
  std::string message;
};

// load_p/load_q are net bus loads (consumption positive). Voltage
// magnitudes of slack and PV buses are taken from Bus::v_set, or from
// `init` when given.
AcpfState solve_acpf(const NetworkModel& net, const Eigen::VectorXd& load_p,
                     const Eigen::VectorXd& load_q, const AcpfInit* init = nullptr,
                     const AcpfOptions& options = {});

}  // namespace bessplan::acpf
