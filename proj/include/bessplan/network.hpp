#pragma once

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

namespace bessplan {

class NetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr double kUnlimited = std::numeric_limits<double>::infinity();

enum class BusKind { slack, pv, pq };

const char* to_string(BusKind kind);
BusKind parse_bus_kind(const std::string& s);

// All quantities per unit on the network base. Voltage bounds are on the
// squared magnitude.
struct Bus {
  int id = 0;
  BusKind kind = BusKind::pq;
  double gs = 0.0;
  double bs = 0.0;
  double v_min = 0.81;
  double v_max = 1.21;
  double base_kv = 1.0;
  double v_set = 1.0;  // magnitude setpoint for slack/PV buses
  double pd = 0.0;     // snapshot load
  double qd = 0.0;
};

struct Branch {
  int id = 0;
  int from = 0;  // bus positions, not ids
  int to = 0;
  double r = 0.0;
  double x = 0.1;
  double theta_max = 1.0471975511965976;  // pi/3
  double i_max = kUnlimited;
};

struct Generator {
  int id = 0;
  int bus = 0;  // bus position
  double p_min = 0.0;
  double p_max = 0.0;
  double q_min = 0.0;
  double q_max = 0.0;
  bool is_condenser = false;
  double pg = 0.0;  // snapshot dispatch
  double qg = 0.0;
};

struct CandidateSite {
  int id = 0;
  int bus = 0;  // bus position
  double w_min = 0.0;
  double w_max = 1.0;
  double c_min = 0.0;
  double c_max = 4.0;
  double c_rate = 1.0;
  double cost_p = 1.0;
  double cost_e = 1.0;
  double soe_min = 0.1;
  double soe_max = 0.9;
};

struct NetworkModel {
  std::string name = "network";
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> generators;
  std::vector<CandidateSite> sites;

  int num_buses() const { return static_cast<int>(buses.size()); }
  int num_branches() const { return static_cast<int>(branches.size()); }
  int bus_position(int id) const;
  int slack_bus() const;
  // Generator absorbing the residual active power: the first generator at
  // the slack bus.
  int slack_generator() const;
};

// Raises NetworkError on any type invariant violation.
void validate(const NetworkModel& net);

using IncidenceMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

struct Incidence {
  IncidenceMatrix a_plus;   // node x branch, sending end
  IncidenceMatrix a_minus;  // node x branch, receiving end
  IncidenceMatrix a_s;      // branch x node
  IncidenceMatrix a_r;      // branch x node
};

Incidence build_incidence(const NetworkModel& net);

struct CycleBasis {
  struct Step {
    int branch;
    int sign;  // +1 when traversed from its sending end
  };
  std::vector<std::vector<Step>> cycles;
};

CycleBasis find_cycle_basis(const NetworkModel& net);

// Connected components as lists of bus positions.
std::vector<std::vector<int>> connected_components(const NetworkModel& net);

// Physical-unit description: ohm, MW, MVAr, MWh, kA, degrees, voltage
// magnitudes (not squared) in per unit of base_kv.
struct RawBus {
  int id = 0;
  BusKind kind = BusKind::pq;
  double gs_mw = 0.0;
  double bs_mvar = 0.0;
  double vm_min = 0.9;
  double vm_max = 1.1;
  double base_kv = 1.0;
  double v_set = 1.0;
  double pd_mw = 0.0;
  double qd_mvar = 0.0;
};

struct RawBranch {
  int id = 0;
  int from_id = 0;
  int to_id = 0;
  double r_ohm = 0.0;
  double x_ohm = 0.0;
  double theta_max_deg = 60.0;
  double i_max_ka = kUnlimited;
};

struct RawGenerator {
  int id = 0;
  int bus_id = 0;
  double p_min_mw = 0.0, p_max_mw = 0.0;
  double q_min_mvar = 0.0, q_max_mvar = 0.0;
  bool is_condenser = false;
  double pg_mw = 0.0, qg_mvar = 0.0;
};

struct RawSite {
  int id = 0;
  int bus_id = 0;
  double w_min_mw = 0.0, w_max_mw = 0.0;
  double c_min_mwh = 0.0, c_max_mwh = 0.0;
  double c_rate = 1.0;
  double cost_per_mw = 0.0, cost_per_mwh = 0.0;
  double soe_min = 0.1, soe_max = 0.9;
};

struct RawNetwork {
  std::string name = "network";
  std::vector<RawBus> buses;
  std::vector<RawBranch> branches;
  std::vector<RawGenerator> generators;
  std::vector<RawSite> sites;
};

NetworkModel to_per_unit(const RawNetwork& raw, double base_mva);
RawNetwork from_per_unit(const NetworkModel& net);

// Plain-text case format with [buses]/[branches]/[generators]/[sites]
// sections. Bus references use bus ids.
NetworkModel read_case(const std::string& path);
NetworkModel parse_case(const std::string& text, const std::string& origin = "<string>");
void write_case(const NetworkModel& net, const std::string& path);
std::string format_case(const NetworkModel& net);

// MATPOWER-style case (mpc.baseMVA, mpc.bus, mpc.gen, mpc.branch). Line
// charging is lumped into bus shunts, parallel branches are merged into one
// equivalent branch, out-of-service elements are dropped.
NetworkModel read_matpower(const std::string& path);
NetworkModel parse_matpower(const std::string& text, const std::string& origin = "<string>");

}  // namespace bessplan
