#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bessplan/network.hpp"
#include "bessplan/opf/subproblem.hpp"

namespace bessplan::ingest {

class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Hourly per-bus series in per unit, columns in network bus order. The net
// load seen by the grid is load_p - fixed_gen_p.
struct TimeSeriesData {
  int day_length = 24;
  Eigen::MatrixXd load_p, load_q, fixed_gen_p;

  int hours() const { return static_cast<int>(load_p.rows()); }
  int days() const { return day_length > 0 ? hours() / day_length : 0; }
  opf::DayData day(int d) const;
  std::vector<opf::DayData> all_days() const;
  TimeSeriesData select_days(const std::vector<int>& days) const;
  Eigen::MatrixXd net_load_p() const { return load_p - fixed_gen_p; }
};

// CSV: header of bus ids, one row per hour, MW of net active load.
TimeSeriesData load_timeseries(const std::string& path, const NetworkModel& net,
                               int day_length = 24);
TimeSeriesData parse_timeseries(const std::string& text, const NetworkModel& net,
                                int day_length = 24, const std::string& origin = "<string>");
std::string format_timeseries(const NetworkModel& net, const Eigen::MatrixXd& p_pu);
void write_timeseries(const std::string& path, const NetworkModel& net,
                      const Eigen::MatrixXd& p_pu);

// Per-bus snapshot P/Q used to derive load power factors.
struct BusSnapshot {
  Eigen::VectorXd p, q;
};
BusSnapshot snapshot_of(const NetworkModel& net);

double power_factor(double p, double q);

// Index into `candidates` whose power factor is nearest to `pf`, lowest
// index on ties; -1 when empty.
int nearest_power_factor(double pf, const std::vector<double>& candidates);

// Fills load_q. PQ and condenser-only buses scale their own snapshot ratio;
// buses with dispatchable generators borrow the ratio of the PQ bus with the
// closest snapshot power factor. donors[n] is that PQ bus (or -1).
TimeSeriesData reconstruct_reactive(const TimeSeriesData& active, const NetworkModel& net,
                                    const BusSnapshot& snapshot,
                                    std::vector<int>* donors = nullptr);

struct SyntheticProfileSpec {
  int days = 4;
  int day_length = 24;
  std::uint64_t seed = 1;
  int first_day_of_year = 0;
  double daily_amplitude = 0.2;
  double seasonal_amplitude = 0.15;
  double noise = 0.03;
};

// Active series only: load = pd * daily * seasonal * noise, fixed
// generation = snapshot pg at non-slack generators.
TimeSeriesData synthetic_profiles(const NetworkModel& net, const SyntheticProfileSpec& spec);

enum class TightenRule { explicit_list, between_candidates, incident_to_candidates };
enum class SiteRule { explicit_list, voltage_violating };

const char* to_string(TightenRule r);
const char* to_string(SiteRule r);
TightenRule parse_tighten_rule(const std::string& s);
SiteRule parse_site_rule(const std::string& s);

struct BoundaryConditionSpec {
  double tighten_factor = 0.82;
  TightenRule tighten_rule = TightenRule::between_candidates;
  std::vector<int> branches_to_tighten;  // branch ids, explicit rule
  bool relax_slack_p = true;
  SiteRule site_rule = SiteRule::explicit_list;
  std::vector<int> site_buses;  // bus ids; empty keeps the network's own sites
  CandidateSite site_template;
};

struct BoundaryConditions {
  NetworkModel network;
  Eigen::VectorXd max_current;  // per branch over the horizon
  std::vector<int> tightened;   // branch positions
  std::vector<int> violating_buses;
};

BoundaryConditions generate_boundary_conditions(const NetworkModel& net,
                                                const TimeSeriesData& ts,
                                                const BoundaryConditionSpec& spec,
                                                int workers = 1);

}  // namespace bessplan::ingest
