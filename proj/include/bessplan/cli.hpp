#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bessplan/benders/gbd.hpp"
#include "bessplan/ingestion.hpp"

namespace bessplan::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum ExitCode : int { exit_ok = 0, exit_failed = 1, exit_usage = 2, exit_input = 3 };

struct RunConfig {
  // Relative paths are resolved against the config file's directory.
  std::string case_path;
  std::string timeseries_path;  // empty: synthetic profiles
  std::string out_dir = "out";

  int day_length = 24;
  ingest::SyntheticProfileSpec synthetic;
  bool representative_days = false;

  opf::OpfWeights weights;
  double oc = 1.0;  // loss cost on every branch
  double capex_scale = 1.0;
  double alpha_floor = 0.0;
  double epsilon = 5e-3;
  double delta = 1e-1;
  benders::ValidationMode validation = benders::ValidationMode::none;
  int max_iterations = 500;
  conic::SolverSettings solver;
  acpf::AcpfOptions acpf;

  bool apply_boundary = true;
  ingest::BoundaryConditionSpec boundary;

  // report: subproblem counts and candidate-site counts. Explicit lists win
  // over the geometric base/points form.
  std::vector<int> sweep_days;
  std::vector<int> sweep_sites;
  double sweep_spread = 0.05;

  int workers = 1;
  std::uint64_t seed = 1;

  benders::GbdConfig gbd() const;
};

// INI text; unknown keys are errors so that typos do not pass silently.
RunConfig parse_config(const std::string& text, const std::string& base_dir = ".");
RunConfig load_config(const std::string& path);
// Applies BESSPLAN_WORKERS when set.
void apply_environment(RunConfig& cfg);

std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL);

struct Bundle {
  NetworkModel network;
  ingest::TimeSeriesData series;
  std::string hash;  // hex FNV-1a of the bundle files
};

// site,bus,u,w_pu,c_pu,w_mw,c_mwh with round-trip precision.
std::string decisions_csv(const NetworkModel& net, const Eigen::VectorXd& u,
                          const Eigen::VectorXd& w, const Eigen::VectorXd& c);

std::string bundle_dir(const RunConfig& cfg);
// Verifies the recorded hash.
Bundle load_bundle(const std::string& dir);

int cmd_ingest(const RunConfig& cfg, std::ostream& log);
int cmd_plan(const RunConfig& cfg, std::ostream& log);
int cmd_validate(const RunConfig& cfg, std::ostream& log);
int cmd_report(const RunConfig& cfg, std::ostream& log);

}  // namespace bessplan::cli
