#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bessplan/acpf/residuals.hpp"
#include "bessplan/benders/gbd.hpp"
#include "bessplan/ingestion.hpp"

namespace bessplan::report {

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- model size --------------------------------------------------------

enum class SizeMode { centralized, master, subproblem };
const char* to_string(SizeMode m);

// G counts dispatchable generators other than the slack.
struct SizeInputs {
  long long G = 0, N = 0, L = 0, S = 0, T = 0, D = 0, P = 0, iterations = 0;
};

struct SizeReport {
  SizeMode mode = SizeMode::subproblem;
  SizeInputs inputs;
  long long binary = 0, continuous = 0, constraints = 0, parameters = 0;
};

// Raises ReportError on negative inputs or T != D * P.
SizeReport model_size(SizeMode mode, const SizeInputs& in);
SizeInputs size_inputs(const NetworkModel& net, int days, int hours_per_day, int iterations = 0);

// ---- representative days -----------------------------------------------

enum class Season { winter, spring, summer, autumn };  // DJF, MAM, JJA, SON
const char* to_string(Season s);
// 0-based day of a 365-day year.
Season season_of(int day_of_year);

struct RepresentativeDay {
  Season season;
  int day;  // index into the series
  double rmse;
};

struct RepresentativeSelection {
  int bus = -1;  // PQ bus with the largest total load
  std::vector<RepresentativeDay> days;
  std::vector<std::string> warnings;
};

RepresentativeSelection representative_days(const ingest::TimeSeriesData& ts,
                                            const NetworkModel& net, int k_per_season = 1,
                                            int first_day_of_year = 0);
// Same with an explicit calendar day (0..364) for every series day.
RepresentativeSelection representative_days(const ingest::TimeSeriesData& ts,
                                            const NetworkModel& net, int k_per_season,
                                            const std::vector<int>& day_of_year);

// ---- tables ------------------------------------------------------------

struct ScalabilityPoint {
  int subproblems = 0;
  int sites = 0;
  int iterations = 0;
  double master_seconds = 0.0;      // total over iterations
  double subproblem_seconds = 0.0;  // total over iterations and days
  double max_subproblem_seconds = 0.0;
  double stage_wall_seconds = 0.0;
};

ScalabilityPoint scalability_point(const benders::BendersState& state, int sites);

// {1, base, base^2, ...}: `points` values, or fewer when `cap` (> 0) is hit.
std::vector<int> geometric_counts(int base, int points, int cap = 0);

// n days cycling through `source`, each load scaled by a seeded factor in
// [1 - spread, 1] so that no sweep day is more stressed than its source.
std::vector<opf::DayData> cycle_days(const std::vector<opf::DayData>& source, int n,
                                     std::uint64_t seed, double spread);

using NamedDistribution = std::pair<std::string, acpf::Distribution>;

std::string format_convergence_csv(const std::vector<benders::IterationRecord>& trace);
std::vector<benders::IterationRecord> parse_convergence_csv(const std::string& text);
std::string format_distribution_csv(const std::vector<NamedDistribution>& rows);
std::vector<NamedDistribution> parse_distribution_csv(const std::string& text);
std::string format_size_csv(const std::vector<SizeReport>& rows);
// Wide layout: one column per horizon size, rows MP and SBP seconds.
std::string format_timing_table(const std::vector<ScalabilityPoint>& points);
std::string format_scalability_csv(const std::vector<ScalabilityPoint>& points);

// Least-squares slope of log(y) against log(x); pairs with a nonpositive
// entry are skipped. NaN when fewer than two pairs remain.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

// ---- plots -------------------------------------------------------------

struct PlotSeries {
  std::vector<double> x, y;
  std::array<std::uint8_t, 3> color{0, 0, 0};
};

std::vector<std::uint8_t> encode_png(int width, int height, const std::vector<std::uint8_t>& rgb);
void write_line_plot(const std::string& path, const std::vector<PlotSeries>& series,
                     bool log_x = false, bool log_y = false, int width = 640, int height = 400);

// ---- bundle ------------------------------------------------------------

struct ReportInputs {
  const benders::BendersState* state = nullptr;
  std::vector<NamedDistribution> distributions;
  std::vector<SizeReport> sizes;
  std::vector<ScalabilityPoint> scalability;
};

// Writes every report under out_dir (created if missing) and returns the
// file names written.
std::vector<std::string> emit_reports(const ReportInputs& in, const std::string& out_dir);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace bessplan::report
