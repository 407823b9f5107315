#include "bessplan/ingestion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "bessplan/acpf/power_flow.hpp"
#include "bessplan/util/parallel.hpp"

namespace bessplan::ingest {

using Eigen::MatrixXd;
using Eigen::VectorXd;

opf::DayData TimeSeriesData::day(int d) const {
  if (d < 0 || d >= days()) throw IngestError(fmt::format("day {} out of range", d));
  opf::DayData out;
  out.load_p = net_load_p().middleRows(d * day_length, day_length);
  out.load_q = load_q.middleRows(d * day_length, day_length);
  return out;
}

std::vector<opf::DayData> TimeSeriesData::all_days() const {
  std::vector<opf::DayData> out;
  for (int d = 0; d < days(); ++d) out.push_back(day(d));
  return out;
}

TimeSeriesData TimeSeriesData::select_days(const std::vector<int>& picked) const {
  TimeSeriesData out;
  out.day_length = day_length;
  const int n = static_cast<int>(load_p.cols());
  const int rows = static_cast<int>(picked.size()) * day_length;
  out.load_p.resize(rows, n);
  out.load_q.resize(rows, n);
  out.fixed_gen_p.resize(rows, n);
  for (std::size_t i = 0; i < picked.size(); ++i) {
    const int d = picked[i];
    if (d < 0 || d >= days()) throw IngestError(fmt::format("day {} out of range", d));
    const int r = static_cast<int>(i) * day_length;
    out.load_p.middleRows(r, day_length) = load_p.middleRows(d * day_length, day_length);
    out.load_q.middleRows(r, day_length) = load_q.middleRows(d * day_length, day_length);
    out.fixed_gen_p.middleRows(r, day_length) = fixed_gen_p.middleRows(d * day_length, day_length);
  }
  return out;
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

TimeSeriesData parse_timeseries(const std::string& text, const NetworkModel& net, int day_length,
                                const std::string& origin) {
  if (day_length <= 0) throw IngestError("day length must be positive");
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::vector<int> column_bus;
  std::vector<std::vector<double>> rows;
  bool header = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty() || trim(line)[0] == '#') continue;
    const auto cells = split(line);
    if (header) {
      header = false;
      std::vector<char> seen(net.num_buses(), 0);
      for (std::size_t c = 0; c < cells.size(); ++c) {
        int id = 0;
        try {
          std::size_t used = 0;
          id = std::stoi(cells[c], &used);
          if (used != cells[c].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
          throw IngestError(fmt::format("{}:{}: column {}: bus id '{}' is not an integer", origin,
                                        lineno, c + 1, cells[c]));
        }
        int pos = -1;
        try {
          pos = net.bus_position(id);
        } catch (const NetworkError&) {
          throw IngestError(
              fmt::format("{}:{}: column {}: unknown bus id {}", origin, lineno, c + 1, id));
        }
        if (seen[pos]) {
          throw IngestError(fmt::format("{}:{}: bus {} appears twice", origin, lineno, id));
        }
        seen[pos] = 1;
        column_bus.push_back(pos);
      }
      for (int i = 0; i < net.num_buses(); ++i) {
        if (!seen[i]) {
          throw IngestError(
              fmt::format("{}: missing column for bus {}", origin, net.buses[i].id));
        }
      }
      continue;
    }
    if (cells.size() != column_bus.size()) {
      throw IngestError(fmt::format("{}:{}: expected {} values, found {}", origin, lineno,
                                    column_bus.size(), cells.size()));
    }
    std::vector<double> row(net.num_buses(), 0.0);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string& cell = cells[c];
      char* end = nullptr;
      const double v = cell.empty() ? NAN : std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size() || !std::isfinite(v)) {
        throw IngestError(fmt::format("{}: row {}, column {}: invalid value '{}'", origin, lineno,
                                      c + 1, cell));
      }
      row[column_bus[c]] = v / net.base_mva;
    }
    rows.push_back(std::move(row));
  }
  if (header) throw IngestError(origin + ": empty time-series file");
  const int t = static_cast<int>(rows.size());
  if (t == 0 || t % day_length != 0) {
    throw IngestError(fmt::format("{}: {} hours is not a whole number of {}-hour days", origin, t,
                                  day_length));
  }
  TimeSeriesData ts;
  ts.day_length = day_length;
  ts.load_p.resize(t, net.num_buses());
  for (int r = 0; r < t; ++r) {
    for (int i = 0; i < net.num_buses(); ++i) ts.load_p(r, i) = rows[r][i];
  }
  ts.load_q = MatrixXd::Zero(t, net.num_buses());
  ts.fixed_gen_p = MatrixXd::Zero(t, net.num_buses());
  return ts;
}

TimeSeriesData load_timeseries(const std::string& path, const NetworkModel& net, int day_length) {
  std::ifstream f(path);
  if (!f) throw IngestError("cannot open time series " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_timeseries(buf.str(), net, day_length, path);
}

std::string format_timeseries(const NetworkModel& net, const MatrixXd& p_pu) {
  std::string s;
  for (int i = 0; i < net.num_buses(); ++i) {
    s += fmt::format("{}{}", i ? "," : "", net.buses[i].id);
  }
  s += "\n";
  for (int t = 0; t < p_pu.rows(); ++t) {
    for (int i = 0; i < net.num_buses(); ++i) {
      s += fmt::format("{}{:.17g}", i ? "," : "", p_pu(t, i) * net.base_mva);
    }
    s += "\n";
  }
  return s;
}

void write_timeseries(const std::string& path, const NetworkModel& net, const MatrixXd& p_pu) {
  std::ofstream f(path);
  if (!f) throw IngestError("cannot write time series " + path);
  f << format_timeseries(net, p_pu);
}

BusSnapshot snapshot_of(const NetworkModel& net) {
  BusSnapshot s;
  s.p.resize(net.num_buses());
  s.q.resize(net.num_buses());
  for (int i = 0; i < net.num_buses(); ++i) {
    s.p[i] = net.buses[i].pd;
    s.q[i] = net.buses[i].qd;
  }
  return s;
}

double power_factor(double p, double q) {
  const double s = std::hypot(p, q);
  return s > 0.0 ? std::abs(p) / s : 1.0;
}

int nearest_power_factor(double pf, const std::vector<double>& candidates) {
  int best = -1;
  double best_d = 0.0;
  for (int i = 0; i < static_cast<int>(candidates.size()); ++i) {
    const double d = std::abs(candidates[i] - pf);
    if (best < 0 || d < best_d) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

TimeSeriesData reconstruct_reactive(const TimeSeriesData& active, const NetworkModel& net,
                                    const BusSnapshot& snapshot, std::vector<int>* donors) {
  const int n = net.num_buses();
  if (snapshot.p.size() != n || snapshot.q.size() != n || active.load_p.cols() != n) {
    throw IngestError("reconstruct_reactive: sizes do not match the network");
  }
  std::vector<char> dispatchable(n, 0), has_gen(n, 0);
  for (const auto& g : net.generators) {
    has_gen[g.bus] = 1;
    if (!g.is_condenser) dispatchable[g.bus] = 1;
  }
  // Own-ratio buses: PQ buses and buses hosting only condensers.
  std::vector<double> ratio(n, 0.0);
  std::vector<int> pq;
  std::vector<double> pq_pf;
  for (int i = 0; i < n; ++i) {
    if (dispatchable[i]) continue;
    const double p = snapshot.p[i], q = snapshot.q[i];
    if (p == 0.0 && q != 0.0) {
      throw IngestError(fmt::format(
          "bus {}: snapshot P is zero with Q = {}; power factor undefined", net.buses[i].id, q));
    }
    ratio[i] = p != 0.0 ? q / p : 0.0;
    if (net.buses[i].kind == BusKind::pq && !has_gen[i] && p != 0.0) {
      pq.push_back(i);
      pq_pf.push_back(power_factor(p, q));
    }
  }
  std::vector<int> donor(n, -1);
  for (int i = 0; i < n; ++i) {
    if (!dispatchable[i]) continue;
    const int k = nearest_power_factor(power_factor(snapshot.p[i], snapshot.q[i]), pq_pf);
    if (k >= 0) {
      donor[i] = pq[k];
      ratio[i] = ratio[pq[k]];
    }
  }
  TimeSeriesData out = active;
  out.load_q.resize(active.load_p.rows(), n);
  for (int i = 0; i < n; ++i) out.load_q.col(i) = active.load_p.col(i) * ratio[i];
  if (donors) *donors = donor;
  return out;
}

TimeSeriesData synthetic_profiles(const NetworkModel& net, const SyntheticProfileSpec& spec) {
  if (spec.days <= 0 || spec.day_length <= 0) {
    throw IngestError("synthetic profiles need a positive horizon");
  }
  const int n = net.num_buses(), t_total = spec.days * spec.day_length;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, spec.noise);
  TimeSeriesData ts;
  ts.day_length = spec.day_length;
  ts.load_p.resize(t_total, n);
  ts.load_q = MatrixXd::Zero(t_total, n);
  ts.fixed_gen_p = MatrixXd::Zero(t_total, n);
  const int slack_gen = net.generators.empty() ? -1 : net.slack_generator();
  for (int t = 0; t < t_total; ++t) {
    const double hour = static_cast<double>(t % spec.day_length) * 24.0 / spec.day_length;
    const double doy = spec.first_day_of_year + t / spec.day_length;
    const double daily =
        1.0 + spec.daily_amplitude * std::sin(2.0 * std::numbers::pi * (hour - 9.0) / 24.0);
    // Winter peak on a non-leap year.
    const double seasonal =
        1.0 + spec.seasonal_amplitude * std::cos(2.0 * std::numbers::pi * (doy - 15.0) / 365.0);
    for (int i = 0; i < n; ++i) {
      ts.load_p(t, i) = net.buses[i].pd * daily * seasonal * (1.0 + noise(rng));
    }
    for (int g = 0; g < static_cast<int>(net.generators.size()); ++g) {
      if (g == slack_gen) continue;
      ts.fixed_gen_p(t, net.generators[g].bus) += net.generators[g].pg;
    }
  }
  return ts;
}

const char* to_string(TightenRule r) {
  switch (r) {
    case TightenRule::explicit_list: return "explicit";
    case TightenRule::between_candidates: return "between-candidates";
    case TightenRule::incident_to_candidates: return "incident-to-candidates";
  }
  return "?";
}

const char* to_string(SiteRule r) {
  return r == SiteRule::explicit_list ? "explicit" : "voltage-violating";
}

TightenRule parse_tighten_rule(const std::string& s) {
  for (auto r : {TightenRule::explicit_list, TightenRule::between_candidates,
                 TightenRule::incident_to_candidates}) {
    if (s == to_string(r)) return r;
  }
  throw IngestError("unknown tighten rule '" + s + "'");
}

SiteRule parse_site_rule(const std::string& s) {
  for (auto r : {SiteRule::explicit_list, SiteRule::voltage_violating}) {
    if (s == to_string(r)) return r;
  }
  throw IngestError("unknown site rule '" + s + "'");
}

BoundaryConditions generate_boundary_conditions(const NetworkModel& net, const TimeSeriesData& ts,
                                                const BoundaryConditionSpec& spec, int workers) {
  if (!(spec.tighten_factor > 0.0 && spec.tighten_factor <= 1.0)) {
    throw IngestError(
        fmt::format("tighten factor {} must lie in (0, 1]", spec.tighten_factor));
  }
  validate(net);
  const int n = net.num_buses(), l = net.num_branches(), h = ts.hours();
  if (ts.load_p.cols() != n || ts.load_q.cols() != n) {
    throw IngestError("time series does not match the network");
  }
  const MatrixXd net_p = ts.net_load_p();
  std::vector<acpf::AcpfState> states(h);
  parallel_for(h, workers, [&](int t) {
    states[t] = acpf::solve_acpf(net, net_p.row(t).transpose(), ts.load_q.row(t).transpose());
  });
  std::vector<int> failed;
  for (int t = 0; t < h; ++t) {
    if (!states[t].converged) failed.push_back(t);
  }
  if (!failed.empty()) {
    throw IngestError(fmt::format("baseline AC power flow failed at {} hour(s), first {}: {}",
                                  failed.size(), failed.front(), states[failed.front()].message));
  }

  BoundaryConditions out;
  out.network = net;
  out.max_current = VectorXd::Zero(l);
  acpf::AdmittanceModel model(net);
  std::vector<char> violating(n, 0);
  for (int t = 0; t < h; ++t) {
    for (int k = 0; k < l; ++k) {
      double p, q, i;
      model.branch_flow(k, states[t].vm, states[t].va, p, q, i);
      out.max_current[k] = std::max(out.max_current[k], i);
    }
    for (int i = 0; i < n; ++i) {
      const double v2 = states[t].vm[i] * states[t].vm[i];
      if (net.buses[i].kind == BusKind::pq && (v2 < net.buses[i].v_min || v2 > net.buses[i].v_max)) {
        violating[i] = 1;
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    if (violating[i]) out.violating_buses.push_back(i);
  }

  // Candidate sites.
  std::vector<int> site_bus;
  if (spec.site_rule == SiteRule::voltage_violating) {
    if (out.violating_buses.empty()) {
      throw IngestError("nothing to tighten: no bus violates its voltage limits");
    }
    site_bus = out.violating_buses;
  } else {
    for (int id : spec.site_buses) site_bus.push_back(net.bus_position(id));
  }
  if (!site_bus.empty()) {
    out.network.sites.clear();
    int next_id = 1;
    for (int b : site_bus) {
      CandidateSite s = spec.site_template;
      s.id = next_id++;
      s.bus = b;
      out.network.sites.push_back(s);
    }
  }
  std::vector<char> candidate(n, 0);
  for (const auto& s : out.network.sites) candidate[s.bus] = 1;

  // Branch selection.
  std::vector<int> chosen;
  if (spec.tighten_rule == TightenRule::explicit_list) {
    for (int id : spec.branches_to_tighten) {
      int pos = -1;
      for (int k = 0; k < l; ++k) {
        if (net.branches[k].id == id) pos = k;
      }
      if (pos < 0) throw IngestError(fmt::format("unknown branch id {}", id));
      chosen.push_back(pos);
    }
  } else {
    for (int k = 0; k < l; ++k) {
      const bool a = candidate[net.branches[k].from], b = candidate[net.branches[k].to];
      const bool pick = spec.tighten_rule == TightenRule::between_candidates ? (a && b) : (a || b);
      if (pick) chosen.push_back(k);
    }
  }
  if (chosen.empty()) throw IngestError("nothing to tighten: no branch matches the rule");
  for (int k : chosen) {
    out.network.branches[k].i_max = spec.tighten_factor * out.max_current[k];
  }
  out.tightened = chosen;

  if (spec.relax_slack_p) {
    double peak = 0.0;
    for (int t = 0; t < h; ++t) peak = std::max(peak, net_p.row(t).cwiseAbs().sum());
    const double bound = std::max(10.0, 10.0 * peak);
    auto& g = out.network.generators[out.network.slack_generator()];
    g.p_min = std::min(g.p_min, -bound);
    g.p_max = std::max(g.p_max, bound);
  }
  validate(out.network);
  return out;
}

}  // namespace bessplan::ingest
