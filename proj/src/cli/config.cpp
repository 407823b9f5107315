#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "bessplan/cli.hpp"
#include "bessplan/reporting.hpp"

namespace bessplan::cli {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

benders::GbdConfig RunConfig::gbd() const {
  benders::GbdConfig g;
  g.weights = weights;
  g.mode = validation;
  g.capex_scale = capex_scale;
  g.alpha_floor = alpha_floor;
  g.epsilon = epsilon;
  g.delta = delta;
  g.workers = workers;
  g.max_iterations = max_iterations;
  g.solver = solver;
  g.acpf = acpf;
  return g;
}

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"paths", {"case", "timeseries", "out"}},
      {"horizon", {"day_length", "days", "first_day_of_year", "representative_days"}},
      {"synthetic", {"daily_amplitude", "seasonal_amplitude", "noise"}},
      {"weights",
       {"w_loss", "w_slack", "oc", "loss_mode", "capex_scale", "alpha_floor", "dt",
        "initial_soe_factor"}},
      {"tolerances",
       {"epsilon", "delta", "solver_feastol", "solver_abstol", "solver_reltol",
        "solver_max_iterations", "acpf_tolerance"}},
      {"benders", {"validation_mode", "max_iterations"}},
      {"boundary",
       {"apply", "tighten_factor", "tighten_rule", "branches", "relax_slack_p", "site_rule",
        "site_buses", "site_w_max", "site_c_max", "site_c_rate", "site_cost_p", "site_cost_e"}},
      {"report",
       {"sweep_days", "sweep_sites", "days_base", "days_points", "sites_base", "sites_points",
        "spread"}},
      {"run", {"workers", "seed"}},
  };
  return keys;
}

std::vector<int> int_list(const std::string& s, const std::string& key) {
  std::vector<int> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto a = item.find_first_not_of(" \t"), b = item.find_last_not_of(" \t");
    if (a == std::string::npos) continue;
    try {
      std::size_t used = 0;
      const std::string t = item.substr(a, b - a + 1);
      out.push_back(std::stoi(t, &used));
      if (used != t.size()) throw std::invalid_argument(t);
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("{}: '{}' is not an integer list", key, s));
    }
  }
  return out;
}

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).lexically_normal().string();
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& base_dir) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("config line {}: {}", e.line(), e.message()));
  }
  for (const auto& [section, body] : tree) {
    const auto it = known_keys().find(section);
    if (it == known_keys().end()) throw ConfigError("unknown config section [" + section + "]");
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) {
        throw ConfigError(fmt::format("unknown key '{}' in [{}]", key, section));
      }
    }
  }
  auto get = [&]<class T>(const std::string& path, T fallback) {
    // get(path, default) swallows unparsable values, so only use it for absence.
    if (!tree.get_optional<std::string>(path)) return fallback;
    try {
      return tree.get<T>(path);
    } catch (const pt::ptree_bad_data&) {
      throw ConfigError(fmt::format("bad value for {}: '{}'", path, tree.get<std::string>(path)));
    }
  };
  auto has = [&](const std::string& path) { return tree.get_optional<std::string>(path); };

  RunConfig c;
  c.case_path = resolve(base_dir, get("paths.case", std::string()));
  c.timeseries_path = resolve(base_dir, get("paths.timeseries", std::string()));
  c.out_dir = resolve(base_dir, get("paths.out", c.out_dir));

  c.day_length = get("horizon.day_length", c.day_length);
  c.synthetic.days = get("horizon.days", c.synthetic.days);
  c.synthetic.first_day_of_year = get("horizon.first_day_of_year", c.synthetic.first_day_of_year);
  c.representative_days = get("horizon.representative_days", c.representative_days);
  c.synthetic.day_length = c.day_length;
  c.synthetic.daily_amplitude = get("synthetic.daily_amplitude", c.synthetic.daily_amplitude);
  c.synthetic.seasonal_amplitude =
      get("synthetic.seasonal_amplitude", c.synthetic.seasonal_amplitude);
  c.synthetic.noise = get("synthetic.noise", c.synthetic.noise);

  c.weights.w_loss = get("weights.w_loss", c.weights.w_loss);
  c.weights.w_slack = get("weights.w_slack", c.weights.w_slack);
  c.oc = get("weights.oc", c.oc);
  try {
    c.weights.loss_mode = opf::parse_loss_mode(get("weights.loss_mode", std::string("linear")));
    c.validation =
        benders::parse_validation_mode(get("benders.validation_mode", std::string("none")));
    c.boundary.tighten_rule = ingest::parse_tighten_rule(
        get("boundary.tighten_rule", std::string(ingest::to_string(c.boundary.tighten_rule))));
    c.boundary.site_rule = ingest::parse_site_rule(
        get("boundary.site_rule", std::string(ingest::to_string(c.boundary.site_rule))));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  c.capex_scale = get("weights.capex_scale", c.capex_scale);
  c.alpha_floor = get("weights.alpha_floor", c.alpha_floor);
  c.weights.dt = get("weights.dt", c.weights.dt);
  c.weights.initial_soe_factor = get("weights.initial_soe_factor", c.weights.initial_soe_factor);

  c.epsilon = get("tolerances.epsilon", c.epsilon);
  c.delta = get("tolerances.delta", c.delta);
  c.solver.feastol = get("tolerances.solver_feastol", c.solver.feastol);
  c.solver.abstol = get("tolerances.solver_abstol", c.solver.abstol);
  c.solver.reltol = get("tolerances.solver_reltol", c.solver.reltol);
  c.solver.max_iterations = get("tolerances.solver_max_iterations", c.solver.max_iterations);
  c.acpf.tolerance = get("tolerances.acpf_tolerance", c.acpf.tolerance);
  c.max_iterations = get("benders.max_iterations", c.max_iterations);

  c.apply_boundary = get("boundary.apply", c.apply_boundary);
  c.boundary.tighten_factor = get("boundary.tighten_factor", c.boundary.tighten_factor);
  if (has("boundary.branches")) {
    c.boundary.branches_to_tighten = int_list(get("boundary.branches", std::string()), "branches");
  }
  c.boundary.relax_slack_p = get("boundary.relax_slack_p", c.boundary.relax_slack_p);
  if (has("boundary.site_buses")) {
    c.boundary.site_buses = int_list(get("boundary.site_buses", std::string()), "site_buses");
  }
  auto& tpl = c.boundary.site_template;
  tpl.w_max = get("boundary.site_w_max", tpl.w_max);
  tpl.c_max = get("boundary.site_c_max", tpl.c_max);
  tpl.c_rate = get("boundary.site_c_rate", tpl.c_rate);
  tpl.cost_p = get("boundary.site_cost_p", tpl.cost_p);
  tpl.cost_e = get("boundary.site_cost_e", tpl.cost_e);

  try {
    if (has("report.sweep_days")) {
      c.sweep_days = int_list(get("report.sweep_days", std::string()), "sweep_days");
    } else if (has("report.days_points")) {
      c.sweep_days = report::geometric_counts(get("report.days_base", 3),
                                              get("report.days_points", 0));
    }
    if (has("report.sweep_sites")) {
      c.sweep_sites = int_list(get("report.sweep_sites", std::string()), "sweep_sites");
    } else if (has("report.sites_points")) {
      c.sweep_sites = report::geometric_counts(get("report.sites_base", 2),
                                               get("report.sites_points", 0));
    }
  } catch (const report::ReportError& e) {
    throw ConfigError(e.what());
  }
  c.sweep_spread = get("report.spread", c.sweep_spread);
  c.workers = get("run.workers", c.workers);
  c.seed = get("run.seed", c.seed);
  c.synthetic.seed = c.seed;

  if (!(c.epsilon > 0)) throw ConfigError("epsilon must be positive");
  if (!(c.delta > 0)) throw ConfigError("delta must be positive");
  if (!(c.weights.w_slack > 0)) throw ConfigError("w_slack must be positive");
  if (c.weights.w_loss < 0) throw ConfigError("w_loss must be nonnegative");
  if (c.oc < 0) throw ConfigError("oc must be nonnegative");
  if (c.workers < 1) throw ConfigError("workers must be at least 1");
  if (c.day_length < 1) throw ConfigError("day_length must be positive");
  if (c.max_iterations < 1) throw ConfigError("max_iterations must be positive");
  for (int d : c.sweep_days) {
    if (d < 1) throw ConfigError("sweep_days entries must be positive");
  }
  for (int d : c.sweep_sites) {
    if (d < 1) throw ConfigError("sweep_sites entries must be positive");
  }
  if (!(c.sweep_spread >= 0.0 && c.sweep_spread < 1.0)) {
    throw ConfigError("report spread must lie in [0, 1)");
  }
  if (c.case_path.empty()) throw ConfigError("[paths] case is required");
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::stringstream s;
  s << in.rdbuf();
  const auto base = fs::path(path).parent_path().string();
  return parse_config(s.str(), base.empty() ? "." : base);
}

void apply_environment(RunConfig& cfg) {
  const char* w = std::getenv("BESSPLAN_WORKERS");
  if (!w || !*w) return;
  char* end = nullptr;
  const long v = std::strtol(w, &end, 10);
  if (*end != '\0' || v < 1 || v > 4096) {
    throw ConfigError(fmt::format("BESSPLAN_WORKERS='{}' is not a positive integer", w));
  }
  cfg.workers = static_cast<int>(v);
}

std::uint64_t fnv1a(std::string_view data, std::uint64_t h) {
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace bessplan::cli
