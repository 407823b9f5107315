#include "bessplan/benders/gbd.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

#include "bessplan/util/parallel.hpp"

namespace bessplan::benders {

using Clock = std::chrono::steady_clock;
using Eigen::VectorXd;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

const char* to_string(ValidationMode m) {
  switch (m) {
    case ValidationMode::none: return "none";
    case ValidationMode::relaxed_socp: return "relax-integrality-socp";
    case ValidationMode::dc_lp: return "dc-lp";
  }
  return "?";
}

ValidationMode parse_validation_mode(const std::string& s) {
  if (s == "none" || s.empty()) return ValidationMode::none;
  if (s == "relax-integrality-socp") return ValidationMode::relaxed_socp;
  if (s == "dc-lp") return ValidationMode::dc_lp;
  throw std::invalid_argument("unknown validation mode '" + s + "'");
}

const char* to_string(PlanStatus s) {
  switch (s) {
    case PlanStatus::converged: return "converged";
    case PlanStatus::iteration_cap: return "iteration_cap";
    case PlanStatus::numerical_failure: return "numerical_failure";
    case PlanStatus::day_infeasible: return "day_infeasible";
    case PlanStatus::master_infeasible: return "master_infeasible";
  }
  return "?";
}

std::string IterationRecord::to_json() const {
  nlohmann::json j;
  j["iteration"] = iteration;
  j["lb"] = lb;
  j["ub"] = ub ? nlohmann::json(*ub) : nlohmann::json(nullptr);
  j["gap"] = gap ? nlohmann::json(*gap) : nlohmann::json(nullptr);
  j["feasible_days"] = feasible_days;
  j["optimality_cuts"] = optimality_cuts;
  j["feasibility_cuts"] = feasibility_cuts;
  j["master_time"] = master_time;
  j["master_nodes"] = master_nodes;
  j["max_subproblem_time"] = max_subproblem_time;
  j["total_subproblem_time"] = total_subproblem_time;
  j["stage_wall_time"] = stage_wall_time;
  return j.dump();
}

Bounds compute_bounds(const MasterSolution& master, const std::vector<DayOutcome>& days,
                      double capex_scale) {
  Bounds b;
  b.lb = master.objective;
  double ub = capex_scale * master.capex;
  for (const auto& d : days) {
    if (!d.feasible) return b;
    ub += d.opex;
  }
  b.ub = ub;
  return b;
}

bool PlanResult::refinement_ok() const {
  if (!refined) return false;
  return std::all_of(refinement.begin(), refinement.end(),
                     [](const acpf::RecoveryResult& r) { return r.ok(); });
}

bool PlanResult::lb_nondecreasing(double tol) const {
  const auto& h = state.lb_history;
  for (std::size_t k = 1; k < h.size(); ++k) {
    if (h[k] < h[k - 1] - tol * (1.0 + std::abs(h[k - 1]))) return false;
  }
  return true;
}

namespace {

struct DayModels {
  opf::SubproblemModel standard, feasibility;
  std::shared_ptr<const conic::CompiledProgram> standard_c, feasibility_c;
};

struct DayWork {
  DayOutcome outcome;
  conic::SolutionRecord solution;  // standard solve
  std::optional<opf::OptimalityCut> optimality;
  std::optional<opf::FeasibilityCut> feasibility;
  std::string failure;
  bool structural = false;  // no decision can make this day feasible
};

}  // namespace

PlanResult run_gbd(const NetworkModel& net, const std::vector<opf::DayData>& days,
                   const GbdConfig& config) {
  if (days.empty()) throw std::invalid_argument("planning needs at least one day");
  if (config.max_iterations < 1) throw std::invalid_argument("iteration cap must be positive");
  const int nd = static_cast<int>(days.size());
  const int ns = static_cast<int>(net.sites.size());
  const bool dc = config.mode == ValidationMode::dc_lp;
  const bool absolute_stop = config.mode != ValidationMode::none;

  std::vector<DayModels> models(nd);
  parallel_for(nd, config.workers, [&](int d) {
    auto& m = models[d];
    if (dc) {
      m.standard = opf::build_dc_subproblem(net, days[d], config.weights, false);
      m.feasibility = opf::build_dc_subproblem(net, days[d], config.weights, true);
    } else {
      m.standard = opf::build_subproblem(net, days[d], config.weights);
      m.feasibility = opf::build_feasibility_subproblem(net, days[d], config.weights);
    }
    m.standard_c = m.standard.program.compile();
    m.feasibility_c = m.feasibility.program.compile();
  });

  MasterOptions mopt;
  mopt.alpha_floor = config.alpha_floor;
  mopt.capex_scale = config.capex_scale;
  mopt.relax_integrality = config.mode != ValidationMode::none;
  mopt.lp = config.solver;

  PlanResult result;
  BendersState& state = result.state;
  state.cuts.num_sites = ns;
  state.cuts.num_days = nd;
  std::vector<DayWork> work(nd);

  for (int k = 1; k <= config.max_iterations; ++k) {
    state.iteration = k;
    IterationRecord rec;
    rec.iteration = k;

    auto t0 = Clock::now();
    MasterProblem master(net.sites, state.cuts, mopt);
    MasterSolution ms = master.solve();
    rec.master_time = seconds_since(t0);
    rec.master_nodes = ms.nodes;
    if (ms.status == MasterStatus::infeasible) {
      result.status = PlanStatus::master_infeasible;
      result.message = fmt::format("iteration {}: {}", k, ms.message);
      for (const auto& line : ms.report) result.message += "\n  " + line;
      result.master = ms;
      return result;
    }
    if (ms.status != MasterStatus::optimal) {
      result.status = PlanStatus::numerical_failure;
      result.message = fmt::format("iteration {}: {}", k, ms.message);
      result.master = ms;
      return result;
    }
    const VectorXd w_hat = ms.w, c_hat = ms.c;

    t0 = Clock::now();
    parallel_for(nd, config.workers, [&](int d) {
      DayWork& dw = work[d];
      dw = DayWork{};
      const auto ts = Clock::now();
      const auto& m = models[d];
      dw.solution = m.standard_c->solve(m.standard.parameters(w_hat, c_hat), config.solver);
      dw.outcome.status = dw.solution.status;
      if (dw.solution.optimal()) {
        dw.outcome.feasible = true;
        dw.outcome.opex = dw.solution.objective;
        dw.optimality = opf::extract_optimality_cut(m.standard, dw.solution, w_hat, c_hat, d, k);
      } else if (dw.solution.status == conic::SolveStatus::numerical_failure) {
        // Close to the feasibility boundary the standard solve can stall
        // without a certificate. A clearly positive slack settles it.
        const auto fs =
            m.feasibility_c->solve(m.feasibility.parameters(w_hat, c_hat), config.solver);
        if (fs.optimal() && fs.objective > config.weights.w_slack * config.infeasibility_tol) {
          dw.outcome.status = conic::SolveStatus::infeasible;
          dw.feasibility = opf::extract_feasibility_cut(m.feasibility, fs, w_hat, c_hat, d, k,
                                                        config.weights.w_slack);
        } else {
          dw.failure = fmt::format(
              "day {} iteration {}: subproblem {}: {}; feasibility check {} (objective {:.3e})", d,
              k, conic::to_string(dw.solution.status), dw.solution.diagnostics,
              conic::to_string(fs.status), fs.objective);
        }
      } else if (dw.solution.status == conic::SolveStatus::infeasible) {
        const auto fs =
            m.feasibility_c->solve(m.feasibility.parameters(w_hat, c_hat), config.solver);
        if (fs.status == conic::SolveStatus::infeasible) {
          dw.structural = true;
          dw.failure = fmt::format(
              "day {} iteration {}: infeasible for every storage decision (feasibility "
              "subproblem infeasible); relax the network limits or add candidate sites",
              d, k);
        } else if (!fs.optimal() || fs.objective <= 0.0) {
          dw.failure = fmt::format(
              "day {} iteration {}: subproblem infeasible but feasibility check returned {} "
              "(objective {:.3e})",
              d, k, conic::to_string(fs.status), fs.objective);
        } else {
          dw.feasibility = opf::extract_feasibility_cut(m.feasibility, fs, w_hat, c_hat, d, k,
                                                        config.weights.w_slack);
        }
      } else {
        dw.failure = fmt::format("day {} iteration {}: subproblem {}: {}", d, k,
                                 conic::to_string(dw.solution.status), dw.solution.diagnostics);
      }
      dw.outcome.solve_time = seconds_since(ts);
    });
    rec.stage_wall_time = seconds_since(t0);

    // Barrier: cuts enter the store in day order.
    std::vector<DayOutcome> outcomes(nd);
    for (int d = 0; d < nd; ++d) {
      DayWork& dw = work[d];
      if (!dw.failure.empty()) {
        result.status = dw.structural ? PlanStatus::day_infeasible : PlanStatus::numerical_failure;
        result.message = dw.failure;
        result.master = ms;
        state.trace.push_back(rec);
        return result;
      }
      outcomes[d] = dw.outcome;
      rec.total_subproblem_time += dw.outcome.solve_time;
      rec.max_subproblem_time = std::max(rec.max_subproblem_time, dw.outcome.solve_time);
      if (dw.optimality) {
        state.cuts.optimality.push_back(*dw.optimality);
        state.phi.insert({d, k});
        ++rec.feasible_days;
        ++rec.optimality_cuts;
      } else if (dw.feasibility) {
        state.cuts.feasibility.push_back(*dw.feasibility);
        ++rec.feasibility_cuts;
      }
    }

    const Bounds b = compute_bounds(ms, outcomes, config.capex_scale);
    rec.lb = b.lb;
    rec.ub = b.ub;
    bool done = false;
    if (b.ub) {
      const double diff = std::abs(*b.ub - b.lb);
      rec.gap = std::abs(b.lb) > 0.0 ? diff / std::abs(b.lb) : (diff > 0.0 ? INFINITY : 0.0);
      if (absolute_stop) {
        done = *b.ub - b.lb < config.delta;
      } else {
        done = diff <= config.epsilon * std::abs(b.lb) || diff <= config.gap_floor;
      }
    }
    state.lb_history.push_back(b.lb);
    state.ub_history.push_back(b.ub);
    state.trace.push_back(rec);
    result.master = ms;
    result.lb = b.lb;
    result.ub = b.ub;
    if (done) {
      result.status = PlanStatus::converged;
      result.message = fmt::format("converged at iteration {}", k);
      break;
    }
    result.status = PlanStatus::iteration_cap;
    result.message = fmt::format("iteration cap {} reached", config.max_iterations);
  }

  if (!result.converged()) return result;

  result.day_opex.resize(nd);
  for (int d = 0; d < nd; ++d) {
    result.day_opex[d] = work[d].outcome.opex;
    result.operating_points.push_back(
        opf::extract_operating_point(net, models[d].standard, work[d].solution));
  }
  if (config.refine && !dc) {
    acpf::RecoveryOptions ropt;
    ropt.acpf = config.acpf;
    ropt.workers = config.workers;
    ropt.loss_mode = config.weights.loss_mode;
    ropt.w_loss = config.weights.w_loss;
    ropt.oc = config.weights.oc;
    for (int d = 0; d < nd; ++d) {
      result.refinement.push_back(acpf::recover_feasible(net, result.operating_points[d],
                                                         days[d].load_p, days[d].load_q, ropt));
      result.refined_opex += result.refinement.back().opex;
    }
    result.refined = true;
  }
  return result;
}

CentralizedSolution solve_centralized(const NetworkModel& net,
                                      const std::vector<opf::DayData>& days,
                                      const GbdConfig& config) {
  const bool dc = config.mode == ValidationMode::dc_lp;
  const auto t0 = Clock::now();
  const auto model = opf::build_centralized(net, days, config.weights, config.capex_scale, dc);
  const auto compiled = model.program.compile();
  const auto sol = compiled->solve(compiled->default_parameters(), config.solver);
  CentralizedSolution out;
  out.status = sol.status;
  out.solve_time = seconds_since(t0);
  if (!sol.optimal()) return out;
  const int ns = static_cast<int>(net.sites.size());
  out.u.resize(ns);
  out.w.resize(ns);
  out.c.resize(ns);
  for (int s = 0; s < ns; ++s) {
    out.u[s] = sol.value(model.u[s]);
    out.w[s] = sol.value(model.w[s]);
    out.c[s] = sol.value(model.c[s]);
    out.capex += net.sites[s].cost_p * out.w[s] + net.sites[s].cost_e * out.c[s];
  }
  out.objective = sol.objective;
  for (int d = 0; d < static_cast<int>(days.size()); ++d) {
    out.days.push_back(opf::extract_operating_point(net, model.hour, model.energy, sol,
                                                    d * model.day_length, model.day_length));
  }
  return out;
}

}  // namespace bessplan::benders
