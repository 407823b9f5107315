#include "bessplan/benders/master.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <queue>

#include <fmt/format.h>

namespace bessplan::benders {

using conic::Expr;
using Eigen::VectorXd;

const char* to_string(MasterStatus s) {
  switch (s) {
    case MasterStatus::optimal: return "optimal";
    case MasterStatus::infeasible: return "infeasible";
    case MasterStatus::failed: return "failed";
  }
  return "?";
}

void CutStore::check() const {
  auto fits = [&](const VectorXd& v) { return v.size() == num_sites; };
  for (const auto& c : optimality) {
    if (!fits(c.lambda) || !fits(c.mu) || !fits(c.w_hat) || !fits(c.c_hat)) {
      throw MasterError(fmt::format("optimality cut (day {}, iteration {}) references {} sites, "
                                    "master has {}",
                                    c.day, c.iteration, c.lambda.size(), num_sites));
    }
    if (c.day < 0 || c.day >= num_days) {
      throw MasterError(fmt::format("optimality cut for unknown day {}", c.day));
    }
  }
  for (const auto& c : feasibility) {
    if (!fits(c.nu) || !fits(c.xi) || !fits(c.w_hat) || !fits(c.c_hat) || !fits(c.slack_w) ||
        !fits(c.slack_c)) {
      throw MasterError(fmt::format("feasibility cut (day {}, iteration {}) references {} sites, "
                                    "master has {}",
                                    c.day, c.iteration, c.nu.size(), num_sites));
    }
    if (c.day < 0 || c.day >= num_days) {
      throw MasterError(fmt::format("feasibility cut for unknown day {}", c.day));
    }
  }
}

MasterProblem::MasterProblem(const std::vector<CandidateSite>& sites, const CutStore& cuts,
                             const MasterOptions& options)
    : sites_(sites), num_days_(cuts.num_days), options_(options) {
  if (cuts.num_sites != static_cast<int>(sites.size())) {
    throw MasterError(fmt::format("cut store has {} sites, candidates {}", cuts.num_sites,
                                  sites.size()));
  }
  cuts.check();
  const int ns = num_sites();
  auto& p = program_;
  u_ = p.add_block("U", ns);
  w_ = p.add_block("W", ns);
  c_ = p.add_block("C", ns);
  alpha_ = p.add_block("alpha", num_days_);
  Expr objective;
  for (int s = 0; s < ns; ++s) {
    const auto& site = sites[s];
    lo_.push_back(p.add_parameter(fmt::format("U_lo[{}]", s), 0.0));
    hi_.push_back(p.add_parameter(fmt::format("U_hi[{}]", s), 1.0));
    p.add_greater_equal(w_[s], site.w_min * Expr(u_[s]), "site.w_min");
    p.add_less_equal(w_[s], site.w_max * Expr(u_[s]), "site.w_max");
    p.add_greater_equal(c_[s], site.c_min * Expr(u_[s]), "site.c_min");
    p.add_less_equal(c_[s], site.c_max * Expr(u_[s]), "site.c_max");
    p.add_less_equal(w_[s], site.c_rate * Expr(c_[s]), "site.c_rate");
    p.add_greater_equal(u_[s], lo_[s], "bb.u_lo");
    p.add_less_equal(u_[s], hi_[s], "bb.u_hi");
    objective += options.capex_scale * (site.cost_p * Expr(w_[s]) + site.cost_e * Expr(c_[s]));
    objective += options.tie_break * (s + 1) * Expr(u_[s]);
  }
  for (int d = 0; d < num_days_; ++d) {
    p.add_greater_equal(alpha_[d], options.alpha_floor, "alpha.floor");
    objective += alpha_[d];
  }
  for (const auto& cut : cuts.optimality) {
    Expr gamma = cut.opex - cut.lambda.dot(cut.w_hat) - cut.mu.dot(cut.c_hat);
    for (int s = 0; s < ns; ++s) gamma += cut.lambda[s] * Expr(w_[s]) + cut.mu[s] * Expr(c_[s]);
    p.add_greater_equal(alpha_[cut.day], gamma,
                        fmt::format("cut.optimality[day={},iter={}]", cut.day, cut.iteration));
  }
  for (const auto& cut : cuts.feasibility) {
    // Positive rescaling keeps the row well conditioned.
    double scale = std::abs(cut.violation_at_anchor());
    for (int s = 0; s < ns; ++s) {
      scale = std::max({scale, std::abs(cut.nu[s]), std::abs(cut.xi[s])});
    }
    scale = scale > 0.0 ? 1.0 / scale : 1.0;
    Expr upsilon = scale * (cut.violation_at_anchor() - cut.nu.dot(cut.w_hat) -
                            cut.xi.dot(cut.c_hat));
    for (int s = 0; s < ns; ++s) {
      upsilon += scale * cut.nu[s] * Expr(w_[s]) + scale * cut.xi[s] * Expr(c_[s]);
    }
    p.add_less_equal(upsilon, 0.0,
                     fmt::format("cut.feasibility[day={},iter={}]", cut.day, cut.iteration));
  }
  p.set_objective(objective);
  compiled_ = p.compile();
}

MasterSolution MasterProblem::solve_relaxation(const VectorXd& lo, const VectorXd& hi) const {
  const auto start = std::chrono::steady_clock::now();
  const int ns = num_sites();
  auto values = compiled_->default_parameters();
  for (int s = 0; s < ns; ++s) {
    values[lo_[s].id] = lo[s];
    values[hi_[s].id] = hi[s];
  }
  const auto rec = compiled_->solve(values, options_.lp);
  MasterSolution m;
  m.lp_solves = 1;
  if (rec.status == conic::SolveStatus::infeasible) {
    m.status = MasterStatus::infeasible;
    double top = 0.0;
    for (const auto& [cid, v] : rec.certificate) top = std::max(top, v);
    for (const auto& [cid, v] : rec.certificate) {
      if (v > 1e-6 * top) {
        m.report.push_back(fmt::format("{} (multiplier {:.3e})", program_.constraints()[cid].label, v));
      }
    }
    m.message = "master infeasible: the feasibility cuts contradict the site bounds";
  } else if (!rec.optimal()) {
    m.status = MasterStatus::failed;
    m.message = fmt::format("master LP {}: {}", conic::to_string(rec.status), rec.diagnostics);
  } else {
    m.status = MasterStatus::optimal;
    m.u.resize(ns);
    m.w.resize(ns);
    m.c.resize(ns);
    m.alpha.resize(num_days_);
    double tie = 0.0;
    for (int s = 0; s < ns; ++s) {
      m.u[s] = rec.value(u_[s]);
      m.w[s] = rec.value(w_[s]);
      m.c[s] = rec.value(c_[s]);
      m.capex += sites_[s].cost_p * m.w[s] + sites_[s].cost_e * m.c[s];
      tie += options_.tie_break * (s + 1) * m.u[s];
    }
    for (int d = 0; d < num_days_; ++d) m.alpha[d] = rec.value(alpha_[d]);
    m.objective = rec.objective - tie;
  }
  m.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

namespace {

struct Node {
  double bound;
  int order;
  VectorXd lo, hi;
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.order > b.order;
  }
};

}  // namespace

MasterSolution MasterProblem::solve() const {
  const auto start = std::chrono::steady_clock::now();
  const int ns = num_sites();
  const VectorXd lo0 = VectorXd::Zero(ns), hi0 = VectorXd::Ones(ns);
  MasterSolution root = solve_relaxation(lo0, hi0);
  if (options_.relax_integrality || root.status != MasterStatus::optimal) {
    root.nodes = 1;
    return root;
  }
  auto with_tie = [&](const MasterSolution& m) {
    double t = 0.0;
    for (int s = 0; s < ns; ++s) t += options_.tie_break * (s + 1) * m.u[s];
    return m.objective + t;
  };

  MasterSolution best;
  best.status = MasterStatus::infeasible;
  double incumbent = std::numeric_limits<double>::infinity();
  int lp_solves = 1, nodes = 0, order = 0;
  std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
  std::vector<MasterSolution> pending;  // solution of each queued node, by order
  open.push({with_tie(root), order++, lo0, hi0});
  pending.push_back(root);
  while (!open.empty()) {
    Node node = open.top();
    open.pop();
    if (node.bound >= incumbent - options_.gap_abs) continue;
    if (++nodes > options_.max_nodes) {
      best.message = fmt::format("node limit {} reached", options_.max_nodes);
      break;
    }
    const MasterSolution& sol = pending[node.order];
    int branch = -1;
    double most = options_.integrality_tol;
    for (int s = 0; s < ns; ++s) {
      const double frac = std::min(sol.u[s] - std::floor(sol.u[s]), std::ceil(sol.u[s]) - sol.u[s]);
      if (frac > most + 1e-12) {
        most = frac;
        branch = s;
      }
    }
    if (branch < 0) {
      if (node.bound < incumbent) {
        incumbent = node.bound;
        best = sol;
        for (int s = 0; s < ns; ++s) best.u[s] = std::round(sol.u[s]);
      }
      continue;
    }
    for (double fix : {0.0, 1.0}) {
      VectorXd lo = node.lo, hi = node.hi;
      lo[branch] = hi[branch] = fix;
      MasterSolution child = solve_relaxation(lo, hi);
      ++lp_solves;
      if (child.status == MasterStatus::failed) {
        child.nodes = nodes;
        child.lp_solves = lp_solves;
        return child;
      }
      if (child.status != MasterStatus::optimal) continue;
      const double b = with_tie(child);
      if (b >= incumbent - options_.gap_abs) continue;
      open.push({b, order++, lo, hi});
      pending.push_back(std::move(child));
    }
  }
  if (best.status != MasterStatus::optimal && best.message.empty()) {
    best.message = "no integral master solution";
  }
  best.nodes = nodes;
  best.lp_solves = lp_solves;
  best.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return best;
}

MasterSolution MasterProblem::enumerate() const {
  const int ns = num_sites();
  if (ns > 20) throw MasterError("enumeration is limited to 20 sites");
  MasterSolution best;
  best.status = MasterStatus::infeasible;
  double best_value = std::numeric_limits<double>::infinity();
  int solves = 0;
  for (long mask = 0; mask < (1L << ns); ++mask) {
    VectorXd u(ns);
    for (int s = 0; s < ns; ++s) u[s] = (mask >> s) & 1 ? 1.0 : 0.0;
    MasterSolution m = solve_relaxation(u, u);
    ++solves;
    if (m.status != MasterStatus::optimal) continue;
    if (m.objective < best_value - options_.gap_abs) {
      best_value = m.objective;
      best = m;
      best.u = u;
    }
  }
  best.lp_solves = solves;
  return best;
}

MasterProblem build_master(const std::vector<CandidateSite>& sites, const CutStore& cuts,
                           const MasterOptions& options) {
  return MasterProblem(sites, cuts, options);
}

MasterSolution solve_master(const MasterProblem& master) { return master.solve(); }

}  // namespace bessplan::benders
