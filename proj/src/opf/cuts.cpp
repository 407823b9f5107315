#include "bessplan/opf/cuts.hpp"

#include <fmt/format.h>

namespace bessplan::opf {

double OptimalityCut::value(const Eigen::VectorXd& w, const Eigen::VectorXd& c) const {
  return opex + lambda.dot(w - w_hat) + mu.dot(c - c_hat);
}

double FeasibilityCut::violation_at_anchor() const {
  return w_slack * (slack_w.sum() + slack_c.sum());
}

double FeasibilityCut::value(const Eigen::VectorXd& w, const Eigen::VectorXd& c) const {
  return violation_at_anchor() + nu.dot(w - w_hat) + xi.dot(c - c_hat);
}

namespace {

Eigen::VectorXd tagged_duals(const conic::SolutionRecord& sol, const std::vector<int>& ids,
                             const char* what) {
  Eigen::VectorXd d(static_cast<int>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto it = sol.duals.find(ids[i]);
    if (it == sol.duals.end()) {
      throw CutError(fmt::format("dual of {} link {} missing from the solution", what, i));
    }
    d[static_cast<int>(i)] = it->second;
  }
  return d;
}

void check_anchor(const SubproblemModel& model, const Eigen::VectorXd& w_hat,
                  const Eigen::VectorXd& c_hat) {
  if (w_hat.size() != model.num_sites() || c_hat.size() != model.num_sites()) {
    throw CutError("anchor size does not match the number of sites");
  }
}

}  // namespace

OptimalityCut extract_optimality_cut(const SubproblemModel& model,
                                     const conic::SolutionRecord& sol,
                                     const Eigen::VectorXd& w_hat, const Eigen::VectorXd& c_hat,
                                     int day, int iteration) {
  if (model.kind == SubproblemKind::feasibility) {
    throw CutError("optimality cuts come from the standard subproblem");
  }
  if (!sol.optimal()) throw CutError("optimality cut requested from a non-optimal solve");
  check_anchor(model, w_hat, c_hat);
  OptimalityCut cut;
  cut.day = day;
  cut.iteration = iteration;
  cut.opex = sol.objective;
  cut.lambda = tagged_duals(sol, model.link_w, "power");
  cut.mu = tagged_duals(sol, model.link_c, "energy");
  cut.w_hat = w_hat;
  cut.c_hat = c_hat;
  return cut;
}

FeasibilityCut extract_feasibility_cut(const SubproblemModel& model,
                                       const conic::SolutionRecord& sol,
                                       const Eigen::VectorXd& w_hat, const Eigen::VectorXd& c_hat,
                                       int day, int iteration, double w_slack) {
  if (model.kind != SubproblemKind::feasibility) {
    throw CutError("feasibility cuts come from the feasibility-check subproblem");
  }
  if (!sol.optimal()) throw CutError("feasibility cut requested from a non-optimal solve");
  if (!(sol.objective > 0.0)) {
    throw CutError(fmt::format("day {} is feasible at the anchor (objective {:.3e}); no cut", day,
                               sol.objective));
  }
  check_anchor(model, w_hat, c_hat);
  FeasibilityCut cut;
  cut.day = day;
  cut.iteration = iteration;
  cut.w_slack = w_slack;
  const int ns = model.num_sites();
  cut.slack_w.resize(ns);
  cut.slack_c.resize(ns);
  for (int s = 0; s < ns; ++s) {
    cut.slack_w[s] = std::max(0.0, sol.value(model.slack_w[s]));
    cut.slack_c[s] = std::max(0.0, sol.value(model.slack_c[s]));
  }
  cut.nu = tagged_duals(sol, model.link_w, "power");
  cut.xi = tagged_duals(sol, model.link_c, "energy");
  cut.w_hat = w_hat;
  cut.c_hat = c_hat;
  return cut;
}

}  // namespace bessplan::opf
