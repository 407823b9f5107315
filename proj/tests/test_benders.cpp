#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "bessplan/benders/gbd.hpp"
#include "fixtures.hpp"

using namespace bessplan;
using namespace bessplan::benders;
using Eigen::VectorXd;

namespace {

CutStore empty_store(int sites, int days) {
  CutStore s;
  s.num_sites = sites;
  s.num_days = days;
  return s;
}

// Upsilon = rhs - a'W <= 0 anchored at W = 0.
opf::FeasibilityCut demand_cut(const VectorXd& a, double rhs, int day = 0) {
  const int ns = static_cast<int>(a.size());
  opf::FeasibilityCut cut;
  cut.day = day;
  cut.iteration = 1;
  cut.w_slack = 1.0;
  cut.slack_w = VectorXd::Zero(ns);
  cut.slack_w[0] = rhs;
  cut.slack_c = VectorXd::Zero(ns);
  cut.nu = -a;
  cut.xi = VectorXd::Zero(ns);
  cut.w_hat = VectorXd::Zero(ns);
  cut.c_hat = VectorXd::Zero(ns);
  return cut;
}

opf::OptimalityCut flat_cut(int ns, double opex, int day = 0) {
  opf::OptimalityCut cut;
  cut.day = day;
  cut.opex = opex;
  cut.lambda = cut.mu = cut.w_hat = cut.c_hat = VectorXd::Zero(ns);
  return cut;
}

}  // namespace

TEST_CASE("master without cuts builds nothing") {
  std::vector<CandidateSite> sites = {fixtures::site(1, 0, 2, 4, 1, 1)};
  const auto m = build_master(sites, empty_store(1, 2), {});
  const auto sol = solve_master(m);
  REQUIRE(sol.status == MasterStatus::optimal);
  CHECK(sol.u[0] == 0.0);
  CHECK(std::abs(sol.w[0]) < 1e-7);
  CHECK(std::abs(sol.c[0]) < 1e-7);
  CHECK(std::abs(sol.objective) < 1e-7);
  // Non-cut rows: 5 per site, one floor per day.
  CHECK(m.program().num_constraints() - m.program().count_constraints("bb.") == 5 + 2);
}

TEST_CASE("feasibility cut forces a site open") {
  auto site = fixtures::site(1, 0, 5, 10, 1, 1);
  site.c_rate = 0.5;
  auto store = empty_store(1, 1);
  store.feasibility.push_back(demand_cut(VectorXd::Ones(1), 2.0));
  const auto sol = solve_master(build_master({site}, store, {}));
  REQUIRE(sol.status == MasterStatus::optimal);
  CHECK(sol.u[0] == 1.0);
  CHECK(sol.w[0] == doctest::Approx(2.0).epsilon(1e-7));
  CHECK(sol.c[0] == doctest::Approx(4.0).epsilon(1e-7));
  CHECK(sol.objective == doctest::Approx(6.0).epsilon(1e-7));
}

TEST_CASE("constant optimality cut sets alpha") {
  std::vector<CandidateSite> sites = {fixtures::site(1, 0, 2, 4, 1, 1)};
  auto store = empty_store(1, 2);
  store.optimality.push_back(flat_cut(1, 5.0, 1));
  const auto sol = solve_master(build_master(sites, store, {}));
  REQUIRE(sol.status == MasterStatus::optimal);
  CHECK(sol.alpha[1] == doctest::Approx(5.0).epsilon(1e-7));
  CHECK(std::abs(sol.alpha[0]) < 1e-7);
}

TEST_CASE("cheaper site takes the capacity") {
  std::vector<CandidateSite> sites = {fixtures::site(1, 0, 2, 4, 1, 1),
                                      fixtures::site(2, 1, 2, 4, 2, 1)};
  auto store = empty_store(2, 1);
  store.feasibility.push_back(demand_cut(VectorXd::Ones(2), 1.0));
  const auto m = build_master(sites, store, {});
  const auto sol = m.solve();
  REQUIRE(sol.status == MasterStatus::optimal);
  CHECK(sol.u[0] == 1.0);
  CHECK(sol.u[1] == 0.0);
  CHECK(sol.w[0] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(sol.objective == doctest::Approx(m.enumerate().objective).epsilon(1e-7));
}

TEST_CASE("relaxed master returns the root LP") {
  std::vector<CandidateSite> sites = {fixtures::site(1, 0, 2, 4, 1, 1)};
  sites[0].w_min = 1.0;  // fixed-charge effect: LP takes U = W / w_max
  auto store = empty_store(1, 1);
  store.feasibility.push_back(demand_cut(VectorXd::Ones(1), 0.5));
  MasterOptions opt;
  opt.relax_integrality = true;
  const auto relaxed = build_master(sites, store, opt).solve();
  const auto lp = build_master(sites, store, opt).solve_relaxation(VectorXd::Zero(1),
                                                                   VectorXd::Ones(1));
  CHECK(relaxed.objective == doctest::Approx(lp.objective));
  const auto integral = build_master(sites, store, {}).solve();
  CHECK(integral.objective > relaxed.objective + 0.1);
  CHECK(integral.w[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("branch and bound matches enumeration") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int instances = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const int ns = 1 + trial % 8;
    const int nd = 1 + trial % 3;
    std::vector<CandidateSite> sites;
    for (int s = 0; s < ns; ++s) {
      auto site = fixtures::site(s + 1, s, 0.5 + 2 * u(rng), 1 + 4 * u(rng), 0.2 + u(rng),
                                 0.1 + u(rng));
      site.w_min = 0.3 * u(rng) * site.w_max;
      site.c_min = 0.3 * u(rng) * site.c_max;
      site.c_rate = 0.25 + u(rng);
      sites.push_back(site);
    }
    auto store = empty_store(ns, nd);
    for (int d = 0; d < nd; ++d) {
      for (int k = 0; k < 3; ++k) {
        opf::OptimalityCut cut = flat_cut(ns, 2 + 3 * u(rng), d);
        cut.iteration = k;
        for (int s = 0; s < ns; ++s) {
          cut.lambda[s] = -2.0 * u(rng);
          cut.mu[s] = -0.5 * u(rng);
          cut.w_hat[s] = u(rng);
        }
        store.optimality.push_back(cut);
      }
    }
    VectorXd a(ns);
    for (int s = 0; s < ns; ++s) a[s] = u(rng);
    store.feasibility.push_back(demand_cut(a, 0.3 * a.sum()));
    const auto m = build_master(sites, store, {});
    const auto bb = m.solve();
    const auto en = m.enumerate();
    REQUIRE(en.status == MasterStatus::optimal);
    REQUIRE(bb.status == MasterStatus::optimal);
    CHECK(std::abs(bb.objective - en.objective) <= 1e-6);
    for (int s = 0; s < ns; ++s) CHECK((bb.u[s] == 0.0 || bb.u[s] == 1.0));
    ++instances;
  }
  CHECK(instances == 40);
}

TEST_CASE("infeasible master names the cuts") {
  std::vector<CandidateSite> sites = {fixtures::site(1, 0, 2, 4, 1, 1)};
  auto store = empty_store(1, 1);
  store.feasibility.push_back(demand_cut(VectorXd::Ones(1), 5.0));
  const auto sol = build_master(sites, store, {}).solve();
  REQUIRE(sol.status == MasterStatus::infeasible);
  bool names_cut = false;
  for (const auto& line : sol.report) {
    if (line.find("cut.feasibility[day=0,iter=1]") != std::string::npos) names_cut = true;
  }
  CHECK(names_cut);
}

TEST_CASE("inconsistent cuts are rejected") {
  std::vector<CandidateSite> sites = {fixtures::site(1, 0, 2, 4, 1, 1)};
  auto store = empty_store(1, 1);
  store.optimality.push_back(flat_cut(2, 1.0));
  CHECK_THROWS_AS(build_master(sites, store, {}), MasterError);
  store.optimality = {flat_cut(1, 1.0, 3)};
  CHECK_THROWS_AS(build_master(sites, store, {}), MasterError);
}

TEST_CASE("bounds") {
  MasterSolution ms;
  ms.capex = 2.0;
  ms.objective = 2.0 + 3.0;
  std::vector<DayOutcome> days(2);
  days[0].feasible = days[1].feasible = true;
  days[0].opex = 1.0;
  days[1].opex = 2.0;
  auto b = compute_bounds(ms, days, 1.0);
  REQUIRE(b.ub);
  CHECK(*b.ub == doctest::Approx(b.lb));
  days[1].feasible = false;
  CHECK_FALSE(compute_bounds(ms, days, 1.0).ub);
}

namespace {

void check_trace(const PlanResult& r) {
  CHECK(r.lb_nondecreasing());
  for (std::size_t k = 0; k < r.state.ub_history.size(); ++k) {
    const auto& ub = r.state.ub_history[k];
    if (ub) CHECK(*ub >= r.state.lb_history[k] - 1e-6 * (1 + std::abs(*ub)));
  }
  for (const auto& cut : r.state.cuts.feasibility) CHECK(cut.violation_at_anchor() > 0.0);
}

}  // namespace

TEST_CASE("zero load converges at once") {
  auto net = fixtures::three_bus_congested();
  for (auto& b : net.buses) b.pd = b.qd = 0.0;
  const std::vector<opf::DayData> days = {fixtures::constant_day(net, 3)};
  const auto r = run_gbd(net, days, {});
  REQUIRE(r.converged());
  CHECK(r.state.iteration == 1);
  CHECK(r.master.u[0] == 0.0);
  CHECK(std::abs(*r.ub) < 1e-7);
  CHECK(r.refinement_ok());
}

TEST_CASE("three-bus congestion is relieved by a feasibility cut") {
  const auto net = fixtures::three_bus_congested();
  const std::vector<opf::DayData> days = {fixtures::three_bus_day(net)};
  const auto r = run_gbd(net, days, {});
  INFO(r.message);
  REQUIRE(r.converged());
  CHECK_FALSE(r.state.cuts.feasibility.empty());
  CHECK(r.master.u[0] == 1.0);
  CHECK(*r.state.trace.back().gap < 5e-3);
  check_trace(r);
  // Every feasibility cut holds at the final decision.
  for (const auto& cut : r.state.cuts.feasibility) {
    CHECK(cut.value(r.master.w, r.master.c) <= 1e-6 * cut.violation_at_anchor());
  }
  // No anchor is revisited.
  for (std::size_t i = 0; i < r.state.cuts.feasibility.size(); ++i) {
    for (std::size_t j = i + 1; j < r.state.cuts.feasibility.size(); ++j) {
      const auto& a = r.state.cuts.feasibility[i];
      const auto& b = r.state.cuts.feasibility[j];
      const double dist = (a.w_hat - b.w_hat).cwiseAbs().maxCoeff() +
                          (a.c_hat - b.c_hat).cwiseAbs().maxCoeff();
      CHECK(dist > 1e-9);
    }
  }
  CHECK(r.refinement_ok());
}

TEST_CASE("six-bus plan is deterministic across workers") {
  const auto net = fixtures::six_bus();
  const auto days = fixtures::six_bus_days(net, 2, 24);
  GbdConfig cfg;
  cfg.workers = 1;
  const auto a = run_gbd(net, days, cfg);
  cfg.workers = 3;
  const auto b = run_gbd(net, days, cfg);
  INFO(a.message);
  REQUIRE(a.converged());
  REQUIRE(b.converged());
  check_trace(a);
  CHECK(a.state.iteration == b.state.iteration);
  CHECK(a.master.w == b.master.w);
  CHECK(a.master.c == b.master.c);
  CHECK(a.master.u == b.master.u);
  REQUIRE(a.state.cuts.optimality.size() == b.state.cuts.optimality.size());
  for (std::size_t i = 0; i < a.state.cuts.optimality.size(); ++i) {
    CHECK(a.state.cuts.optimality[i].lambda == b.state.cuts.optimality[i].lambda);
    CHECK(a.state.cuts.optimality[i].opex == b.state.cuts.optimality[i].opex);
  }
}

TEST_CASE("relaxed decomposition agrees with the centralized model") {
  const auto net = fixtures::six_bus();
  const auto days = fixtures::six_bus_days(net, 1, 24);
  GbdConfig cfg;
  cfg.mode = ValidationMode::relaxed_socp;
  cfg.delta = 1e-4;
  const auto r = run_gbd(net, days, cfg);
  INFO(r.message);
  REQUIRE(r.converged());
  const auto c = solve_centralized(net, days, cfg);
  REQUIRE(c.status == conic::SolveStatus::optimal);
  CHECK(std::abs(*r.ub - c.objective) < 1e-3);
  CHECK(r.lb <= c.objective + 1e-6);
}

TEST_CASE("trace records are single-line JSON") {
  IterationRecord rec;
  rec.iteration = 3;
  rec.lb = 1.5;
  const auto s = rec.to_json();
  CHECK(s.find('\n') == std::string::npos);
  CHECK(s.find("\"ub\":null") != std::string::npos);
}

TEST_CASE("a day no storage can rescue is reported as such") {
  auto net = fixtures::three_bus_congested();
  net.sites.clear();
  const std::vector<opf::DayData> days = {fixtures::three_bus_day(net)};
  const auto r = run_gbd(net, days, {});
  CHECK(r.status == PlanStatus::day_infeasible);
  CHECK(r.message.find("day 0") != std::string::npos);
}
