#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "bessplan/opf/cuts.hpp"
#include "bessplan/opf/subproblem.hpp"
#include "fixtures.hpp"

using namespace bessplan;
using namespace bessplan::opf;
using Eigen::VectorXd;

namespace {

conic::SolutionRecord solve(const SubproblemModel& m, const VectorXd& w, const VectorXd& c) {
  return m.program.compile()->solve(m.parameters(w, c));
}

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST_CASE("single bus without load costs nothing") {
  const auto net = fixtures::one_bus();
  const auto day = fixtures::constant_day(net, 4);
  const auto m = build_subproblem(net, day, {});
  const auto sol = solve(m, VectorXd(0), VectorXd(0));
  REQUIRE(sol.optimal());
  CHECK(std::abs(sol.objective) < 1e-7);
  const auto op = extract_operating_point(net, m, sol);
  CHECK(op.slack_p.cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("radial two-bus relaxation is tight and matches the AC solution") {
  const auto net = fixtures::two_bus(1.0, 0.0);
  const auto day = fixtures::constant_day(net, 2);
  const auto m = build_subproblem(net, day, {});
  const auto sol = solve(m, VectorXd(0), VectorXd(0));
  REQUIRE(sol.optimal());
  const auto op = extract_operating_point(net, m, sol);
  const auto gaps = relaxation_gaps(net, op);
  CHECK(gaps.cwiseAbs().maxCoeff() < 1e-6);
  // (1 + sqrt(0.96)) / 2 from the two-bus power-flow quadratic.
  CHECK(std::abs(op.v(0, 1) - 0.9898979485566356) < 1e-6);
  CHECK(std::abs(op.q_o(0, 0) - 0.1 * (op.p_s(0, 0) * op.p_s(0, 0) + op.q_s(0, 0) * op.q_s(0, 0)) /
                                     op.v(0, 0)) < 1e-6);
  CHECK(std::abs(op.p_o(0, 0)) < 1e-8);
}

TEST_CASE("quadratic loss mode also solves the radial case") {
  const auto net = fixtures::two_bus(1.0, 0.0);
  OpfWeights w;
  w.loss_mode = LossMode::quadratic;
  const auto m = build_subproblem(net, fixtures::constant_day(net, 2), w);
  const auto sol = solve(m, VectorXd(0), VectorXd(0));
  REQUIRE(sol.optimal());
  const auto op = extract_operating_point(net, m, sol);
  CHECK(relaxation_gaps(net, op).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(std::abs(sol.objective - 2.0 * op.q_o(0, 0) * op.q_o(0, 0)) < 1e-6);
}

TEST_CASE("subproblem invariants on the six-bus desk fixture") {
  const auto net = fixtures::six_bus();
  const auto days = fixtures::six_bus_days(net, 1);
  const auto m = build_subproblem(net, days[0], {});
  const auto sol = solve(m, vec({0.3, 0.2, 0.1}), vec({0.6, 0.4, 0.3}));
  REQUIRE(sol.optimal());
  const auto op = extract_operating_point(net, m, sol);
  CHECK(relaxation_gaps(net, op).minCoeff() >= -1e-8);
  for (int t = 0; t < op.hours; ++t) CHECK(std::abs(op.storage_p.row(t).sum()) < 1e-8);
  for (int s = 0; s < 3; ++s) {
    CHECK(std::abs(op.energy(0, s) - op.energy(op.hours, s)) < 1e-8);
    CHECK(std::abs(op.energy(0, s) - 0.5 * 0.8 * sol.value(m.c[s])) < 1e-8);
    for (int t = 0; t < op.hours; ++t) {
      const double p = op.storage_p(t, s), q = op.storage_q(t, s);
      CHECK(std::hypot(p, q) <= sol.value(m.w[s]) + 1e-7);
    }
  }
  // Equalities of the grid body.
  for (int t = 0; t < op.hours; ++t) {
    for (int k = 0; k < net.num_branches(); ++k) {
      const auto& br = net.branches[k];
      CHECK(std::abs(op.theta_l(t, k) - (br.x * op.p_s(t, k) - br.r * op.q_s(t, k))) < 1e-7);
      CHECK(std::abs(op.theta_l(t, k) - (op.theta_n(t, br.from) - op.theta_n(t, br.to))) < 1e-7);
      CHECK(std::abs(op.p_o(t, k) * br.x - op.q_o(t, k) * br.r) < 1e-7);
      CHECK(op.k_o(t, k) >= op.q_o(t, k) - 1e-8);
    }
  }
}

TEST_CASE("feasibility variant shares the constraint body") {
  const auto net = fixtures::six_bus();
  const auto days = fixtures::six_bus_days(net, 1, 6);
  const auto a = build_subproblem(net, days[0], {});
  const auto b = build_feasibility_subproblem(net, days[0], {});
  REQUIRE(a.program.constraints().size() == b.program.constraints().size());
  for (std::size_t i = 0; i < a.program.constraints().size(); ++i) {
    const auto& ca = a.program.constraints()[i];
    const auto& cb = b.program.constraints()[i];
    CHECK(ca.label == cb.label);
    CHECK(ca.rows == cb.rows);
    CHECK(ca.kind == cb.kind);
  }
  CHECK(b.program.num_variables() == a.program.num_variables() + 2 * 3);
}

TEST_CASE("feasibility subproblem is zero at a feasible anchor") {
  const auto net = fixtures::three_bus_congested();
  const auto day = fixtures::three_bus_day(net);
  const auto m = build_feasibility_subproblem(net, day, {});
  const auto sol = solve(m, vec({0.5}), vec({0.5}));
  REQUIRE(sol.optimal());
  CHECK(std::abs(sol.objective) < 1e-6);
  CHECK(std::abs(sol.value(m.slack_w[0])) < 1e-8);
  CHECK(std::abs(sol.value(m.slack_c[0])) < 1e-8);
}

TEST_CASE("congested three-bus case needs storage") {
  const auto net = fixtures::three_bus_congested();
  const auto day = fixtures::three_bus_day(net);
  const auto std_model = build_subproblem(net, day, {});
  CHECK(solve(std_model, vec({0.0}), vec({0.0})).status == conic::SolveStatus::infeasible);

  OpfWeights w1, w2;
  w2.w_slack = 2.0 * w1.w_slack;
  const auto f1 = build_feasibility_subproblem(net, day, w1);
  const auto f2 = build_feasibility_subproblem(net, day, w2);
  const auto s1 = solve(f1, vec({0.0}), vec({0.0}));
  const auto s2 = solve(f2, vec({0.0}), vec({0.0}));
  REQUIRE(s1.optimal());
  REQUIRE(s2.optimal());
  const double sw = s1.value(f1.slack_w[0]);
  CHECK(sw > 1e-3);
  CHECK(std::abs(s2.objective - 2.0 * s1.objective) < 1e-6 * s2.objective);
  CHECK(std::abs(s2.value(f2.slack_w[0]) - sw) < 1e-6);

  // Enlarging W by the needed slack restores feasibility of the standard problem.
  const double need = sw + s1.value(f1.slack_c[0]);
  const auto ok = solve(std_model, vec({sw + 1e-4}), vec({need + 1e-4}));
  CHECK(ok.optimal());

  const auto cut = extract_feasibility_cut(f1, s1, vec({0.0}), vec({0.0}), 0, 0, w1.w_slack);
  CHECK(cut.anchor_value() > 0.0);
  CHECK(std::abs(cut.value(vec({0.0}), vec({0.0})) - cut.anchor_value()) < 1e-12);
  CHECK(cut.nu[0] < 0.0);
  // Finite difference of the feasibility value in W_hat.
  const double h = 1e-4;
  const auto sp = solve(f1, vec({h}), vec({0.0}));
  REQUIRE(sp.optimal());
  CHECK(std::abs((sp.objective - s1.objective) / h - cut.nu[0]) < 1e-2 * std::abs(cut.nu[0]));
}

TEST_CASE("feasibility cut on a feasible anchor is refused") {
  const auto net = fixtures::three_bus_congested();
  const auto day = fixtures::three_bus_day(net);
  const auto m = build_feasibility_subproblem(net, day, {});
  const auto sol = solve(m, vec({0.5}), vec({0.5}));
  CHECK_THROWS_AS(extract_feasibility_cut(m, sol, vec({0.5}), vec({0.5}), 0, 0, 1e3), CutError);
}

TEST_CASE("optimality cut passes through the anchor and underestimates") {
  const auto net = fixtures::six_bus();
  const auto days = fixtures::six_bus_days(net, 1, 6);
  const auto m = build_dc_subproblem(net, days[0], {});
  const auto compiled = m.program.compile();
  const VectorXd w0 = vec({0.2, 0.1, 0.1}), c0 = vec({0.4, 0.3, 0.2});
  const auto sol = compiled->solve(m.parameters(w0, c0));
  REQUIRE(sol.optimal());
  const auto cut = extract_optimality_cut(m, sol, w0, c0, 0, 1);
  CHECK(cut.value(w0, c0) == doctest::Approx(sol.objective).epsilon(1e-12));
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 0.6);
  int checked = 0;
  for (int i = 0; i < 100; ++i) {
    VectorXd w(3), c(3);
    for (int s = 0; s < 3; ++s) {
      w[s] = u(rng);
      c[s] = w[s] + u(rng);
    }
    const auto r = compiled->solve(m.parameters(w, c));
    if (!r.optimal()) continue;
    ++checked;
    CHECK(cut.value(w, c) <= r.objective + 1e-6);
  }
  CHECK(checked == 100);
}

TEST_CASE("optimality cut underestimates the SOCP value function") {
  const auto net = fixtures::six_bus();
  const auto days = fixtures::six_bus_days(net, 1, 4);
  const auto m = build_subproblem(net, days[0], {});
  const auto compiled = m.program.compile();
  const VectorXd w0 = vec({0.2, 0.1, 0.1}), c0 = vec({0.4, 0.3, 0.2});
  const auto sol = compiled->solve(m.parameters(w0, c0));
  REQUIRE(sol.optimal());
  const auto cut = extract_optimality_cut(m, sol, w0, c0, 0, 1);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 0.6);
  for (int i = 0; i < 20; ++i) {
    VectorXd w(3), c(3);
    for (int s = 0; s < 3; ++s) {
      w[s] = u(rng);
      c[s] = w[s] + u(rng);
    }
    const auto r = compiled->solve(m.parameters(w, c));
    REQUIRE(r.optimal());
    CHECK(cut.value(w, c) <= r.objective + 1e-5);
  }
}

TEST_CASE("zero duals give a constant optimality cut") {
  const auto net = fixtures::one_bus();
  const auto day = fixtures::constant_day(net, 2);
  auto n2 = net;
  n2.sites = {fixtures::site(1, 0, 1.0, 2.0, 1.0, 1.0)};
  const auto m = build_subproblem(n2, day, {});
  const auto sol = solve(m, vec({0.3}), vec({0.5}));
  REQUIRE(sol.optimal());
  const auto cut = extract_optimality_cut(m, sol, vec({0.3}), vec({0.5}), 0, 0);
  CHECK(std::abs(cut.lambda[0]) < 1e-6);
  CHECK(std::abs(cut.mu[0]) < 1e-6);
  CHECK(std::abs(cut.value(vec({0.9}), vec({1.5})) - cut.opex) < 1e-5);
}

TEST_CASE("optimality cut requires duals") {
  const auto net = fixtures::one_bus();
  auto n2 = net;
  n2.sites = {fixtures::site(1, 0, 1.0, 2.0, 1.0, 1.0)};
  const auto m = build_subproblem(n2, fixtures::constant_day(n2, 2), {});
  auto sol = solve(m, vec({0.3}), vec({0.5}));
  sol.duals.clear();
  CHECK_THROWS_AS(extract_optimality_cut(m, sol, vec({0.3}), vec({0.5}), 0, 0), CutError);
}

TEST_CASE("DC subproblem on two buses") {
  const auto net = fixtures::two_bus(1.0, 0.0);
  const auto m = build_dc_subproblem(net, fixtures::constant_day(net, 1), {});
  const auto sol = solve(m, VectorXd(0), VectorXd(0));
  REQUIRE(sol.optimal());
  const auto op = extract_operating_point(net, m, sol);
  CHECK(std::abs(op.p_s(0, 0) - 1.0) < 1e-8);
  CHECK(std::abs(op.theta_n(0, 0) - op.theta_n(0, 1) - 0.1) < 1e-8);

  auto tight = net;
  tight.branches[0].i_max = 0.8;
  const auto mt = build_dc_subproblem(tight, fixtures::constant_day(tight, 1), {});
  CHECK(solve(mt, VectorXd(0), VectorXd(0)).status == conic::SolveStatus::infeasible);
}

TEST_CASE("wrong day data is rejected") {
  const auto net = fixtures::two_bus();
  DayData d;
  d.load_p = Eigen::MatrixXd::Zero(3, 5);
  d.load_q = Eigen::MatrixXd::Zero(3, 5);
  CHECK_THROWS(build_subproblem(net, d, {}));
  const auto m = build_subproblem(net, fixtures::constant_day(net, 2), {});
  CHECK_THROWS(m.parameters(vec({1.0}), vec({1.0})));
}

TEST_CASE("118-bus subproblem size") {
  const auto net = read_matpower("data/case118.m");
  auto withsites = net;
  for (int i = 0; i < net.num_buses(); ++i) {
    withsites.sites.push_back(fixtures::site(i + 1, i, 1.0, 4.0, 1.0, 1.0));
  }
  const int g = static_cast<int>(net.generators.size()) - 1;
  CHECK(2 + g + 4 * net.num_buses() + 6 * net.num_branches() == 1601);
  DayData day;
  day.load_p = Eigen::MatrixXd::Zero(24, net.num_buses());
  day.load_q = Eigen::MatrixXd::Zero(24, net.num_buses());
  const auto m = build_subproblem(withsites, day, {});
  CHECK(m.program.num_variables() == 47274);
  CHECK(m.program.num_constraints() == 80482);
  CHECK(m.program.num_parameters() == 236);
}
