#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "bessplan/acpf/power_flow.hpp"
#include "fixtures.hpp"

using namespace bessplan;
using namespace bessplan::acpf;
using Eigen::VectorXd;

namespace {

void snapshot_loads(const NetworkModel& net, VectorXd& p, VectorXd& q) {
  p.resize(net.num_buses());
  q.resize(net.num_buses());
  for (int i = 0; i < net.num_buses(); ++i) {
    p[i] = net.buses[i].pd;
    q[i] = net.buses[i].qd;
  }
  const int sg = net.slack_generator();
  for (int g = 0; g < static_cast<int>(net.generators.size()); ++g) {
    if (g != sg) p[net.generators[g].bus] -= net.generators[g].pg;
  }
}

}  // namespace

TEST_CASE("zero injections stay flat") {
  auto net = fixtures::two_bus(0.0, 0.0);
  const auto st = solve_acpf(net, VectorXd::Zero(2), VectorXd::Zero(2));
  REQUIRE(st.converged);
  CHECK(st.iterations <= 1);
  CHECK(st.mismatch_norm == 0.0);
  CHECK(st.vm.isApprox(VectorXd::Ones(2)));
  CHECK(st.va.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("two-bus closed form") {
  const auto net = fixtures::two_bus(1.0, 0.0);
  VectorXd p(2), q(2);
  p << 0.0, 1.0;
  q << 0.0, 0.0;
  const auto st = solve_acpf(net, p, q);
  REQUIRE(st.converged);
  CHECK(st.mismatch_norm <= 1e-8);
  // sin(2 d) = 2 X P with V1 = 1 and zero reactive load: V2 = cos d.
  CHECK(std::abs(st.vm[1] - 0.9949361530051241) < 1e-9);
  CHECK(std::abs(st.va[1] + 0.1006789603951654) < 1e-9);
  CHECK(st.va[0] == 0.0);
  CHECK(std::abs(st.slack_p - 1.0) < 1e-7);
}

TEST_CASE("analytic Jacobian matches central differences") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const std::vector<NetworkModel> nets = {fixtures::two_bus(), fixtures::triangle(),
                                          fixtures::six_bus(), read_matpower("data/case118.m")};
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto& net = nets[trial % nets.size()];
    AdmittanceModel model(net);
    std::vector<BusKind> kinds;
    for (const auto& b : net.buses) kinds.push_back(b.kind);
    const auto layout = make_layout(kinds);
    const int n = net.num_buses();
    VectorXd vm(n), va(n);
    for (int i = 0; i < n; ++i) {
      vm[i] = 1.0 + 0.1 * u(rng);
      va[i] = 0.3 * u(rng);
    }
    const VectorXd zero = VectorXd::Zero(n);
    const auto j = jacobian(model, layout, vm, va);
    const int na = static_cast<int>(layout.angle_buses.size());
    // mismatch = spec - calc, so calc' = -mismatch'.
    for (int c = 0; c < layout.size(); ++c) {
      const double h = 1e-6;
      VectorXd vm1 = vm, va1 = va, vm2 = vm, va2 = va;
      if (c < na) {
        va1[layout.angle_buses[c]] += h;
        va2[layout.angle_buses[c]] -= h;
      } else {
        vm1[layout.magnitude_buses[c - na]] += h;
        vm2[layout.magnitude_buses[c - na]] -= h;
      }
      const VectorXd fd = -(mismatch(model, layout, vm1, va1, zero, zero) -
                            mismatch(model, layout, vm2, va2, zero, zero)) /
                          (2 * h);
      const double scale = std::max(1.0, j.col(c).cwiseAbs().maxCoeff());
      worst = std::max(worst, (fd - j.col(c)).cwiseAbs().maxCoeff() / scale);
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("118-bus flat start matches an independent Newton solution") {
  const auto net = read_matpower("data/case118.m");
  VectorXd p, q;
  snapshot_loads(net, p, q);
  AcpfOptions opt;
  opt.enforce_q_limits = false;
  const auto st = solve_acpf(net, p, q, nullptr, opt);
  REQUIRE(st.converged);
  CHECK(st.mismatch_norm <= 1e-8);
  // Reference values from a MATPOWER-style solve with tap ratios set to 1.
  const int ids[] = {1, 5, 10, 44, 117};
  const double vm[] = {0.955, 0.9990872869854026, 1.05, 0.9844554119359866, 0.973824446809215};
  const double va[] = {-0.3310914133541309, -0.24192752793174485, 0.10644629552274934,
                       -0.2807072906572639, -0.3315650770939334};
  for (int k = 0; k < 5; ++k) {
    const int i = net.bus_position(ids[k]);
    CHECK(std::abs(st.vm[i] - vm[k]) < 1e-7);
    CHECK(std::abs(st.va[i] - va[k]) < 1e-7);
  }
  CHECK(std::abs(st.slack_p - 5.132946450360051) < 1e-6);
  CHECK(std::abs(st.slack_q - 0.8679091405870963) < 1e-6);
}

TEST_CASE("PV bus switches to PQ at its reactive limit") {
  NetworkModel net = fixtures::two_bus(1.0, 0.5);
  net.buses[1].kind = BusKind::pv;
  net.buses[1].v_set = 1.0;
  net.generators.push_back(fixtures::generator(2, 1, 0.0, -10.0, 10.0));
  net.generators.back().p_min = 0.0;
  VectorXd p(2), q(2);
  p << 0.0, 1.0;
  q << 0.0, 0.5;
  const auto free_st = solve_acpf(net, p, q);
  REQUIRE(free_st.converged);
  CHECK(free_st.switch_rounds == 0);
  const double needed = free_st.gen_q[1];
  REQUIRE(needed > 0.1);

  net.generators[1].q_max = 0.5 * needed;
  const auto st = solve_acpf(net, p, q);
  REQUIRE(st.converged);
  CHECK(st.final_kind[1] == BusKind::pq);
  CHECK(std::abs(st.gen_q[1] - 0.5 * needed) < 1e-8);
  CHECK(st.vm[1] < 1.0);

  AcpfOptions off;
  off.enforce_q_limits = false;
  const auto st2 = solve_acpf(net, p, q, nullptr, off);
  CHECK(st2.final_kind[1] == BusKind::pv);
}

TEST_CASE("non-convergence is flagged") {
  auto net = fixtures::two_bus(50.0, 0.0);
  VectorXd p(2), q(2);
  p << 0.0, 50.0;
  q << 0.0, 0.0;
  const auto st = solve_acpf(net, p, q);
  CHECK_FALSE(st.converged);
  CHECK_FALSE(st.message.empty());
}

TEST_CASE("wrong injection size throws") {
  CHECK_THROWS_AS(solve_acpf(fixtures::two_bus(), VectorXd::Zero(3), VectorXd::Zero(3)),
                  NetworkError);
}

// ---------------------------------------------------------------------------
// residuals and recovery

#include "bessplan/acpf/residuals.hpp"
#include "bessplan/opf/subproblem.hpp"

namespace {

struct Relaxed {
  opf::OperatingPoint op;
  opf::DayData day;
};

Relaxed solve_relaxed(const NetworkModel& net, int hours) {
  Relaxed r;
  r.day = fixtures::constant_day(net, hours);
  const auto m = opf::build_subproblem(net, r.day, {});
  const VectorXd zero = VectorXd::Zero(m.num_sites());
  const auto sol = m.program.compile()->solve(m.parameters(zero, zero));
  REQUIRE(sol.optimal());
  r.op = opf::extract_operating_point(net, m, sol);
  return r;
}

std::vector<AcpfState> exact_states(const NetworkModel& net, const opf::DayData& day) {
  std::vector<AcpfState> out;
  for (int t = 0; t < day.hours(); ++t) {
    out.push_back(solve_acpf(net, day.load_p.row(t).transpose(), day.load_q.row(t).transpose()));
    REQUIRE(out.back().converged);
  }
  return out;
}

}  // namespace

TEST_CASE("exact AC states have negligible residuals") {
  for (const auto& net : {fixtures::two_bus(1.0, 0.3), fixtures::triangle()}) {
    const auto day = fixtures::constant_day(net, 2);
    const auto states = exact_states(net, day);
    const auto op = operating_point_from_states(net, states, day.load_p, day.load_q);
    const auto r = evaluate_residuals(net, op, find_cycle_basis(net));
    CHECK(r.max_nodal() <= 1e-7);
    CHECK(r.max_branch() <= 1e-7);
    CHECK(r.max_cone_gap() <= 1e-7);
    CHECK(r.max_cycle() <= 1e-9);
  }
}

TEST_CASE("tight radial relaxation satisfies the branch angle identity") {
  const auto net = fixtures::two_bus(1.0, 0.0);
  const auto relaxed = solve_relaxed(net, 2);
  const auto r = evaluate_residuals(net, relaxed.op, find_cycle_basis(net));
  CHECK(r.max_cone_gap() <= 1e-6);
  CHECK(r.max_branch() <= 1e-6);
}

TEST_CASE("meshed triangle: tight cones, AC residuals, then recovery") {
  const auto net = fixtures::triangle();
  const auto relaxed = solve_relaxed(net, 3);
  const auto cycles = find_cycle_basis(net);
  const auto before = evaluate_residuals(net, relaxed.op, cycles);
  MESSAGE("cone gap " << before.max_cone_gap() << " nodal " << before.max_nodal() << " cycle "
                      << before.max_cycle());
  CHECK(before.max_cone_gap() <= 1e-6);
  CHECK(before.max_nodal() >= 1e-3);
  CHECK(before.max_cycle() >= 1e-4);

  const auto rec = recover_feasible(net, relaxed.op, relaxed.day.load_p, relaxed.day.load_q);
  REQUIRE(rec.ok());
  const auto after = evaluate_residuals(
      net, operating_point_from_states(net, rec.states, relaxed.day.load_p, relaxed.day.load_q),
      cycles);
  CHECK(after.max_nodal() <= 1e-8);
  CHECK(after.max_cycle() <= 1e-9);
  CHECK(rec.opex > 0.0);
}

TEST_CASE("recovery of an exact point is a fixed point") {
  const auto net = fixtures::triangle();
  const auto day = fixtures::constant_day(net, 2);
  const auto op = operating_point_from_states(net, exact_states(net, day), day.load_p, day.load_q);
  const auto rec = recover_feasible(net, op, day.load_p, day.load_q);
  REQUIRE(rec.ok());
  for (const auto& st : rec.states) CHECK(st.iterations <= 1);
}

TEST_CASE("warm start needs fewer Newton iterations than flat start") {
  std::vector<int> warm, flat;
  for (const auto& net : {fixtures::two_bus(1.0, 0.3), fixtures::triangle(), fixtures::six_bus()}) {
    const auto relaxed = solve_relaxed(net, 2);
    const auto rec = recover_feasible(net, relaxed.op, relaxed.day.load_p, relaxed.day.load_q);
    REQUIRE(rec.ok());
    for (int t = 0; t < relaxed.op.hours; ++t) {
      warm.push_back(rec.states[t].iterations);
      VectorXd lp = relaxed.day.load_p.row(t).transpose();
      VectorXd lq = relaxed.day.load_q.row(t).transpose();
      AcpfInit init;
      init.vm = VectorXd::Ones(net.num_buses());
      for (int i = 0; i < net.num_buses(); ++i) {
        if (net.buses[i].kind != BusKind::pq) init.vm[i] = rec.states[t].vm[i];
      }
      init.va = VectorXd::Zero(net.num_buses());
      flat.push_back(solve_acpf(net, lp, lq, &init).iterations);
    }
  }
  std::sort(warm.begin(), warm.end());
  std::sort(flat.begin(), flat.end());
  CHECK(warm[warm.size() / 2] < flat[flat.size() / 2]);
}

TEST_CASE("nonpositive squared voltage is rejected") {
  const auto net = fixtures::two_bus();
  const auto day = fixtures::constant_day(net, 1);
  auto op = operating_point_from_states(net, exact_states(net, day), day.load_p, day.load_q);
  op.v(0, 1) = 0.0;
  CHECK_THROWS_AS(evaluate_residuals(net, op, find_cycle_basis(net)), NetworkError);
}

TEST_CASE("distribution summary") {
  const auto d = summarize({4, 1, 3, 2, 5});
  CHECK(d.count == 5);
  CHECK(d.min == 1);
  CHECK(d.median == 3);
  CHECK(d.max == 5);
  CHECK(d.q25 == 2);
  CHECK(summarize({}).count == 0);
}
