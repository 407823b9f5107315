#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include <fmt/format.h>

#include "bessplan/acpf/power_flow.hpp"
#include "bessplan/ingestion.hpp"
#include "fixtures.hpp"

using namespace bessplan;
using namespace bessplan::ingest;
using Eigen::MatrixXd;

namespace {

std::string csv_two_bus(int hours, const std::string& bad = "") {
  std::string s = "1,2\n";
  for (int t = 0; t < hours; ++t) {
    if (t == 5 && !bad.empty()) {
      s += "0," + bad + "\n";
    } else {
      s += fmt::format("0,{}\n", 50 + t);
    }
  }
  return s;
}

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("two buses over 48 hours") {
  const auto net = fixtures::two_bus();
  const auto ts = parse_timeseries(csv_two_bus(48), net);
  CHECK(ts.hours() == 48);
  CHECK(ts.days() == 2);
  CHECK(ts.day_length == 24);
  CHECK(ts.load_p(0, 1) == doctest::Approx(0.5));
  CHECK(ts.load_p(47, 1) == doctest::Approx(0.97));
  CHECK(ts.day(1).load_p.rows() == 24);
}

TEST_CASE("bad cells name their location") {
  const auto net = fixtures::two_bus();
  const auto msg = message_of([&] { parse_timeseries(csv_two_bus(48, "NaN"), net, 24, "f.csv"); });
  CHECK(msg.find("row 7") != std::string::npos);
  CHECK(msg.find("column 2") != std::string::npos);
  CHECK_FALSE(message_of([&] { parse_timeseries(csv_two_bus(48, "abc"), net); }).empty());
  CHECK_FALSE(message_of([&] { parse_timeseries(csv_two_bus(48, " "), net); }).empty());
}

TEST_CASE("structural CSV errors") {
  const auto net = fixtures::two_bus();
  CHECK(message_of([&] { parse_timeseries("1\n0\n", net, 1); }).find("missing column for bus 2") !=
        std::string::npos);
  CHECK(message_of([&] { parse_timeseries("1,9\n0,0\n", net, 1); }).find("unknown bus") !=
        std::string::npos);
  CHECK(message_of([&] { parse_timeseries(csv_two_bus(30), net); }).find("whole number") !=
        std::string::npos);
  CHECK_THROWS_AS(load_timeseries("/nonexistent.csv", net), IngestError);
}

TEST_CASE("all-zero series is valid") {
  const auto net = fixtures::two_bus();
  std::string s = "2,1\n";
  for (int t = 0; t < 24; ++t) s += "0,0\n";
  const auto ts = parse_timeseries(s, net);
  CHECK(ts.load_p.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("CSV round trip") {
  const auto net = fixtures::six_bus();
  const auto days = fixtures::six_bus_days(net, 2);
  MatrixXd p(48, 6);
  p << days[0].load_p, days[1].load_p;
  const auto back = parse_timeseries(format_timeseries(net, p), net);
  CHECK((back.load_p - p).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("reactive reconstruction by ratio") {
  auto net = fixtures::two_bus();
  TimeSeriesData ts;
  ts.load_p = MatrixXd::Constant(2, 2, 8.0);
  ts.fixed_gen_p = MatrixXd::Zero(2, 2);
  BusSnapshot snap;
  snap.p = Eigen::Vector2d(0.0, 4.0);
  snap.q = Eigen::Vector2d(0.0, 3.0);
  auto out = reconstruct_reactive(ts, net, snap);
  CHECK(out.load_q(0, 1) == doctest::Approx(6.0));
  snap.q[1] = 0.0;
  out = reconstruct_reactive(ts, net, snap);
  CHECK(out.load_q.col(1).cwiseAbs().maxCoeff() == 0.0);
  snap.p[1] = 0.0;
  snap.q[1] = 1.0;
  CHECK_THROWS_AS(reconstruct_reactive(ts, net, snap), IngestError);
}

TEST_CASE("generator bus borrows the nearest power factor") {
  // Generator at bus 1 with nominal pf 0.95; PQ buses at 0.90, 0.94, 0.99.
  NetworkModel net;
  net.buses = {fixtures::bus(1, BusKind::slack), fixtures::bus(2, BusKind::pq),
               fixtures::bus(3, BusKind::pq), fixtures::bus(4, BusKind::pq)};
  net.generators = {fixtures::generator(1, 0, 5, -5, 5)};
  auto q_for = [](double pf) { return std::sqrt(1.0 / (pf * pf) - 1.0); };
  BusSnapshot snap;
  snap.p = Eigen::Vector4d(1.0, 1.0, 1.0, 1.0);
  snap.q = Eigen::Vector4d(q_for(0.95), q_for(0.90), q_for(0.94), q_for(0.99));
  TimeSeriesData ts;
  ts.load_p = MatrixXd::Constant(3, 4, 2.0);
  ts.fixed_gen_p = MatrixXd::Zero(3, 4);
  std::vector<int> donors;
  const auto out = reconstruct_reactive(ts, net, snap, &donors);
  CHECK(donors[0] == 2);
  CHECK(out.load_q(0, 0) == doctest::Approx(2.0 * q_for(0.94)));
}

TEST_CASE("nearest power factor agrees with a brute-force scan") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.7, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> pfs(1 + trial % 9);
    for (auto& p : pfs) p = std::round(u(rng) * 100) / 100;  // force ties
    const double target = std::round(u(rng) * 100) / 100;
    int best = 0;
    for (int i = 1; i < static_cast<int>(pfs.size()); ++i) {
      if (std::abs(pfs[i] - target) < std::abs(pfs[best] - target)) best = i;
    }
    CHECK(nearest_power_factor(target, pfs) == best);
  }
  CHECK(nearest_power_factor(0.9, {}) == -1);
}

TEST_CASE("reconstruction is homogeneous") {
  const auto net = fixtures::six_bus();
  SyntheticProfileSpec spec;
  spec.days = 2;
  const auto ts = synthetic_profiles(net, spec);
  const auto snap = snapshot_of(net);
  auto scaled = ts;
  scaled.load_p *= 3.5;
  const auto a = reconstruct_reactive(ts, net, snap);
  const auto b = reconstruct_reactive(scaled, net, snap);
  CHECK((b.load_q - 3.5 * a.load_q).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("synthetic profiles are seeded") {
  const auto net = fixtures::six_bus();
  SyntheticProfileSpec spec;
  spec.days = 3;
  spec.seed = 42;
  const auto a = synthetic_profiles(net, spec);
  const auto b = synthetic_profiles(net, spec);
  CHECK(a.load_p == b.load_p);
  spec.seed = 43;
  CHECK(synthetic_profiles(net, spec).load_p != a.load_p);
  CHECK(a.hours() == 72);
  CHECK(a.fixed_gen_p(0, 1) == doctest::Approx(0.6));
}

namespace {

TimeSeriesData six_bus_series(int days) {
  const auto net = fixtures::six_bus();
  SyntheticProfileSpec spec;
  spec.days = days;
  return reconstruct_reactive(synthetic_profiles(net, spec), net, snapshot_of(net));
}

}  // namespace

TEST_CASE("boundary conditions between candidate buses") {
  const auto net = fixtures::six_bus();
  const auto ts = six_bus_series(2);
  BoundaryConditionSpec spec;
  const auto bc = generate_boundary_conditions(net, ts, spec);
  // Sites at buses 3, 5, 6: branches 3-6 and 5-6.
  REQUIRE(bc.tightened.size() == 2);
  CHECK(net.branches[bc.tightened[0]].id == 6);
  CHECK(net.branches[bc.tightened[1]].id == 8);
  for (int k : bc.tightened) {
    CHECK(bc.network.branches[k].i_max == doctest::Approx(0.82 * bc.max_current[k]));
  }
  CHECK(bc.network.generators[0].p_max >= 10.0);
  CHECK(bc.network.branches[0].i_max == net.branches[0].i_max);
}

TEST_CASE("factor one keeps the AC horizon within limits") {
  const auto net = fixtures::six_bus();
  const auto ts = six_bus_series(1);
  BoundaryConditionSpec spec;
  spec.tighten_factor = 1.0;
  spec.tighten_rule = TightenRule::incident_to_candidates;
  const auto bc = generate_boundary_conditions(net, ts, spec);
  acpf::AdmittanceModel model(bc.network);
  const MatrixXd p = ts.net_load_p();
  for (int t = 0; t < ts.hours(); ++t) {
    const auto st = acpf::solve_acpf(bc.network, p.row(t).transpose(), ts.load_q.row(t).transpose());
    REQUIRE(st.converged);
    for (int k = 0; k < bc.network.num_branches(); ++k) {
      double pf, qf, i;
      model.branch_flow(k, st.vm, st.va, pf, qf, i);
      CHECK(i <= bc.network.branches[k].i_max * (1 + 1e-9));
    }
  }
}

TEST_CASE("boundary-condition errors") {
  const auto net = fixtures::six_bus();
  const auto ts = six_bus_series(1);
  BoundaryConditionSpec spec;
  spec.tighten_factor = 0.0;
  CHECK_THROWS_AS(generate_boundary_conditions(net, ts, spec), IngestError);
  spec.tighten_factor = 0.82;
  spec.site_rule = SiteRule::voltage_violating;
  CHECK(message_of([&] { generate_boundary_conditions(net, ts, spec); })
            .find("nothing to tighten") != std::string::npos);
  spec.site_rule = SiteRule::explicit_list;
  spec.tighten_rule = TightenRule::explicit_list;
  spec.branches_to_tighten = {99};
  CHECK_THROWS_AS(generate_boundary_conditions(net, ts, spec), IngestError);
  spec.branches_to_tighten = {1};
  CHECK(generate_boundary_conditions(net, ts, spec).tightened == std::vector<int>{0});
}

TEST_CASE("voltage-violating buses become sites") {
  auto net = fixtures::six_bus();
  for (auto& b : net.buses) b.v_min = 0.98 * 0.98;
  net.sites.clear();
  const auto ts = six_bus_series(1);
  BoundaryConditionSpec spec;
  spec.site_rule = SiteRule::voltage_violating;
  spec.tighten_rule = TightenRule::incident_to_candidates;
  spec.site_template = fixtures::site(0, 0, 0.5, 2.0, 1.0, 1.0);
  const auto bc = generate_boundary_conditions(net, ts, spec);
  CHECK_FALSE(bc.violating_buses.empty());
  CHECK(bc.network.sites.size() == bc.violating_buses.size());
  CHECK(bc.network.sites[0].w_max == 0.5);
}
