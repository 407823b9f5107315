#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "bessplan/network.hpp"
#include "bessplan/opf/subproblem.hpp"

namespace fixtures {

using bessplan::Branch;
using bessplan::Bus;
using bessplan::BusKind;
using bessplan::CandidateSite;
using bessplan::Generator;
using bessplan::NetworkModel;
using bessplan::opf::DayData;

inline Bus bus(int id, BusKind kind, double pd = 0.0, double qd = 0.0) {
  Bus b;
  b.id = id;
  b.kind = kind;
  b.pd = pd;
  b.qd = qd;
  return b;
}

inline Branch branch(int id, int from, int to, double r, double x,
                     double i_max = bessplan::kUnlimited) {
  Branch br;
  br.id = id;
  br.from = from;
  br.to = to;
  br.r = r;
  br.x = x;
  br.i_max = i_max;
  return br;
}

inline Generator generator(int id, int bus, double p_max, double q_min, double q_max) {
  Generator g;
  g.id = id;
  g.bus = bus;
  g.p_min = -p_max;
  g.p_max = p_max;
  g.q_min = q_min;
  g.q_max = q_max;
  return g;
}

inline CandidateSite site(int id, int bus, double w_max, double c_max, double cost_p,
                          double cost_e) {
  CandidateSite s;
  s.id = id;
  s.bus = bus;
  s.w_max = w_max;
  s.c_max = c_max;
  s.cost_p = cost_p;
  s.cost_e = cost_e;
  return s;
}

inline DayData constant_day(const NetworkModel& net, int hours) {
  DayData d;
  d.load_p.resize(hours, net.num_buses());
  d.load_q.resize(hours, net.num_buses());
  for (int t = 0; t < hours; ++t) {
    for (int i = 0; i < net.num_buses(); ++i) {
      d.load_p(t, i) = net.buses[i].pd;
      d.load_q(t, i) = net.buses[i].qd;
    }
  }
  return d;
}

inline NetworkModel one_bus() {
  NetworkModel net;
  net.name = "one-bus";
  net.buses = {bus(1, BusKind::slack)};
  net.generators = {generator(1, 0, 10.0, -10.0, 10.0)};
  return net;
}

// Slack bus 1 feeding a load at bus 2 over a lossless-resistance line.
inline NetworkModel two_bus(double load_p = 1.0, double load_q = 0.0) {
  NetworkModel net;
  net.name = "two-bus";
  net.buses = {bus(1, BusKind::slack), bus(2, BusKind::pq, load_p, load_q)};
  net.branches = {branch(1, 0, 1, 0.0, 0.1, 3.0)};
  net.generators = {generator(1, 0, 10.0, -10.0, 10.0)};
  return net;
}

// Chain 1-2-3 with a reactive-heavy load behind a weak line. With one site
// the hourly power neutrality pins storage P at zero, so only reactive
// support from the converter can relieve the 2-3 ampacity.
inline NetworkModel three_bus_congested() {
  NetworkModel net;
  net.name = "three-bus";
  net.buses = {bus(1, BusKind::slack), bus(2, BusKind::pq, 0.1, 0.05),
               bus(3, BusKind::pq, 0.6, 0.7)};
  net.branches = {branch(1, 0, 1, 0.01, 0.05, 3.0), branch(2, 1, 2, 0.02, 0.1, 0.9)};
  net.generators = {generator(1, 0, 10.0, -10.0, 10.0)};
  net.sites = {site(1, 2, 1.0, 2.0, 1.0, 0.5)};
  return net;
}

inline DayData three_bus_day(const NetworkModel& net) {
  DayData d = constant_day(net, 3);
  const double scale[3] = {0.8, 1.0, 0.9};
  for (int t = 0; t < 3; ++t) {
    d.load_p.row(t) *= scale[t];
    d.load_q.row(t) *= scale[t];
  }
  return d;
}

// Triangle with asymmetric impedances; the cycle keeps the relaxation from
// being AC-exact even when every cone is tight.
inline NetworkModel triangle() {
  NetworkModel net;
  net.name = "triangle";
  net.buses = {bus(1, BusKind::slack), bus(2, BusKind::pq, 0.9, 0.3),
               bus(3, BusKind::pq, 0.7, 0.25)};
  net.branches = {branch(1, 0, 1, 0.01, 0.05, 4.0), branch(2, 1, 2, 0.06, 0.12, 4.0),
                  branch(3, 2, 0, 0.02, 0.3, 4.0)};
  net.generators = {generator(1, 0, 10.0, -10.0, 10.0)};
  return net;
}

// Six-bus meshed desk network: slack 1, PV 2, candidate sites at 3, 5, 6.
inline NetworkModel six_bus() {
  NetworkModel net;
  net.name = "six-bus";
  net.buses = {bus(1, BusKind::slack),         bus(2, BusKind::pv, 0.16, 0.06),
               bus(3, BusKind::pq, 0.36, 0.12), bus(4, BusKind::pq, 0.4, 0.16),
               bus(5, BusKind::pq, 0.32, 0.12), bus(6, BusKind::pq, 0.44, 0.16)};
  for (auto& b : net.buses) {
    b.v_min = 0.9 * 0.9;
    b.v_max = 1.1 * 1.1;
  }
  net.buses[1].v_set = 1.02;
  net.branches = {branch(1, 0, 1, 0.02, 0.10, 2.5), branch(2, 0, 3, 0.03, 0.15, 2.5),
                  branch(3, 1, 2, 0.04, 0.18, 2.0), branch(4, 1, 3, 0.02, 0.12, 2.0),
                  branch(5, 1, 4, 0.03, 0.14, 2.0), branch(6, 2, 5, 0.05, 0.20, 1.5),
                  branch(7, 3, 4, 0.04, 0.16, 2.0), branch(8, 4, 5, 0.03, 0.15, 1.5)};
  Generator slack = generator(1, 0, 10.0, -5.0, 5.0);
  Generator pv = generator(2, 1, 1.0, -1.5, 1.5);
  pv.p_min = 0.0;
  pv.pg = 0.6;
  net.generators = {slack, pv};
  net.sites = {site(1, 2, 1.0, 4.0, 1.0, 0.2), site(2, 4, 1.0, 4.0, 1.1, 0.25),
               site(3, 5, 1.0, 4.0, 1.2, 0.3)};
  return net;
}

// Daily shape with a morning and an evening peak, varied across days.
inline double six_bus_shape(int day, int hour) {
  const double h = static_cast<double>(hour);
  const double base = 0.75 + 0.2 * std::sin(2.0 * std::numbers::pi * (h - 9.0) / 24.0) +
                      0.15 * std::exp(-0.5 * std::pow((h - 19.0) / 2.0, 2));
  return base * (1.0 + 0.05 * day);
}

inline std::vector<DayData> six_bus_days(const NetworkModel& net, int days = 4, int hours = 24) {
  std::vector<DayData> out;
  for (int d = 0; d < days; ++d) {
    DayData day;
    day.load_p.resize(hours, net.num_buses());
    day.load_q.resize(hours, net.num_buses());
    for (int t = 0; t < hours; ++t) {
      const double f = six_bus_shape(d, t);
      for (int i = 0; i < net.num_buses(); ++i) {
        day.load_p(t, i) = net.buses[i].pd * f;
        day.load_q(t, i) = net.buses[i].qd * f;
      }
      day.load_p(t, 1) -= net.generators[1].pg;  // fixed PV dispatch
    }
    out.push_back(day);
  }
  return out;
}

}  // namespace fixtures
