#include "bessplan/opf/subproblem.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

namespace bessplan::opf {

using conic::Expr;
using conic::Program;

const char* to_string(LossMode mode) {
  return mode == LossMode::linear ? "linear" : "quadratic";
}

LossMode parse_loss_mode(const std::string& s) {
  if (s == "linear") return LossMode::linear;
  if (s == "quadratic") return LossMode::quadratic;
  throw std::invalid_argument("unknown loss mode '" + s + "'");
}

conic::CompiledProgram::ParameterValues SubproblemModel::parameters(
    const Eigen::VectorXd& w_hat_values, const Eigen::VectorXd& c_hat_values) const {
  if (w_hat_values.size() != num_sites() || c_hat_values.size() != num_sites()) {
    throw std::invalid_argument(fmt::format("expected {} linking values per kind", num_sites()));
  }
  conic::CompiledProgram::ParameterValues values(program.num_parameters(), 0.0);
  for (int s = 0; s < num_sites(); ++s) {
    values[w_hat[s].id] = w_hat_values[s];
    values[c_hat[s].id] = c_hat_values[s];
  }
  return values;
}

namespace {

struct Context {
  const NetworkModel& net;
  const OpfWeights& weights;
  int slack_bus;
  int slack_gen;
  std::vector<int> nonslack;
  std::vector<double> oc;
  double current_cap;
};

double derive_current_cap(const std::vector<const DayData*>& days) {
  double worst = 0.0;
  for (const DayData* d : days) {
    for (int t = 0; t < d->hours(); ++t) {
      worst = std::max(worst, d->load_p.row(t).cwiseAbs().sum() + d->load_q.row(t).cwiseAbs().sum());
    }
  }
  return std::max(2.0, 2.0 * worst);
}

Context make_context(const NetworkModel& net, const OpfWeights& weights,
                     const std::vector<const DayData*>& days) {
  validate(net);
  Context ctx{net, weights, net.slack_bus(), net.slack_generator(), {}, {}, 0.0};
  for (int g = 0; g < static_cast<int>(net.generators.size()); ++g) {
    if (g != ctx.slack_gen) ctx.nonslack.push_back(g);
  }
  if (weights.oc.empty()) {
    ctx.oc.assign(net.num_branches(), 1.0);
  } else if (static_cast<int>(weights.oc.size()) == net.num_branches()) {
    ctx.oc = weights.oc;
  } else {
    throw std::invalid_argument(fmt::format("expected {} branch loss costs, got {}",
                                            net.num_branches(), weights.oc.size()));
  }
  for (const DayData* d : days) {
    if (d->load_p.cols() != net.num_buses() || d->load_q.cols() != net.num_buses() ||
        d->load_q.rows() != d->load_p.rows()) {
      throw std::invalid_argument("day data does not match the network bus count");
    }
    if (!d->load_p.allFinite() || !d->load_q.allFinite()) {
      throw std::invalid_argument("day data contains non-finite loads");
    }
  }
  ctx.current_cap =
      weights.unlimited_current > 0.0 ? weights.unlimited_current : derive_current_cap(days);
  if (!(weights.dt > 0.0)) throw std::invalid_argument("dt must be positive");
  return ctx;
}

double ampacity(const Context& ctx, const Branch& br) {
  return std::isfinite(br.i_max) ? br.i_max : ctx.current_cap;
}

// SOC-OPF grid constraints of one hour. Storage injections are created here
// and constrained by emit_storage.
HourHandles emit_soc_hour(Program& prog, const Context& ctx, int t, const Eigen::VectorXd& lp,
                          const Eigen::VectorXd& lq, bool penalize_losses) {
  const NetworkModel& net = ctx.net;
  const int n = net.num_buses(), l = net.num_branches(), ns = static_cast<int>(net.sites.size());
  HourHandles h;
  h.v = prog.add_block(fmt::format("V[{}]", t), n);
  h.theta_n = prog.add_block(fmt::format("theta_n[{}]", t), n);
  h.p_n = prog.add_block(fmt::format("p_n[{}]", t), n);
  h.q_n = prog.add_block(fmt::format("q_n[{}]", t), n);
  h.theta_l = prog.add_block(fmt::format("theta_l[{}]", t), l);
  h.p_s = prog.add_block(fmt::format("p_s[{}]", t), l);
  h.q_s = prog.add_block(fmt::format("q_s[{}]", t), l);
  h.p_o = prog.add_block(fmt::format("p_o[{}]", t), l);
  h.q_o = prog.add_block(fmt::format("q_o[{}]", t), l);
  h.k_o = prog.add_block(fmt::format("K_o[{}]", t), l);
  h.slack_p = prog.add_variable(fmt::format("P_slack[{}]", t));
  h.slack_q = prog.add_variable(fmt::format("Q_slack[{}]", t));
  h.gen_q = prog.add_block(fmt::format("Q_gen[{}]", t), static_cast<int>(ctx.nonslack.size()));
  h.st_p = prog.add_block(fmt::format("P_st[{}]", t), ns);
  h.st_q = prog.add_block(fmt::format("Q_st[{}]", t), ns);

  const Generator& sg = net.generators[ctx.slack_gen];
  const Bus& sb = net.buses[ctx.slack_bus];
  prog.add_equality(h.theta_n[ctx.slack_bus], 0.0, "grid.slack_angle");
  prog.add_equality(h.v[ctx.slack_bus], sb.v_set * sb.v_set, "grid.slack_voltage");
  prog.add_greater_equal(h.slack_p, sg.p_min, "grid.slack_p_min");
  prog.add_less_equal(h.slack_p, sg.p_max, "grid.slack_p_max");
  prog.add_greater_equal(h.slack_q, sg.q_min, "grid.slack_q_min");
  prog.add_less_equal(h.slack_q, sg.q_max, "grid.slack_q_max");
  {
    Expr total;
    for (int s = 0; s < ns; ++s) total += h.st_p[s];
    prog.add_equality(total, 0.0, "grid.market_neutrality");
  }

  // Nodal balances with the physical branch orientation: power p_s leaves
  // the sending end, p_s - p_o arrives at the receiving end.
  std::vector<Expr> flow_p(n), flow_q(n), gen_p(n), gen_q(n);
  for (int k = 0; k < l; ++k) {
    const Branch& br = net.branches[k];
    flow_p[br.from] += h.p_s[k];
    flow_q[br.from] += h.q_s[k];
    flow_p[br.to] -= Expr(h.p_s[k]) - Expr(h.p_o[k]);
    flow_q[br.to] -= Expr(h.q_s[k]) - Expr(h.q_o[k]);
  }
  gen_p[ctx.slack_bus] += h.slack_p;
  gen_q[ctx.slack_bus] += h.slack_q;
  for (std::size_t j = 0; j < ctx.nonslack.size(); ++j) {
    gen_q[net.generators[ctx.nonslack[j]].bus] += h.gen_q[j];
  }
  for (int s = 0; s < ns; ++s) {
    gen_p[net.sites[s].bus] -= h.st_p[s];
    gen_q[net.sites[s].bus] -= h.st_q[s];
  }
  for (int i = 0; i < n; ++i) {
    const Bus& b = net.buses[i];
    prog.add_equality(h.p_n[i], flow_p[i] + b.gs * Expr(h.v[i]), "bus.p_balance");
    prog.add_equality(h.q_n[i], flow_q[i] - b.bs * Expr(h.v[i]), "bus.q_balance");
    prog.add_equality(h.p_n[i], gen_p[i] - lp[i], "bus.p_injection");
    prog.add_equality(h.q_n[i], gen_q[i] - lq[i], "bus.q_injection");
    prog.add_greater_equal(h.v[i], b.v_min, "bus.v_min");
    prog.add_less_equal(h.v[i], b.v_max, "bus.v_max");
    if (ctx.weights.angle_window) {
      prog.add_greater_equal(h.theta_n[i], -std::numbers::pi, "bus.angle_min");
      prog.add_less_equal(h.theta_n[i], std::numbers::pi, "bus.angle_max");
    }
  }
  for (std::size_t j = 0; j < ctx.nonslack.size(); ++j) {
    const Generator& g = net.generators[ctx.nonslack[j]];
    prog.add_greater_equal(h.gen_q[j], g.q_min, "gen.q_min");
    prog.add_less_equal(h.gen_q[j], g.q_max, "gen.q_max");
  }
  for (int k = 0; k < l; ++k) {
    const Branch& br = net.branches[k];
    const double r = br.r, x = br.x;
    prog.add_equality(Expr(h.v[br.from]) - Expr(h.v[br.to]),
                      2.0 * r * Expr(h.p_s[k]) + 2.0 * x * Expr(h.q_s[k]) - r * Expr(h.p_o[k]) -
                          x * Expr(h.q_o[k]),
                      "branch.voltage_drop");
    prog.add_equality(h.theta_l[k], x * Expr(h.p_s[k]) - r * Expr(h.q_s[k]), "branch.angle_proxy");
    prog.add_equality(h.theta_l[k], Expr(h.theta_n[br.from]) - Expr(h.theta_n[br.to]),
                      "branch.angle_difference");
    prog.add_rotated_soc(Expr(h.q_o[k]) * (0.5 / x), h.v[br.from], {h.p_s[k], h.q_s[k]},
                         "branch.loss_cone");
    prog.add_greater_equal(h.k_o[k], h.q_o[k], "branch.loss_bound");
    prog.add_equality(x * Expr(h.p_o[k]), r * Expr(h.q_o[k]), "branch.loss_ratio");
    const double s2 = std::pow(std::sin(br.theta_max), 2);
    prog.add_rotated_soc(0.5 * s2 * Expr(h.v[br.from]), h.v[br.to], {h.theta_l[k]},
                         "branch.tightness_cone");
    const double imax = ampacity(ctx, br);
    prog.add_less_equal(h.k_o[k], x * imax * imax, "branch.ampacity");
    prog.add_greater_equal(h.theta_l[k], -br.theta_max, "branch.angle_min");
    prog.add_less_equal(h.theta_l[k], br.theta_max, "branch.angle_max");
    if (penalize_losses) {
      const double wgt = ctx.weights.w_loss * ctx.oc[k];
      if (ctx.weights.loss_mode == LossMode::linear) {
        prog.add_objective(wgt * Expr(h.k_o[k]));
      } else {
        prog.add_objective_square(wgt, h.q_o[k], fmt::format("loss[{}][{}]", t, k));
      }
    }
  }
  return h;
}

// Lossless DC flow; |flow| bounded by K for the loss proxy.
HourHandles emit_dc_hour(Program& prog, const Context& ctx, int t, const Eigen::VectorXd& lp,
                         bool penalize_losses) {
  const NetworkModel& net = ctx.net;
  const int n = net.num_buses(), l = net.num_branches(), ns = static_cast<int>(net.sites.size());
  HourHandles h;
  h.theta_n = prog.add_block(fmt::format("theta_n[{}]", t), n);
  h.p_s = prog.add_block(fmt::format("flow[{}]", t), l);
  h.k_o = prog.add_block(fmt::format("K_o[{}]", t), l);
  h.slack_p = prog.add_variable(fmt::format("P_slack[{}]", t));
  h.st_p = prog.add_block(fmt::format("P_st[{}]", t), ns);

  const Generator& sg = net.generators[ctx.slack_gen];
  prog.add_equality(h.theta_n[ctx.slack_bus], 0.0, "grid.slack_angle");
  prog.add_greater_equal(h.slack_p, sg.p_min, "grid.slack_p_min");
  prog.add_less_equal(h.slack_p, sg.p_max, "grid.slack_p_max");
  {
    Expr total;
    for (int s = 0; s < ns; ++s) total += h.st_p[s];
    prog.add_equality(total, 0.0, "grid.market_neutrality");
  }
  std::vector<Expr> balance(n);
  for (int k = 0; k < l; ++k) {
    balance[net.branches[k].from] += h.p_s[k];
    balance[net.branches[k].to] -= h.p_s[k];
  }
  std::vector<Expr> inj(n);
  inj[ctx.slack_bus] += h.slack_p;
  for (int s = 0; s < ns; ++s) inj[net.sites[s].bus] -= h.st_p[s];
  for (int i = 0; i < n; ++i) prog.add_equality(balance[i], inj[i] - lp[i], "bus.p_balance");
  for (int k = 0; k < l; ++k) {
    const Branch& br = net.branches[k];
    prog.add_equality(br.x * Expr(h.p_s[k]),
                      Expr(h.theta_n[br.from]) - Expr(h.theta_n[br.to]), "branch.dc_flow");
    const double imax = ampacity(ctx, br);
    prog.add_less_equal(h.p_s[k], imax, "branch.ampacity_max");
    prog.add_greater_equal(h.p_s[k], -imax, "branch.ampacity_min");
    prog.add_greater_equal(h.k_o[k], h.p_s[k], "branch.abs_flow_pos");
    prog.add_greater_equal(h.k_o[k], -Expr(h.p_s[k]), "branch.abs_flow_neg");
    if (penalize_losses) prog.add_objective(ctx.weights.w_loss * ctx.oc[k] * Expr(h.k_o[k]));
  }
  return h;
}

// Storage dynamics, converter capability and state-of-energy limits over
// `hours`, partitioned into days of `day_length` hours.
std::vector<std::vector<Var>> emit_storage(Program& prog, const Context& ctx,
                                           const std::vector<HourHandles>& hours,
                                           const std::vector<Var>& w, const std::vector<Var>& c,
                                           int day_length, bool dc) {
  const NetworkModel& net = ctx.net;
  const int ns = static_cast<int>(net.sites.size()), nh = static_cast<int>(hours.size());
  std::vector<std::vector<Var>> energy(ns);
  for (int s = 0; s < ns; ++s) {
    const CandidateSite& site = net.sites[s];
    energy[s] = prog.add_block(fmt::format("E[{}]", s), nh + 1);
    for (int t = 0; t < nh; ++t) {
      prog.add_equality(energy[s][t + 1],
                        Expr(energy[s][t]) + ctx.weights.dt * Expr(hours[t].st_p[s]),
                        "storage.energy_balance");
      if (dc) {
        prog.add_less_equal(Expr(hours[t].st_p[s]) - Expr(w[s]), 0.0, "storage.power_max");
        prog.add_less_equal(-Expr(hours[t].st_p[s]) - Expr(w[s]), 0.0, "storage.power_min");
      } else {
        prog.add_soc({hours[t].st_p[s], hours[t].st_q[s]}, w[s], "storage.converter");
      }
    }
    for (int k = 0; k <= nh; ++k) {
      prog.add_greater_equal(energy[s][k], site.soe_min * Expr(c[s]), "storage.soe_min");
      prog.add_less_equal(energy[s][k], site.soe_max * Expr(c[s]), "storage.soe_max");
    }
    for (int d = 0; d * day_length < nh; ++d) {
      const int first = d * day_length, last = std::min(nh, (d + 1) * day_length);
      prog.add_equality(energy[s][first], energy[s][last], "storage.daily_neutrality");
      prog.add_equality(energy[s][first],
                        ctx.weights.initial_soe_factor * (site.soe_max - site.soe_min) * Expr(c[s]),
                        "storage.initial_soe");
    }
  }
  return energy;
}

SubproblemModel build_daily(const NetworkModel& net, const DayData& day, const OpfWeights& weights,
                            SubproblemKind kind, bool dc) {
  const Context ctx = make_context(net, weights, {&day});
  if (day.hours() <= 0) throw std::invalid_argument("day data has no hours");
  SubproblemModel m;
  m.kind = kind;
  m.hours = day.hours();
  m.nonslack_gens = ctx.nonslack;
  Program& prog = m.program;
  const bool feasibility = kind == SubproblemKind::feasibility;
  const int ns = static_cast<int>(net.sites.size());

  for (int t = 0; t < day.hours(); ++t) {
    const Eigen::VectorXd lp = day.load_p.row(t).transpose();
    const Eigen::VectorXd lq = day.load_q.row(t).transpose();
    m.hour.push_back(dc ? emit_dc_hour(prog, ctx, t, lp, !feasibility)
                        : emit_soc_hour(prog, ctx, t, lp, lq, !feasibility));
  }
  m.w = prog.add_block("W", ns);
  m.c = prog.add_block("C", ns);
  m.energy = emit_storage(prog, ctx, m.hour, m.w, m.c, day.hours(), dc);
  if (feasibility) {
    m.slack_w = prog.add_block("s_W", ns, true);
    m.slack_c = prog.add_block("s_C", ns, true);
  }
  for (int s = 0; s < ns; ++s) {
    m.w_hat.push_back(prog.add_parameter(fmt::format("W_hat[{}]", s)));
    m.c_hat.push_back(prog.add_parameter(fmt::format("C_hat[{}]", s)));
    if (feasibility) {
      m.link_w.push_back(prog.add_equality(Expr(m.w[s]) - Expr(m.slack_w[s]), m.w_hat[s],
                                           "link.power", true));
      m.link_c.push_back(prog.add_equality(Expr(m.c[s]) - Expr(m.slack_c[s]), m.c_hat[s],
                                           "link.energy", true));
      prog.add_objective(weights.w_slack * (Expr(m.slack_w[s]) + Expr(m.slack_c[s])));
    } else {
      m.link_w.push_back(prog.add_equality(m.w[s], m.w_hat[s], "link.power", true));
      m.link_c.push_back(prog.add_equality(m.c[s], m.c_hat[s], "link.energy", true));
    }
    prog.add_less_equal(m.w[s], net.sites[s].c_rate * Expr(m.c[s]), "site.c_rate");
  }
  return m;
}

}  // namespace

SubproblemModel build_subproblem(const NetworkModel& net, const DayData& day,
                                 const OpfWeights& weights) {
  return build_daily(net, day, weights, SubproblemKind::standard, false);
}

SubproblemModel build_feasibility_subproblem(const NetworkModel& net, const DayData& day,
                                             const OpfWeights& weights) {
  if (!(weights.w_slack > 0.0)) throw std::invalid_argument("w_slack must be positive");
  return build_daily(net, day, weights, SubproblemKind::feasibility, false);
}

SubproblemModel build_dc_subproblem(const NetworkModel& net, const DayData& day,
                                    const OpfWeights& weights, bool feasibility) {
  if (feasibility && !(weights.w_slack > 0.0)) {
    throw std::invalid_argument("w_slack must be positive");
  }
  auto m = build_daily(net, day, weights,
                       feasibility ? SubproblemKind::feasibility : SubproblemKind::dc, true);
  return m;
}

CentralizedModel build_centralized(const NetworkModel& net, const std::vector<DayData>& days,
                                   const OpfWeights& weights, double capex_scale, bool dc) {
  if (days.empty()) throw std::invalid_argument("centralized model needs at least one day");
  std::vector<const DayData*> ptrs;
  for (const auto& d : days) {
    if (d.hours() != days.front().hours()) {
      throw std::invalid_argument("all days must have the same length");
    }
    ptrs.push_back(&d);
  }
  const Context ctx = make_context(net, weights, ptrs);
  CentralizedModel m;
  m.dc = dc;
  m.day_length = days.front().hours();
  Program& prog = m.program;
  const int ns = static_cast<int>(net.sites.size());
  int t_global = 0;
  for (const auto& d : days) {
    for (int t = 0; t < d.hours(); ++t, ++t_global) {
      const Eigen::VectorXd lp = d.load_p.row(t).transpose();
      const Eigen::VectorXd lq = d.load_q.row(t).transpose();
      m.hour.push_back(dc ? emit_dc_hour(prog, ctx, t_global, lp, true)
                          : emit_soc_hour(prog, ctx, t_global, lp, lq, true));
    }
  }
  m.u = prog.add_block("U", ns, true);
  m.w = prog.add_block("W", ns);
  m.c = prog.add_block("C", ns);
  m.energy = emit_storage(prog, ctx, m.hour, m.w, m.c, m.day_length, dc);
  for (int s = 0; s < ns; ++s) {
    const CandidateSite& site = net.sites[s];
    prog.add_greater_equal(m.w[s], site.w_min * Expr(m.u[s]), "site.w_min");
    prog.add_less_equal(m.w[s], site.w_max * Expr(m.u[s]), "site.w_max");
    prog.add_greater_equal(m.c[s], site.c_min * Expr(m.u[s]), "site.c_min");
    prog.add_less_equal(m.c[s], site.c_max * Expr(m.u[s]), "site.c_max");
    prog.add_less_equal(m.w[s], site.c_rate * Expr(m.c[s]), "site.c_rate");
    prog.add_less_equal(m.u[s], 1.0, "site.u_max");
    prog.add_objective(capex_scale * (site.cost_p * Expr(m.w[s]) + site.cost_e * Expr(m.c[s])));
  }
  return m;
}

OperatingPoint extract_operating_point(const NetworkModel& net,
                                       const std::vector<HourHandles>& hours,
                                       const std::vector<std::vector<Var>>& energy,
                                       const conic::SolutionRecord& sol, int first_hour,
                                       int num_hours) {
  if (!sol.optimal()) throw std::invalid_argument("operating point requires an optimal solution");
  if (num_hours < 0) num_hours = static_cast<int>(hours.size()) - first_hour;
  const int n = net.num_buses(), l = net.num_branches(), ns = static_cast<int>(net.sites.size());
  const int ng = static_cast<int>(net.generators.size());
  OperatingPoint op;
  op.hours = num_hours;
  auto zeros = [&](int cols) { return Eigen::MatrixXd::Zero(num_hours, cols); };
  op.v = Eigen::MatrixXd::Ones(num_hours, n);
  op.theta_n = zeros(n);
  op.p_n = zeros(n);
  op.q_n = zeros(n);
  op.theta_l = zeros(l);
  op.p_s = zeros(l);
  op.q_s = zeros(l);
  op.p_o = zeros(l);
  op.q_o = zeros(l);
  op.k_o = zeros(l);
  op.slack_p = Eigen::VectorXd::Zero(num_hours);
  op.slack_q = Eigen::VectorXd::Zero(num_hours);
  op.gen_q = zeros(ng);
  op.storage_p = zeros(ns);
  op.storage_q = zeros(ns);
  op.energy = Eigen::MatrixXd::Zero(num_hours + 1, ns);
  auto fill = [&](Eigen::MatrixXd& dst, int row, const std::vector<Var>& vars) {
    for (std::size_t i = 0; i < vars.size(); ++i) dst(row, static_cast<int>(i)) = sol.value(vars[i]);
  };
  int slack_gen = -1;
  std::vector<int> nonslack;
  if (ng > 0) {
    slack_gen = net.slack_generator();
    for (int g = 0; g < ng; ++g) {
      if (g != slack_gen) nonslack.push_back(g);
    }
  }
  for (int r = 0; r < num_hours; ++r) {
    const HourHandles& h = hours.at(first_hour + r);
    fill(op.v, r, h.v);
    fill(op.theta_n, r, h.theta_n);
    fill(op.p_n, r, h.p_n);
    fill(op.q_n, r, h.q_n);
    fill(op.theta_l, r, h.theta_l);
    fill(op.p_s, r, h.p_s);
    fill(op.q_s, r, h.q_s);
    fill(op.p_o, r, h.p_o);
    fill(op.q_o, r, h.q_o);
    fill(op.k_o, r, h.k_o);
    fill(op.storage_p, r, h.st_p);
    fill(op.storage_q, r, h.st_q);
    if (h.slack_p.id >= 0) op.slack_p[r] = sol.value(h.slack_p);
    if (h.slack_q.id >= 0) op.slack_q[r] = sol.value(h.slack_q);
    if (slack_gen >= 0) op.gen_q(r, slack_gen) = op.slack_q[r];
    for (std::size_t j = 0; j < h.gen_q.size(); ++j) op.gen_q(r, nonslack[j]) = sol.value(h.gen_q[j]);
  }
  for (int s = 0; s < ns; ++s) {
    for (int k = 0; k <= num_hours; ++k) op.energy(k, s) = sol.value(energy[s].at(first_hour + k));
  }
  return op;
}

OperatingPoint extract_operating_point(const NetworkModel& net, const SubproblemModel& model,
                                       const conic::SolutionRecord& sol) {
  return extract_operating_point(net, model.hour, model.energy, sol);
}

Eigen::MatrixXd relaxation_gaps(const NetworkModel& net, const OperatingPoint& op) {
  Eigen::MatrixXd gaps(op.hours, net.num_branches());
  for (int t = 0; t < op.hours; ++t) {
    for (int k = 0; k < net.num_branches(); ++k) {
      const Branch& br = net.branches[k];
      const double ps = op.p_s(t, k), qs = op.q_s(t, k);
      gaps(t, k) = op.q_o(t, k) - br.x * (ps * ps + qs * qs) / op.v(t, br.from);
    }
  }
  return gaps;
}

}  // namespace bessplan::opf
