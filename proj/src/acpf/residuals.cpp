#include "bessplan/acpf/residuals.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "bessplan/util/parallel.hpp"

namespace bessplan::acpf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

Distribution summarize(std::vector<double> values) {
  Distribution d;
  d.count = static_cast<int>(values.size());
  if (values.empty()) return d;
  std::sort(values.begin(), values.end());
  auto q = [&](double p) {
    const double pos = p * (values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(values.size() - 1, lo + 1);
    return values[lo] + (pos - lo) * (values[hi] - values[lo]);
  };
  d.min = values.front();
  d.q05 = q(0.05);
  d.q25 = q(0.25);
  d.median = q(0.5);
  d.q75 = q(0.75);
  d.q95 = q(0.95);
  d.max = values.back();
  return d;
}

namespace {

double max_abs(const MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

double wrap(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  return a <= -std::numbers::pi ? a + 2.0 * std::numbers::pi : a;
}

}  // namespace

double ResidualReport::max_nodal() const { return std::max(max_abs(nodal_p), max_abs(nodal_q)); }
double ResidualReport::max_branch() const { return max_abs(branch); }
double ResidualReport::max_cycle() const { return max_abs(cycle); }
double ResidualReport::max_cone_gap() const { return max_abs(cone_gap); }

ResidualReport evaluate_residuals(const NetworkModel& net, const opf::OperatingPoint& op,
                                  const CycleBasis& cycles) {
  const int n = net.num_buses(), l = net.num_branches(), h = op.hours;
  if (op.v.rows() != h || op.v.cols() != n || op.p_s.cols() != l) {
    throw NetworkError("evaluate_residuals: operating point does not match the network");
  }
  for (int t = 0; t < h; ++t) {
    for (int i = 0; i < n; ++i) {
      if (!(op.v(t, i) > 0.0)) {
        throw NetworkError(fmt::format(
            "evaluate_residuals: nonpositive squared voltage {} at bus {} hour {}", op.v(t, i),
            net.buses[i].id, t));
      }
    }
  }
  AdmittanceModel model(net);
  ResidualReport r;
  r.hours = h;
  r.nodal_p.resize(h, n);
  r.nodal_q.resize(h, n);
  r.branch.resize(h, l);
  r.cycle.resize(h, static_cast<int>(cycles.cycles.size()));
  r.cone_gap = opf::relaxation_gaps(net, op);
  VectorXd delta(l);
  for (int t = 0; t < h; ++t) {
    const VectorXd vm = op.v.row(t).transpose().cwiseSqrt();
    const VectorXd va = op.theta_n.row(t).transpose();
    VectorXd p, q;
    model.injections(vm, va, p, q);
    r.nodal_p.row(t) = op.p_n.row(t) - p.transpose();
    r.nodal_q.row(t) = op.q_n.row(t) - q.transpose();
    for (int k = 0; k < l; ++k) {
      const auto& br = net.branches[k];
      const double ps = op.p_s(t, k), qs = op.q_s(t, k);
      const double im = br.x * ps - br.r * qs;
      const double re = op.v(t, br.from) - br.r * ps - br.x * qs;
      delta[k] = std::atan2(im, re);
      r.branch(t, k) = vm[br.from] * vm[br.to] * std::sin(delta[k]) - im;
    }
    for (std::size_t c = 0; c < cycles.cycles.size(); ++c) {
      double s = 0.0;
      for (const auto& st : cycles.cycles[c]) s += st.sign * delta[st.branch];
      r.cycle(t, static_cast<int>(c)) = wrap(s);
    }
  }
  return r;
}

opf::OperatingPoint operating_point_from_states(const NetworkModel& net,
                                                const std::vector<AcpfState>& states,
                                                const MatrixXd& load_p, const MatrixXd& load_q) {
  const int n = net.num_buses(), l = net.num_branches(), h = static_cast<int>(states.size());
  const int ng = static_cast<int>(net.generators.size());
  AdmittanceModel model(net);
  opf::OperatingPoint op;
  op.hours = h;
  op.v.resize(h, n);
  op.theta_n.resize(h, n);
  op.p_n.resize(h, n);
  op.q_n.resize(h, n);
  for (auto* m : {&op.theta_l, &op.p_s, &op.q_s, &op.p_o, &op.q_o, &op.k_o}) m->resize(h, l);
  op.slack_p.resize(h);
  op.slack_q.resize(h);
  op.gen_q.resize(h, ng);
  op.storage_p = MatrixXd::Zero(h, static_cast<int>(net.sites.size()));
  op.storage_q = op.storage_p;
  op.energy = MatrixXd::Zero(h + 1, static_cast<int>(net.sites.size()));
  const int sb = net.slack_bus();
  for (int t = 0; t < h; ++t) {
    const auto& st = states[t];
    op.v.row(t) = st.vm.cwiseAbs2().transpose();
    op.theta_n.row(t) = st.va.transpose();
    VectorXd gp = VectorXd::Zero(n), gq = VectorXd::Zero(n);
    gp[sb] += st.slack_p;
    for (int g = 0; g < ng; ++g) {
      if (net.generators[g].bus != sb) gq[net.generators[g].bus] += st.gen_q[g];
    }
    gq[sb] += st.slack_q;
    op.p_n.row(t) = (gp - load_p.row(t).transpose()).transpose();
    op.q_n.row(t) = (gq - load_q.row(t).transpose()).transpose();
    // Non-slack PV and switched buses: their reactive output is whatever
    // closes the balance, so spec = calc there by construction.
    op.slack_p[t] = st.slack_p;
    op.slack_q[t] = st.slack_q;
    op.gen_q.row(t) = st.gen_q.transpose();
    for (int k = 0; k < l; ++k) {
      const auto& br = net.branches[k];
      double p, q, i;
      model.branch_flow(k, st.vm, st.va, p, q, i);
      op.p_s(t, k) = p;
      op.q_s(t, k) = q;
      op.p_o(t, k) = br.r * i * i;
      op.q_o(t, k) = br.x * i * i;
      op.k_o(t, k) = op.q_o(t, k);
      op.theta_l(t, k) = st.va[br.from] - st.va[br.to];
    }
  }
  return op;
}

RecoveryResult recover_feasible(const NetworkModel& net, const opf::OperatingPoint& relaxed,
                                const MatrixXd& load_p, const MatrixXd& load_q,
                                const RecoveryOptions& options) {
  const int n = net.num_buses(), h = relaxed.hours, l = net.num_branches();
  if (load_p.rows() != h || load_p.cols() != n || load_q.rows() != h || load_q.cols() != n) {
    throw NetworkError("recover_feasible: load data does not match the relaxed trajectory");
  }
  std::vector<double> oc = options.oc;
  if (oc.empty()) oc.assign(l, 1.0);
  RecoveryResult res;
  res.states.resize(h);
  res.used_flat_start.assign(h, false);
  std::vector<char> failed(h, 0);

  parallel_for(h, options.workers, [&](int t) {
    VectorXd lp = load_p.row(t).transpose(), lq = load_q.row(t).transpose();
    for (std::size_t s = 0; s < net.sites.size(); ++s) {
      lp[net.sites[s].bus] += relaxed.storage_p(t, static_cast<int>(s));
      lq[net.sites[s].bus] += relaxed.storage_q(t, static_cast<int>(s));
    }
    AcpfInit warm;
    warm.vm = relaxed.v.row(t).transpose().cwiseMax(0.0).cwiseSqrt();
    warm.va = relaxed.theta_n.row(t).transpose();
    AcpfState st = solve_acpf(net, lp, lq, &warm, options.acpf);
    if (!st.converged) {
      AcpfInit flat;
      flat.vm = VectorXd::Ones(n);
      for (int i = 0; i < n; ++i) {
        if (net.buses[i].kind != BusKind::pq) flat.vm[i] = warm.vm[i];
      }
      flat.va = VectorXd::Zero(n);
      AcpfState fallback = solve_acpf(net, lp, lq, &flat, options.acpf);
      fallback.solve_time += st.solve_time;
      fallback.iterations += st.iterations;
      st = std::move(fallback);
      res.used_flat_start[t] = true;
    }
    failed[t] = st.converged ? 0 : 1;
    res.states[t] = std::move(st);
  });

  AdmittanceModel model(net);
  res.active_losses = VectorXd::Zero(h);
  res.reactive_losses = VectorXd::Zero(h);
  for (int t = 0; t < h; ++t) {
    if (failed[t]) {
      res.failed_hours.push_back(t);
      continue;
    }
    for (int k = 0; k < l; ++k) {
      double p, q, i;
      model.branch_flow(k, res.states[t].vm, res.states[t].va, p, q, i);
      const double qo = net.branches[k].x * i * i;
      res.active_losses[t] += net.branches[k].r * i * i;
      res.reactive_losses[t] += qo;
      res.opex += options.w_loss * oc[k] *
                  (options.loss_mode == opf::LossMode::linear ? qo : qo * qo);
    }
  }
  return res;
}

}  // namespace bessplan::acpf
