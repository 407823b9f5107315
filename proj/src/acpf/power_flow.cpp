#include "bessplan/acpf/power_flow.hpp"

#include <chrono>
#include <cmath>
#include <complex>

#include <Eigen/LU>
#include <fmt/format.h>

namespace bessplan::acpf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

AdmittanceModel::AdmittanceModel(const NetworkModel& net) : net_(&net), n_(net.num_buses()) {
  g_ = MatrixXd::Zero(n_, n_);
  b_ = MatrixXd::Zero(n_, n_);
  for (int i = 0; i < n_; ++i) {
    g_(i, i) += net.buses[i].gs;
    b_(i, i) += net.buses[i].bs;
  }
  for (const auto& br : net.branches) {
    const std::complex<double> y = 1.0 / std::complex<double>(br.r, br.x);
    g_(br.from, br.from) += y.real();
    b_(br.from, br.from) += y.imag();
    g_(br.to, br.to) += y.real();
    b_(br.to, br.to) += y.imag();
    g_(br.from, br.to) -= y.real();
    b_(br.from, br.to) -= y.imag();
    g_(br.to, br.from) -= y.real();
    b_(br.to, br.from) -= y.imag();
  }
}

void AdmittanceModel::injections(const VectorXd& vm, const VectorXd& va, VectorXd& p,
                                 VectorXd& q) const {
  p.setZero(n_);
  q.setZero(n_);
  for (int i = 0; i < n_; ++i) {
    for (int k = 0; k < n_; ++k) {
      const double gik = g_(i, k), bik = b_(i, k);
      if (gik == 0.0 && bik == 0.0) continue;
      const double d = va[i] - va[k];
      const double c = std::cos(d), s = std::sin(d);
      p[i] += vm[i] * vm[k] * (gik * c + bik * s);
      q[i] += vm[i] * vm[k] * (gik * s - bik * c);
    }
  }
}

void AdmittanceModel::branch_flow(int k, const VectorXd& vm, const VectorXd& va, double& p,
                                  double& q, double& current) const {
  const auto& br = net_->branches[k];
  const std::complex<double> y = 1.0 / std::complex<double>(br.r, br.x);
  const std::complex<double> vs = std::polar(vm[br.from], va[br.from]);
  const std::complex<double> vr = std::polar(vm[br.to], va[br.to]);
  const std::complex<double> i = (vs - vr) * y;
  const std::complex<double> s = vs * std::conj(i);
  p = s.real();
  q = s.imag();
  current = std::abs(i);
}

NewtonLayout make_layout(const std::vector<BusKind>& kind) {
  NewtonLayout l;
  l.kind = kind;
  for (int i = 0; i < static_cast<int>(kind.size()); ++i) {
    if (kind[i] != BusKind::slack) l.angle_buses.push_back(i);
  }
  for (int i = 0; i < static_cast<int>(kind.size()); ++i) {
    if (kind[i] == BusKind::pq) l.magnitude_buses.push_back(i);
  }
  return l;
}

VectorXd mismatch(const AdmittanceModel& model, const NewtonLayout& layout, const VectorXd& vm,
                  const VectorXd& va, const VectorXd& p_spec, const VectorXd& q_spec) {
  VectorXd p, q;
  model.injections(vm, va, p, q);
  VectorXd f(layout.size());
  int r = 0;
  for (int i : layout.angle_buses) f[r++] = p_spec[i] - p[i];
  for (int i : layout.magnitude_buses) f[r++] = q_spec[i] - q[i];
  return f;
}

MatrixXd jacobian(const AdmittanceModel& model, const NewtonLayout& layout, const VectorXd& vm,
                  const VectorXd& va) {
  const int n = model.size();
  const MatrixXd& g = model.g();
  const MatrixXd& b = model.b();
  VectorXd p, q;
  model.injections(vm, va, p, q);
  // Full blocks dP/dva, dP/dvm, dQ/dva, dQ/dvm.
  MatrixXd dp_da = MatrixXd::Zero(n, n), dp_dv = MatrixXd::Zero(n, n);
  MatrixXd dq_da = MatrixXd::Zero(n, n), dq_dv = MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k) {
      if (i == k) continue;
      const double gik = g(i, k), bik = b(i, k);
      if (gik == 0.0 && bik == 0.0) continue;
      const double d = va[i] - va[k];
      const double c = std::cos(d), s = std::sin(d);
      dp_da(i, k) = vm[i] * vm[k] * (gik * s - bik * c);
      dq_da(i, k) = -vm[i] * vm[k] * (gik * c + bik * s);
      dp_dv(i, k) = vm[i] * (gik * c + bik * s);
      dq_dv(i, k) = vm[i] * (gik * s - bik * c);
    }
    dp_da(i, i) = -q[i] - b(i, i) * vm[i] * vm[i];
    dq_da(i, i) = p[i] - g(i, i) * vm[i] * vm[i];
    dp_dv(i, i) = p[i] / vm[i] + g(i, i) * vm[i];
    dq_dv(i, i) = q[i] / vm[i] - b(i, i) * vm[i];
  }
  const int na = static_cast<int>(layout.angle_buses.size());
  const int nm = static_cast<int>(layout.magnitude_buses.size());
  MatrixXd j(na + nm, na + nm);
  for (int r = 0; r < na; ++r) {
    const int i = layout.angle_buses[r];
    for (int c = 0; c < na; ++c) j(r, c) = dp_da(i, layout.angle_buses[c]);
    for (int c = 0; c < nm; ++c) j(r, na + c) = dp_dv(i, layout.magnitude_buses[c]);
  }
  for (int r = 0; r < nm; ++r) {
    const int i = layout.magnitude_buses[r];
    for (int c = 0; c < na; ++c) j(na + r, c) = dq_da(i, layout.angle_buses[c]);
    for (int c = 0; c < nm; ++c) j(na + r, na + c) = dq_dv(i, layout.magnitude_buses[c]);
  }
  return j;
}

namespace {

struct NewtonOutcome {
  bool converged = false;
  int iterations = 0;
  double norm = 0.0;
  std::string message;
};

NewtonOutcome newton(const AdmittanceModel& model, const NewtonLayout& layout, VectorXd& vm,
                     VectorXd& va, const VectorXd& p_spec, const VectorXd& q_spec,
                     const AcpfOptions& opt) {
  NewtonOutcome out;
  const int na = static_cast<int>(layout.angle_buses.size());
  for (int it = 0;; ++it) {
    const VectorXd f = mismatch(model, layout, vm, va, p_spec, q_spec);
    out.norm = f.size() ? f.lpNorm<Eigen::Infinity>() : 0.0;
    out.iterations = it;
    if (!std::isfinite(out.norm)) {
      out.message = "mismatch became non-finite";
      return out;
    }
    // Aim two orders below the tolerance so callers see a margin; accept
    // the tolerance itself when the iteration budget runs out.
    if (out.norm <= 1e-2 * opt.tolerance) {
      out.converged = true;
      return out;
    }
    if (it >= opt.max_newton_iterations) {
      if (out.norm <= opt.tolerance) {
        out.converged = true;
        return out;
      }
      out.message = fmt::format("no convergence after {} Newton iterations (mismatch {:.3e})", it,
                                out.norm);
      return out;
    }
    const MatrixXd j = jacobian(model, layout, vm, va);
    Eigen::PartialPivLU<MatrixXd> lu(j);
    const double rcond = lu.rcond();
    if (!(rcond > 1e-14)) {
      out.message = fmt::format("singular Jacobian (reciprocal condition estimate {:.3e})", rcond);
      return out;
    }
    const VectorXd dx = lu.solve(f);
    for (int r = 0; r < na; ++r) va[layout.angle_buses[r]] += dx[r];
    for (std::size_t r = 0; r < layout.magnitude_buses.size(); ++r) {
      vm[layout.magnitude_buses[r]] += dx[na + r];
    }
  }
}

}  // namespace

AcpfState solve_acpf(const NetworkModel& net, const VectorXd& load_p, const VectorXd& load_q,
                     const AcpfInit* init, const AcpfOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const int n = net.num_buses();
  if (load_p.size() != n || load_q.size() != n) {
    throw NetworkError("solve_acpf: load vectors must have one entry per bus");
  }
  AdmittanceModel model(net);
  AcpfState st;
  st.final_kind.resize(n);
  st.vm = VectorXd::Ones(n);
  st.va = VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    st.final_kind[i] = net.buses[i].kind;
    if (net.buses[i].kind != BusKind::pq) st.vm[i] = net.buses[i].v_set;
  }
  if (init != nullptr) {
    if (init->vm.size() != n || init->va.size() != n) {
      throw NetworkError("solve_acpf: initial state has the wrong size");
    }
    st.vm = init->vm;
    st.va = init->va;
  }
  VectorXd p_spec = -load_p, q_spec = -load_q;

  // Reactive capability per bus from its generators.
  VectorXd qmin = VectorXd::Zero(n), qmax = VectorXd::Zero(n);
  for (const auto& g : net.generators) {
    qmin[g.bus] += g.q_min;
    qmax[g.bus] += g.q_max;
  }

  for (int round = 0;; ++round) {
    st.switch_rounds = round;
    const NewtonLayout layout = make_layout(st.final_kind);
    const NewtonOutcome o = newton(model, layout, st.vm, st.va, p_spec, q_spec, options);
    st.iterations += o.iterations;
    st.mismatch_norm = o.norm;
    if (!o.converged) {
      st.message = o.message;
      break;
    }
    if (!options.enforce_q_limits) {
      st.converged = true;
      break;
    }
    VectorXd p, q;
    model.injections(st.vm, st.va, p, q);
    bool switched = false;
    for (int i = 0; i < n; ++i) {
      if (st.final_kind[i] != BusKind::pv) continue;
      const double qg = q[i] + load_q[i];
      const double tol = 1e-9;
      if (qg > qmax[i] + tol) {
        st.final_kind[i] = BusKind::pq;
        q_spec[i] = qmax[i] - load_q[i];
        switched = true;
      } else if (qg < qmin[i] - tol) {
        st.final_kind[i] = BusKind::pq;
        q_spec[i] = qmin[i] - load_q[i];
        switched = true;
      }
    }
    if (!switched) {
      st.converged = true;
      break;
    }
    if (round + 1 >= options.max_switch_rounds) {
      st.message = fmt::format("reactive-limit switching did not settle in {} rounds",
                               options.max_switch_rounds);
      break;
    }
  }

  model.injections(st.vm, st.va, st.p, st.q);
  const int sb = net.slack_bus();
  st.slack_p = st.p[sb] + load_p[sb];
  st.slack_q = st.q[sb] + load_q[sb];
  st.gen_p = VectorXd::Zero(static_cast<int>(net.generators.size()));
  st.gen_q = VectorXd::Zero(static_cast<int>(net.generators.size()));
  std::vector<std::vector<int>> at_bus(n);
  for (int g = 0; g < static_cast<int>(net.generators.size()); ++g) {
    at_bus[net.generators[g].bus].push_back(g);
  }
  for (int i = 0; i < n; ++i) {
    if (at_bus[i].empty()) continue;
    const double total = st.q[i] + load_q[i];
    double range = 0.0;
    for (int g : at_bus[i]) range += net.generators[g].q_max - net.generators[g].q_min;
    for (int g : at_bus[i]) {
      const double share = range > 0.0
                               ? (net.generators[g].q_max - net.generators[g].q_min) / range
                               : 1.0 / static_cast<double>(at_bus[i].size());
      st.gen_q[g] = total * share;
    }
  }
  const int sg = [&] {
    for (int g = 0; g < static_cast<int>(net.generators.size()); ++g) {
      if (net.generators[g].bus == sb) return g;
    }
    return -1;
  }();
  if (sg >= 0) st.gen_p[sg] = st.slack_p;
  st.solve_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return st;
}

}  // namespace bessplan::acpf
