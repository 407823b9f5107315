#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "bessplan/conic/cone_solver.hpp"
#include "cones.hpp"
#include "ldl.hpp"

namespace bessplan::conic {

int ConeDims::total() const {
  int t = nonneg;
  for (int q : soc) t += q;
  return t;
}

int ConeDims::degree() const { return nonneg + static_cast<int>(soc.size()); }

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::optimal:
      return "optimal";
    case SolveStatus::infeasible:
      return "infeasible";
    case SolveStatus::unbounded:
      return "unbounded";
    case SolveStatus::numerical_failure:
      return "numerical_failure";
  }
  return "unknown";
}

std::shared_ptr<const ConeBackend> default_backend() {
  static const auto backend = std::make_shared<InteriorPointBackend>();
  return backend;
}

namespace {

using Eigen::VectorXd;
using detail::ConeOps;
using detail::NtScaling;

constexpr double kStepFraction = 0.99;
constexpr double kSigmaMin = 1e-4;
constexpr double kSigmaMax = 1.0;

double row_norm_update(const SparseMatrix& m, VectorXd& rows) {
  rows.setZero(m.rows());
  double mx = 0.0;
  for (int j = 0; j < m.outerSize(); ++j) {
    for (SparseMatrix::InnerIterator it(m, j); it; ++it) {
      rows[it.row()] = std::max(rows[it.row()], std::abs(it.value()));
      mx = std::max(mx, std::abs(it.value()));
    }
  }
  return mx;
}

double scale_factor(double norm) {
  if (norm < 1e-12) return 1.0;
  norm = std::clamp(norm, 1e-4, 1e4);
  return 1.0 / std::sqrt(norm);
}

// Ruiz equilibration of [A; G], keeping a uniform row scale within each
// Lorentz cone so that the scaled slack stays in the same cone.
struct Equilibration {
  VectorXd col, eq_row, cone_row;
};

Equilibration equilibrate(ConeProblemData& p, bool enabled) {
  const int n = p.num_variables(), ne = p.num_equalities(), m = p.num_cone_rows();
  Equilibration e{VectorXd::Ones(n), VectorXd::Ones(ne), VectorXd::Ones(m)};
  if (!enabled) return e;
  ConeOps ops(p.cones);
  VectorXd ra, rg, cn(n);
  for (int pass = 0; pass < 12; ++pass) {
    cn.setZero();
    for (const SparseMatrix* mat : {&p.A, &p.G}) {
      for (int j = 0; j < mat->outerSize(); ++j) {
        for (SparseMatrix::InnerIterator it(*mat, j); it; ++it) {
          cn[j] = std::max(cn[j], std::abs(it.value()));
        }
      }
    }
    row_norm_update(p.A, ra);
    row_norm_update(p.G, rg);
    for (std::size_t k = 0; k < p.cones.soc.size(); ++k) {
      const int o = ops.soc_offset(static_cast<int>(k)), q = p.cones.soc[k];
      const double mx = rg.segment(o, q).maxCoeff();
      rg.segment(o, q).setConstant(mx);
    }
    VectorXd dc(n), da(ne), dg(m);
    for (int j = 0; j < n; ++j) dc[j] = scale_factor(cn[j]);
    for (int i = 0; i < ne; ++i) da[i] = scale_factor(ra[i]);
    for (int i = 0; i < m; ++i) dg[i] = scale_factor(rg[i]);
    p.A = da.asDiagonal() * p.A * dc.asDiagonal();
    p.G = dg.asDiagonal() * p.G * dc.asDiagonal();
    e.col.array() *= dc.array();
    e.eq_row.array() *= da.array();
    e.cone_row.array() *= dg.array();
  }
  p.c = e.col.cwiseProduct(p.c);
  p.b = e.eq_row.cwiseProduct(p.b);
  p.h = e.cone_row.cwiseProduct(p.h);
  return e;
}

class HsdeSolver {
 public:
  HsdeSolver(const ConeProblemData& p, const Equilibration& eq, const ConeProblemData& original,
             const SolverSettings& st)
      : p_(p), eq_(eq), st_(st), ops_(p.cones) {
    n_ = p.num_variables();
    ne_ = p.num_equalities();
    m_ = p.num_cone_rows();
    at_ = p.A.transpose();
    gt_ = p.G.transpose();
    bnorm_ = std::max(1.0, original.b.norm());
    hnorm_ = std::max(1.0, original.h.norm());
    cnorm_ = std::max(1.0, original.c.norm());
    build_kkt_pattern();
  }

  ConeSolverResult run();

 private:
  struct Iterate {
    VectorXd x, y, z, s;
    double tau = 1.0, kappa = 1.0;
  };
  struct Metrics {
    double pres, dres, gap, relgap, pcost, dcost, pinf, dinf;
    bool pinf_ok, dinf_ok;
  };

  void build_kkt_pattern();
  bool factor(const NtScaling& w);
  void kkt_solve(const NtScaling& w, const VectorXd& rhs, VectorXd& sol);
  void kkt_apply(const NtScaling& w, const VectorXd& v, VectorXd& out) const;
  Metrics evaluate(const Iterate& it) const;
  bool initialize(Iterate& it);
  ConeSolverResult finish(const Iterate& it, SolveStatus status, bool reduced, int iters,
                          const Metrics& mt, std::string diag) const;

  const ConeProblemData& p_;
  const Equilibration& eq_;
  const SolverSettings& st_;
  ConeOps ops_;
  int n_ = 0, ne_ = 0, m_ = 0;
  SparseMatrix at_, gt_;
  double bnorm_ = 1, hnorm_ = 1, cnorm_ = 1;

  detail::QuasiDefiniteLdl ldl_;
  std::vector<int> krows_, kcols_;
  std::vector<double> kvals_;
  std::size_t zblock_begin_ = 0;
};

void HsdeSolver::build_kkt_pattern() {
  const int dim = n_ + ne_ + m_;
  std::vector<int> signs(dim, -1);
  for (int j = 0; j < n_; ++j) signs[j] = 1;
  for (int j = 0; j < n_; ++j) {
    krows_.push_back(j);
    kcols_.push_back(j);
    kvals_.push_back(st_.static_regularization);
  }
  for (int j = 0; j < n_; ++j) {
    for (SparseMatrix::InnerIterator it(p_.A, j); it; ++it) {
      krows_.push_back(j);
      kcols_.push_back(n_ + static_cast<int>(it.row()));
      kvals_.push_back(it.value());
    }
    for (SparseMatrix::InnerIterator it(p_.G, j); it; ++it) {
      krows_.push_back(j);
      kcols_.push_back(n_ + ne_ + static_cast<int>(it.row()));
      kvals_.push_back(it.value());
    }
  }
  for (int i = 0; i < ne_; ++i) {
    krows_.push_back(n_ + i);
    kcols_.push_back(n_ + i);
    kvals_.push_back(-st_.static_regularization);
  }
  zblock_begin_ = krows_.size();
  const int zoff = n_ + ne_;
  for (int i = 0; i < p_.cones.nonneg; ++i) {
    krows_.push_back(zoff + i);
    kcols_.push_back(zoff + i);
    kvals_.push_back(-1.0);
  }
  for (std::size_t k = 0; k < p_.cones.soc.size(); ++k) {
    const int o = ops_.soc_offset(static_cast<int>(k)), q = p_.cones.soc[k];
    for (int c = 0; c < q; ++c) {
      for (int r = 0; r <= c; ++r) {
        krows_.push_back(zoff + o + r);
        kcols_.push_back(zoff + o + c);
        kvals_.push_back(r == c ? -1.0 : 0.0);
      }
    }
  }
  ldl_.analyze(dim, krows_, kcols_, signs);
}

bool HsdeSolver::factor(const NtScaling& w) {
  std::size_t pos = zblock_begin_;
  const double reg = st_.static_regularization;
  for (int i = 0; i < p_.cones.nonneg; ++i) {
    kvals_[pos++] = -w.orthant[i] * w.orthant[i] - reg;
  }
  for (std::size_t k = 0; k < p_.cones.soc.size(); ++k) {
    const int q = p_.cones.soc[k];
    const Eigen::MatrixXd w2 = ops_.soc_w_squared(w, static_cast<int>(k));
    for (int c = 0; c < q; ++c) {
      for (int r = 0; r <= c; ++r) kvals_[pos++] = -w2(r, c) - (r == c ? reg : 0.0);
    }
  }
  ldl_.factorize(kvals_, st_.dynamic_regularization, 1e-14);
  return true;
}

void HsdeSolver::kkt_apply(const NtScaling& w, const VectorXd& v, VectorXd& out) const {
  out.resize(n_ + ne_ + m_);
  const auto vx = v.head(n_);
  const auto vy = v.segment(n_, ne_);
  const VectorXd vz = v.tail(m_);
  out.head(n_) = at_ * vy + gt_ * vz;
  out.segment(n_, ne_) = p_.A * vx;
  VectorXd t1, t2;
  ops_.apply_w(w, vz, t1);
  ops_.apply_w(w, t1, t2);
  out.tail(m_) = p_.G * vx - t2;
}

void HsdeSolver::kkt_solve(const NtScaling& w, const VectorXd& rhs, VectorXd& sol) {
  sol = rhs;
  ldl_.solve(sol);
  VectorXd r, corr;
  const double scale = 1.0 + rhs.lpNorm<Eigen::Infinity>();
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 0; k < st_.refinement_steps; ++k) {
    kkt_apply(w, sol, r);
    r = rhs - r;
    const double err = r.lpNorm<Eigen::Infinity>();
    if (err <= 1e-14 * scale || err > 0.5 * prev) break;
    prev = err;
    corr = r;
    ldl_.solve(corr);
    sol += corr;
  }
}

HsdeSolver::Metrics HsdeSolver::evaluate(const Iterate& it) const {
  Metrics mt{};
  const double tau = it.tau;
  const VectorXd rx = at_ * it.y + gt_ * it.z + p_.c * tau;
  const VectorXd ry = p_.A * it.x - p_.b * tau;
  const VectorXd rz = p_.G * it.x + it.s - p_.h * tau;
  // Unscale residuals: x = D xs, y = Ea ys, z = Eg zs.
  const double rx_n = rx.cwiseQuotient(eq_.col).norm();
  const double ry_n = ry.cwiseQuotient(eq_.eq_row).norm();
  const double rz_n = rz.cwiseQuotient(eq_.cone_row).norm();
  const double cx = p_.c.dot(it.x);
  const double by_hz = p_.b.dot(it.y) + p_.h.dot(it.z);
  mt.pcost = cx / tau;
  mt.dcost = -by_hz / tau;
  mt.pres = std::max(ry_n / bnorm_, rz_n / hnorm_) / tau;
  mt.dres = rx_n / cnorm_ / tau;
  mt.gap = it.s.dot(it.z) / (tau * tau);
  if (mt.pcost < 0.0) {
    mt.relgap = mt.gap / -mt.pcost;
  } else if (mt.dcost > 0.0) {
    mt.relgap = mt.gap / mt.dcost;
  } else {
    mt.relgap = std::numeric_limits<double>::infinity();
  }
  mt.pinf_ok = by_hz < 0.0;
  mt.pinf = mt.pinf_ok ? (at_ * it.y + gt_ * it.z).cwiseQuotient(eq_.col).norm() / -by_hz
                       : std::numeric_limits<double>::infinity();
  mt.dinf_ok = cx < 0.0;
  if (mt.dinf_ok) {
    const double ax = (p_.A * it.x).cwiseQuotient(eq_.eq_row).norm();
    const double gxs = (p_.G * it.x + it.s).cwiseQuotient(eq_.cone_row).norm();
    mt.dinf = std::max(ax, gxs) / -cx;
  } else {
    mt.dinf = std::numeric_limits<double>::infinity();
  }
  return mt;
}

bool HsdeSolver::initialize(Iterate& it) {
  NtScaling unit;
  unit.orthant = VectorXd::Ones(p_.cones.nonneg);
  unit.eta.assign(p_.cones.soc.size(), 1.0);
  unit.wbar.resize(p_.cones.soc.size());
  for (std::size_t k = 0; k < p_.cones.soc.size(); ++k) {
    unit.wbar[k] = VectorXd::Zero(p_.cones.soc[k]);
    unit.wbar[k][0] = 1.0;
  }
  factor(unit);
  const int dim = n_ + ne_ + m_;
  VectorXd rhs = VectorXd::Zero(dim), sol;
  rhs.segment(n_, ne_) = p_.b;
  rhs.tail(m_) = p_.h;
  kkt_solve(unit, rhs, sol);
  it.x = sol.head(n_);
  it.s = -sol.tail(m_);
  const VectorXd e = ops_.identity();
  double margin = ops_.interior_margin(it.s);
  if (m_ > 0 && margin >= 0.0) it.s += (1.0 + margin) * e;

  rhs.setZero();
  rhs.head(n_) = -p_.c;
  kkt_solve(unit, rhs, sol);
  it.y = sol.segment(n_, ne_);
  it.z = sol.tail(m_);
  margin = ops_.interior_margin(it.z);
  if (m_ > 0 && margin >= 0.0) it.z += (1.0 + margin) * e;
  it.tau = 1.0;
  it.kappa = 1.0;
  return it.x.allFinite() && it.y.allFinite() && it.z.allFinite() && it.s.allFinite();
}

ConeSolverResult HsdeSolver::finish(const Iterate& it, SolveStatus status, bool reduced, int iters,
                                    const Metrics& mt, std::string diag) const {
  ConeSolverResult r;
  r.status = status;
  r.reduced_accuracy = reduced;
  r.iterations = iters;
  r.primal_residual = mt.pres;
  r.dual_residual = mt.dres;
  r.gap = mt.gap;
  r.diagnostics = std::move(diag);
  VectorXd x = it.x, y = it.y, z = it.z, s = it.s;
  double scale = 1.0;
  if (status == SolveStatus::optimal) {
    scale = 1.0 / it.tau;
  } else if (status == SolveStatus::infeasible) {
    scale = 1.0 / -(p_.b.dot(y) + p_.h.dot(z));
  } else if (status == SolveStatus::unbounded) {
    scale = 1.0 / -p_.c.dot(x);
  }
  r.x = eq_.col.cwiseProduct(x) * scale;
  r.y = eq_.eq_row.cwiseProduct(y) * scale;
  r.z = eq_.cone_row.cwiseProduct(z) * scale;
  r.s = s.cwiseQuotient(eq_.cone_row) * scale;
  if (status == SolveStatus::optimal) {
    r.primal_objective = mt.pcost;
    r.dual_objective = mt.dcost;
  }
  return r;
}

ConeSolverResult HsdeSolver::run() {
  Iterate it;
  if (!initialize(it)) {
    Metrics mt{};
    return finish(it, SolveStatus::numerical_failure, false, 0, mt, "initialization failed");
  }
  const int degree = p_.cones.degree();
  const VectorXd e = ops_.identity();
  NtScaling w;
  Iterate best = it;
  Metrics best_mt{};
  double best_score = std::numeric_limits<double>::infinity();
  // Certificates seen along the way; the iterate can diverge after tau
  // collapses, so the last one is not always the best.
  Iterate best_pinf = it, best_dinf = it;
  Metrics best_pinf_mt{}, best_dinf_mt{};
  best_pinf_mt.pinf = best_dinf_mt.dinf = std::numeric_limits<double>::infinity();

  VectorXd sol1, sol2, rhs(n_ + ne_ + m_), tmp, tmp2, ds, dz_w, ds_w;
  std::string stall_reason = "iteration limit reached";
  int iter = 0;
  for (;; ++iter) {
    const Metrics mt = evaluate(it);
    if (!std::isfinite(mt.pres) || !std::isfinite(mt.dres) || !std::isfinite(mt.gap)) {
      stall_reason = "non-finite iterate";
      break;
    }
    const double score = std::max({mt.pres, mt.dres, std::min(mt.gap, mt.relgap)});
    if (score < best_score) {
      best_score = score;
      best = it;
      best_mt = mt;
    } else if (iter > 10 && score > 1e6 * best_score) {
      stall_reason = "diverging";
      break;
    }
    if (it.tau < it.kappa) {
      if (mt.pinf_ok && mt.pinf < best_pinf_mt.pinf) {
        best_pinf = it;
        best_pinf_mt = mt;
      }
      if (mt.dinf_ok && mt.dinf < best_dinf_mt.dinf) {
        best_dinf = it;
        best_dinf_mt = mt;
      }
    }
    if (mt.pres < st_.feastol && mt.dres < st_.feastol &&
        (mt.gap < st_.abstol || mt.relgap < st_.reltol)) {
      return finish(it, SolveStatus::optimal, false, iter, mt, "");
    }
    if (mt.pinf_ok && mt.pinf < st_.feastol && it.tau < it.kappa) {
      return finish(it, SolveStatus::infeasible, false, iter, mt, "");
    }
    if (mt.dinf_ok && mt.dinf < st_.feastol && it.tau < it.kappa) {
      return finish(it, SolveStatus::unbounded, false, iter, mt, "");
    }
    if (iter >= st_.max_iterations) break;

    if (!ops_.compute_scaling(it.s, it.z, w)) {
      stall_reason = "iterate left the cone";
      break;
    }
    factor(w);

    // Residuals of the homogeneous embedding.
    const VectorXd rx = at_ * it.y + gt_ * it.z + p_.c * it.tau;
    const VectorXd ry = p_.A * it.x - p_.b * it.tau;
    const VectorXd rz = p_.G * it.x + it.s - p_.h * it.tau;
    const double rtau = it.kappa + p_.c.dot(it.x) + p_.b.dot(it.y) + p_.h.dot(it.z);

    rhs.head(n_) = -p_.c;
    rhs.segment(n_, ne_) = p_.b;
    rhs.tail(m_) = p_.h;
    kkt_solve(w, rhs, sol1);
    const double denom_base =
        p_.c.dot(sol1.head(n_)) + p_.b.dot(sol1.segment(n_, ne_)) + p_.h.dot(sol1.tail(m_));

    const VectorXd& lambda = w.lambda;
    const double mu = (it.s.dot(it.z) + it.tau * it.kappa) / (degree + 1);

    auto direction = [&](double eta_res, const VectorXd& dsv, double dkappa_rhs, VectorXd& dx,
                         VectorXd& dy, VectorXd& dz, VectorXd& dsl, double& dtau, double& dkap) {
      ops_.jordan_divide(lambda, dsv, tmp);  // lambda \ ds
      ops_.apply_w(w, tmp, tmp2);            // W (lambda \ ds)
      rhs.head(n_) = -eta_res * rx;
      rhs.segment(n_, ne_) = -eta_res * ry;
      rhs.tail(m_) = -eta_res * rz - tmp2;
      kkt_solve(w, rhs, sol2);
      const double num = -eta_res * rtau - dkappa_rhs / it.tau - p_.c.dot(sol2.head(n_)) -
                         p_.b.dot(sol2.segment(n_, ne_)) - p_.h.dot(sol2.tail(m_));
      dtau = num / (denom_base - it.kappa / it.tau);
      dx = sol2.head(n_) + dtau * sol1.head(n_);
      dy = sol2.segment(n_, ne_) + dtau * sol1.segment(n_, ne_);
      dz = sol2.tail(m_) + dtau * sol1.tail(m_);
      ops_.apply_w(w, dz, tmp2);  // W dz
      tmp2 = tmp - tmp2;
      ops_.apply_w(w, tmp2, dsl);
      dkap = (dkappa_rhs - it.kappa * dtau) / it.tau;
    };

    auto step_length = [&](const VectorXd& dsl, const VectorXd& dz, double dtau, double dkap) {
      double a = std::min(ops_.max_step(it.s, dsl), ops_.max_step(it.z, dz));
      if (dtau < 0.0) a = std::min(a, -it.tau / dtau);
      if (dkap < 0.0) a = std::min(a, -it.kappa / dkap);
      return a;
    };

    // Predictor.
    VectorXd dxa, dya, dza, dsa;
    double dtaua = 0, dkapa = 0;
    ops_.jordan_product(lambda, lambda, ds);
    ds = -ds;
    direction(1.0, ds, -it.tau * it.kappa, dxa, dya, dza, dsa, dtaua, dkapa);
    const double alpha_aff = std::min(1.0, step_length(dsa, dza, dtaua, dkapa));
    const double sigma = std::clamp(std::pow(1.0 - alpha_aff, 3), kSigmaMin, kSigmaMax);

    // Corrector.
    ops_.apply_w_inv(w, dsa, ds_w);
    ops_.apply_w(w, dza, dz_w);
    ops_.jordan_product(ds_w, dz_w, tmp);
    ops_.jordan_product(lambda, lambda, ds);
    ds = -ds - tmp + sigma * mu * e;
    const double dkappa_rhs = -it.tau * it.kappa - dtaua * dkapa + sigma * mu;
    VectorXd dx, dy, dz, dsl;
    double dtau = 0, dkap = 0;
    direction(1.0 - sigma, ds, dkappa_rhs, dx, dy, dz, dsl, dtau, dkap);
    double alpha = step_length(dsl, dz, dtau, dkap);
    alpha = std::min(1.0, kStepFraction * alpha);
    if (!(alpha > 1e-12)) {
      stall_reason = "step length underflow";
      break;
    }
    it.x += alpha * dx;
    it.y += alpha * dy;
    it.z += alpha * dz;
    it.s += alpha * dsl;
    it.tau += alpha * dtau;
    it.kappa += alpha * dkap;
  }

  // Stalled: accept the best iterate at reduced accuracy if it qualifies.
  const Metrics& mt = best_mt;
  if (mt.pres < st_.feastol_inaccurate && mt.dres < st_.feastol_inaccurate &&
      (mt.gap < st_.abstol_inaccurate || mt.relgap < st_.reltol_inaccurate)) {
    return finish(best, SolveStatus::optimal, true, iter, mt, stall_reason);
  }
  if (best_pinf_mt.pinf < st_.feastol_inaccurate) {
    return finish(best_pinf, SolveStatus::infeasible, true, iter, best_pinf_mt, stall_reason);
  }
  if (best_dinf_mt.dinf < st_.feastol_inaccurate) {
    return finish(best_dinf, SolveStatus::unbounded, true, iter, best_dinf_mt, stall_reason);
  }
  std::ostringstream os;
  os << stall_reason << " (pres=" << mt.pres << ", dres=" << mt.dres << ", gap=" << mt.gap
     << ", tau=" << it.tau << ", kappa=" << it.kappa << ")";
  return finish(best, SolveStatus::numerical_failure, false, iter, mt, os.str());
}

}  // namespace

ConeSolverResult InteriorPointBackend::solve(const ConeProblemData& data,
                                             const SolverSettings& settings) const {
  const int n = data.num_variables();
  if (data.A.rows() != data.num_equalities() || data.A.cols() != n ||
      data.G.rows() != data.num_cone_rows() || data.G.cols() != n ||
      data.cones.total() != data.num_cone_rows()) {
    ConeSolverResult r;
    r.diagnostics = "inconsistent problem dimensions";
    return r;
  }
  ConeProblemData scaled = data;
  scaled.A.makeCompressed();
  scaled.G.makeCompressed();
  const Equilibration eq = equilibrate(scaled, settings.equilibrate);
  HsdeSolver solver(scaled, eq, data, settings);
  return solver.run();
}

}  // namespace bessplan::conic
