#include "cones.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bessplan::conic::detail {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// J(u) = u0^2 - |u1|^2 computed as (u0 - |u1|)(u0 + |u1|) for accuracy.
double soc_residual(const double* u, int m) {
  double nrm = 0.0;
  for (int i = 1; i < m; ++i) nrm += u[i] * u[i];
  nrm = std::sqrt(nrm);
  return (u[0] - nrm) * (u[0] + nrm);
}

// Smallest positive root of a t^2 + b t + c = 0, c > 0, or +inf.
double first_crossing(double a, double b, double c) {
  if (std::abs(a) < 1e-300) {
    return b < 0.0 ? -c / b : kInf;
  }
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return kInf;
  const double sq = std::sqrt(disc);
  // Stable pair of roots.
  const double q = -0.5 * (b + std::copysign(sq, b));
  double r1 = q / a;
  double r2 = (q != 0.0) ? c / q : kInf;
  double best = kInf;
  if (r1 > 0.0) best = std::min(best, r1);
  if (r2 > 0.0) best = std::min(best, r2);
  return best;
}

}  // namespace

ConeOps::ConeOps(const ConeDims& dims) : dims_(dims) {
  int off = dims_.nonneg;
  offsets_.reserve(dims_.soc.size());
  for (int q : dims_.soc) {
    offsets_.push_back(off);
    off += q;
  }
  size_ = off;
}

Eigen::VectorXd ConeOps::identity() const {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(size_);
  e.head(dims_.nonneg).setOnes();
  for (int o : offsets_) e[o] = 1.0;
  return e;
}

double ConeOps::max_step(const Eigen::VectorXd& u, const Eigen::VectorXd& du) const {
  double alpha = kInf;
  for (int i = 0; i < dims_.nonneg; ++i) {
    if (du[i] < 0.0) alpha = std::min(alpha, -u[i] / du[i]);
  }
  for (std::size_t k = 0; k < dims_.soc.size(); ++k) {
    const int o = offsets_[k], m = dims_.soc[k];
    const double* x = u.data() + o;
    const double* d = du.data() + o;
    double a = d[0] * d[0], b = x[0] * d[0], c = soc_residual(x, m);
    for (int i = 1; i < m; ++i) {
      a -= d[i] * d[i];
      b -= x[i] * d[i];
    }
    alpha = std::min(alpha, first_crossing(a, 2.0 * b, std::max(c, 0.0)));
    if (d[0] < 0.0) alpha = std::min(alpha, -x[0] / d[0]);
  }
  return alpha;
}

double ConeOps::interior_margin(const Eigen::VectorXd& u) const {
  double alpha = -kInf;
  for (int i = 0; i < dims_.nonneg; ++i) alpha = std::max(alpha, -u[i]);
  for (std::size_t k = 0; k < dims_.soc.size(); ++k) {
    const int o = offsets_[k], m = dims_.soc[k];
    alpha = std::max(alpha, u.segment(o + 1, m - 1).norm() - u[o]);
  }
  return alpha;
}

bool ConeOps::interior(const Eigen::VectorXd& u) const {
  for (int i = 0; i < dims_.nonneg; ++i) {
    if (!(u[i] > 0.0)) return false;
  }
  for (std::size_t k = 0; k < dims_.soc.size(); ++k) {
    const int o = offsets_[k], m = dims_.soc[k];
    if (!(u[o] > 0.0) || !(soc_residual(u.data() + o, m) > 0.0)) return false;
  }
  return true;
}

bool ConeOps::compute_scaling(const Eigen::VectorXd& s, const Eigen::VectorXd& z,
                              NtScaling& w) const {
  w.orthant.resize(dims_.nonneg);
  w.lambda.resize(size_);
  for (int i = 0; i < dims_.nonneg; ++i) {
    if (!(s[i] > 0.0) || !(z[i] > 0.0)) return false;
    w.orthant[i] = std::sqrt(s[i] / z[i]);
    w.lambda[i] = std::sqrt(s[i] * z[i]);
  }
  const std::size_t nsoc = dims_.soc.size();
  w.eta.resize(nsoc);
  w.wbar.resize(nsoc);
  for (std::size_t k = 0; k < nsoc; ++k) {
    const int o = offsets_[k], m = dims_.soc[k];
    const double js = soc_residual(s.data() + o, m);
    const double jz = soc_residual(z.data() + o, m);
    if (!(js > 0.0) || !(jz > 0.0) || !(s[o] > 0.0) || !(z[o] > 0.0)) return false;
    const double sq_s = std::sqrt(js), sq_z = std::sqrt(jz);
    Eigen::VectorXd sbar = s.segment(o, m) / sq_s;
    Eigen::VectorXd zbar = z.segment(o, m) / sq_z;
    const double gamma = std::sqrt(std::max(0.5 * (1.0 + sbar.dot(zbar)), 1e-300));
    Eigen::VectorXd& wb = w.wbar[k];
    wb.resize(m);
    wb[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
    wb.tail(m - 1) = (sbar.tail(m - 1) - zbar.tail(m - 1)) / (2.0 * gamma);
    // Renormalize so that J(wbar) = 1 exactly.
    const double jw = soc_residual(wb.data(), m);
    if (jw > 0.0) wb /= std::sqrt(jw);
    w.eta[k] = std::sqrt(sq_s / sq_z);
  }
  Eigen::VectorXd zl = z;
  apply_w(w, z, zl);
  w.lambda.tail(size_ - dims_.nonneg) = zl.tail(size_ - dims_.nonneg);
  return true;
}

void ConeOps::apply_w(const NtScaling& w, const Eigen::VectorXd& v, Eigen::VectorXd& out) const {
  out.resize(size_);
  for (int i = 0; i < dims_.nonneg; ++i) out[i] = w.orthant[i] * v[i];
  for (std::size_t k = 0; k < dims_.soc.size(); ++k) {
    const int o = offsets_[k], m = dims_.soc[k];
    const Eigen::VectorXd& wb = w.wbar[k];
    const double a = wb[0];
    const double v0 = v[o];
    const double dot = wb.tail(m - 1).dot(v.segment(o + 1, m - 1));
    out[o] = w.eta[k] * (a * v0 + dot);
    const double coef = v0 + dot / (1.0 + a);
    out.segment(o + 1, m - 1) = w.eta[k] * (v.segment(o + 1, m - 1) + coef * wb.tail(m - 1));
  }
}

void ConeOps::apply_w_inv(const NtScaling& w, const Eigen::VectorXd& v,
                          Eigen::VectorXd& out) const {
  out.resize(size_);
  for (int i = 0; i < dims_.nonneg; ++i) out[i] = v[i] / w.orthant[i];
  for (std::size_t k = 0; k < dims_.soc.size(); ++k) {
    const int o = offsets_[k], m = dims_.soc[k];
    const Eigen::VectorXd& wb = w.wbar[k];
    const double a = wb[0];
    const double v0 = v[o];
    const double dot = wb.tail(m - 1).dot(v.segment(o + 1, m - 1));
    out[o] = (a * v0 - dot) / w.eta[k];
    const double coef = -v0 + dot / (1.0 + a);
    out.segment(o + 1, m - 1) = (v.segment(o + 1, m - 1) + coef * wb.tail(m - 1)) / w.eta[k];
  }
}

void ConeOps::jordan_product(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                             Eigen::VectorXd& out) const {
  out.resize(size_);
  for (int i = 0; i < dims_.nonneg; ++i) out[i] = u[i] * v[i];
  for (std::size_t k = 0; k < dims_.soc.size(); ++k) {
    const int o = offsets_[k], m = dims_.soc[k];
    out[o] = u.segment(o, m).dot(v.segment(o, m));
    out.segment(o + 1, m - 1) = u[o] * v.segment(o + 1, m - 1) + v[o] * u.segment(o + 1, m - 1);
  }
}

void ConeOps::jordan_divide(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                            Eigen::VectorXd& out) const {
  out.resize(size_);
  for (int i = 0; i < dims_.nonneg; ++i) out[i] = v[i] / u[i];
  for (std::size_t k = 0; k < dims_.soc.size(); ++k) {
    const int o = offsets_[k], m = dims_.soc[k];
    const double ju = soc_residual(u.data() + o, m);
    const double dot = u.segment(o + 1, m - 1).dot(v.segment(o + 1, m - 1));
    const double x0 = (u[o] * v[o] - dot) / ju;
    out[o] = x0;
    out.segment(o + 1, m - 1) = (v.segment(o + 1, m - 1) - x0 * u.segment(o + 1, m - 1)) / u[o];
  }
}

Eigen::MatrixXd ConeOps::soc_w_squared(const NtScaling& w, int k) const {
  const int m = dims_.soc[k];
  const Eigen::VectorXd& wb = w.wbar[k];
  Eigen::MatrixXd out = 2.0 * wb * wb.transpose();
  out(0, 0) -= 1.0;
  for (int i = 1; i < m; ++i) out(i, i) += 1.0;
  return w.eta[k] * w.eta[k] * out;
}

}  // namespace bessplan::conic::detail
