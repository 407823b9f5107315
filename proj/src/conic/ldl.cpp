#include "ldl.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCore>

namespace bessplan::conic::detail {

void QuasiDefiniteLdl::analyze(int n, const std::vector<int>& rows, const std::vector<int>& cols,
                               const std::vector<int>& pivot_signs) {
  if (rows.size() != cols.size() || static_cast<int>(pivot_signs.size()) != n) {
    throw std::invalid_argument("ldl: inconsistent pattern description");
  }
  n_ = n;

  // Fill-reducing ordering on the symmetric pattern.
  std::vector<Eigen::Triplet<double, int>> trip;
  trip.reserve(2 * rows.size() + n);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    trip.emplace_back(rows[k], cols[k], 1.0);
    if (rows[k] != cols[k]) trip.emplace_back(cols[k], rows[k], 1.0);
  }
  for (int i = 0; i < n; ++i) trip.emplace_back(i, i, 1.0);
  Eigen::SparseMatrix<double, Eigen::ColMajor, int> pattern(n, n);
  pattern.setFromTriplets(trip.begin(), trip.end());
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> order;
  Eigen::AMDOrdering<int> amd;
  amd(pattern, order);

  perm_.assign(order.indices().data(), order.indices().data() + n);
  pinv_.assign(n, 0);
  for (int k = 0; k < n; ++k) pinv_[perm_[k]] = k;

  sign_.assign(n, 1);
  for (int i = 0; i < n; ++i) sign_[pinv_[i]] = pivot_signs[i] >= 0 ? 1 : -1;

  // Permuted upper-triangular CSC, always including the diagonal.
  std::vector<std::pair<int, int>> entries;  // (col, row) in permuted ordering
  entries.reserve(rows.size() + n);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    int i = pinv_[rows[k]], j = pinv_[cols[k]];
    if (i > j) std::swap(i, j);
    entries.emplace_back(j, i);
  }
  for (int k = 0; k < n; ++k) entries.emplace_back(k, k);
  std::vector<std::pair<int, int>> sorted = entries;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  ap_.assign(n + 1, 0);
  ai_.resize(sorted.size());
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    ap_[sorted[k].first + 1]++;
    ai_[k] = sorted[k].second;
  }
  for (int j = 0; j < n; ++j) ap_[j + 1] += ap_[j];
  ax_.assign(sorted.size(), 0.0);

  slot_.resize(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    auto it = std::lower_bound(sorted.begin(), sorted.end(), entries[k]);
    slot_[k] = static_cast<int>(it - sorted.begin());
  }

  // Elimination tree and column counts of L.
  parent_.assign(n, -1);
  lnz_.assign(n, 0);
  flag_.assign(n, -1);
  for (int k = 0; k < n; ++k) {
    flag_[k] = k;
    for (int p = ap_[k]; p < ap_[k + 1]; ++p) {
      int i = ai_[p];
      if (i < k) {
        for (; flag_[i] != k; i = parent_[i]) {
          if (parent_[i] == -1) parent_[i] = k;
          lnz_[i]++;
          flag_[i] = k;
        }
      }
    }
  }
  lp_.assign(n + 1, 0);
  for (int k = 0; k < n; ++k) lp_[k + 1] = lp_[k] + lnz_[k];
  li_.assign(lp_[n], 0);
  lx_.assign(lp_[n], 0.0);
  d_.assign(n, 0.0);
  y_.assign(n, 0.0);
  pattern_.assign(n, 0);
  work_.resize(n);
}

int QuasiDefiniteLdl::factorize(const std::vector<double>& values, double delta, double eps) {
  if (values.size() != slot_.size()) throw std::invalid_argument("ldl: value count mismatch");
  std::fill(ax_.begin(), ax_.end(), 0.0);
  for (std::size_t k = 0; k < values.size(); ++k) ax_[slot_[k]] += values[k];

  int regularized = 0;
  std::fill(flag_.begin(), flag_.end(), -1);
  for (int k = 0; k < n_; ++k) {
    y_[k] = 0.0;
    int top = n_;
    flag_[k] = k;
    lnz_[k] = 0;
    for (int p = ap_[k]; p < ap_[k + 1]; ++p) {
      int i = ai_[p];
      y_[i] += ax_[p];
      int len = 0;
      for (; flag_[i] != k; i = parent_[i]) {
        pattern_[len++] = i;
        flag_[i] = k;
      }
      while (len > 0) pattern_[--top] = pattern_[--len];
    }
    d_[k] = y_[k];
    y_[k] = 0.0;
    for (; top < n_; ++top) {
      const int i = pattern_[top];
      const double yi = y_[i];
      y_[i] = 0.0;
      const int p2 = lp_[i] + lnz_[i];
      for (int p = lp_[i]; p < p2; ++p) y_[li_[p]] -= lx_[p] * yi;
      const double l_ki = yi / d_[i];
      d_[k] -= l_ki * yi;
      li_[p2] = k;
      lx_[p2] = l_ki;
      lnz_[i]++;
    }
    if (sign_[k] * d_[k] <= eps) {
      d_[k] = sign_[k] * delta;
      ++regularized;
    }
  }
  return regularized;
}

void QuasiDefiniteLdl::solve(Eigen::VectorXd& rhs) const {
  Eigen::VectorXd& x = work_;
  for (int k = 0; k < n_; ++k) x[k] = rhs[perm_[k]];
  for (int j = 0; j < n_; ++j) {
    const double xj = x[j];
    for (int p = lp_[j]; p < lp_[j + 1]; ++p) x[li_[p]] -= lx_[p] * xj;
  }
  for (int j = 0; j < n_; ++j) x[j] /= d_[j];
  for (int j = n_ - 1; j >= 0; --j) {
    double acc = x[j];
    for (int p = lp_[j]; p < lp_[j + 1]; ++p) acc -= lx_[p] * x[li_[p]];
    x[j] = acc;
  }
  for (int k = 0; k < n_; ++k) rhs[perm_[k]] = x[k];
}

}  // namespace bessplan::conic::detail
