#include "bessplan/conic/program.hpp"

#include <chrono>
#include <cmath>
#include <unordered_map>

#include <fmt/format.h>

namespace bessplan::conic {

Expr& Expr::operator+=(const Expr& o) {
  terms_.insert(terms_.end(), o.terms_.begin(), o.terms_.end());
  param_terms_.insert(param_terms_.end(), o.param_terms_.begin(), o.param_terms_.end());
  bilinear_.insert(bilinear_.end(), o.bilinear_.begin(), o.bilinear_.end());
  constant_ += o.constant_;
  nonaffine_ = nonaffine_ || o.nonaffine_;
  return *this;
}

Expr& Expr::operator-=(const Expr& o) {
  Expr neg = o;
  neg *= -1.0;
  return *this += neg;
}

Expr& Expr::operator*=(double s) {
  for (auto& t : terms_) t.coef *= s;
  for (auto& t : param_terms_) t.coef *= s;
  for (auto& t : bilinear_) t.coef *= s;
  constant_ *= s;
  return *this;
}

Expr Expr::times(Param p) const {
  Expr out;
  out.nonaffine_ = nonaffine_ || !param_terms_.empty() || !bilinear_.empty();
  for (const auto& t : terms_) out.bilinear_.push_back({p.id, t.var, t.coef});
  if (constant_ != 0.0) out.param_terms_.push_back({p.id, constant_});
  return out;
}

Expr operator+(Expr a, const Expr& b) { return a += b; }
Expr operator-(Expr a, const Expr& b) { return a -= b; }
Expr operator-(Expr a) { return a *= -1.0; }
Expr operator*(double s, Expr a) { return a *= s; }
Expr operator*(Expr a, double s) { return a *= s; }
Expr operator*(Param p, const Expr& a) { return a.times(p); }
Expr operator*(const Expr& a, Param p) { return a.times(p); }
Expr operator*(Param p, Var v) { return Expr(v).times(p); }
Expr operator*(Var v, Param p) { return Expr(v).times(p); }
Expr operator*(Param p, Param q) { return Expr(p).times(q); }

Expr sum(const std::vector<Expr>& terms) {
  Expr out;
  for (const auto& t : terms) out += t;
  return out;
}

double SolutionRecord::dual(int constraint) const {
  auto it = duals.find(constraint);
  if (it == duals.end()) {
    throw ModelError(fmt::format("no dual recorded for constraint {}", constraint));
  }
  return it->second;
}

Var Program::add_variable(const std::string& name, bool nonneg) {
  var_names_.push_back(name);
  nonneg_.push_back(nonneg);
  return Var{static_cast<int>(var_names_.size()) - 1};
}

std::vector<Var> Program::add_block(const std::string& name, int size, bool nonneg) {
  if (blocks_.count(name)) throw ModelError("duplicate variable block '" + name + "'");
  std::vector<Var> out;
  out.reserve(size);
  blocks_[name] = {num_variables(), size};
  for (int i = 0; i < size; ++i) out.push_back(add_variable(fmt::format("{}[{}]", name, i), nonneg));
  return out;
}

std::vector<Var> Program::block(const std::string& name) const {
  auto it = blocks_.find(name);
  if (it == blocks_.end()) throw ModelError("unknown variable block '" + name + "'");
  std::vector<Var> out;
  for (int i = 0; i < it->second.second; ++i) out.push_back(Var{it->second.first + i});
  return out;
}

Param Program::add_parameter(const std::string& name, double default_value) {
  for (const auto& n : param_names_) {
    if (n == name) throw ModelError("duplicate parameter '" + name + "'");
  }
  param_names_.push_back(name);
  param_defaults_.push_back(default_value);
  return Param{static_cast<int>(param_names_.size()) - 1};
}

Param Program::parameter(const std::string& name) const {
  for (std::size_t i = 0; i < param_names_.size(); ++i) {
    if (param_names_[i] == name) return Param{static_cast<int>(i)};
  }
  throw ModelError("unknown parameter '" + name + "'");
}

int Program::add_equality(const Expr& lhs, const Expr& rhs, const std::string& label,
                          bool tagged) {
  const int id = num_constraints();
  constraints_.push_back({label, ConstraintKind::equality, 1, tagged});
  rows_.push_back({id, ConstraintKind::equality, {lhs - rhs}});
  return id;
}

int Program::add_less_equal(const Expr& lhs, const Expr& rhs, const std::string& label) {
  const int id = num_constraints();
  constraints_.push_back({label, ConstraintKind::less_equal, 1, false});
  rows_.push_back({id, ConstraintKind::less_equal, {lhs - rhs}});
  return id;
}

int Program::add_soc(const std::vector<Expr>& vec, const Expr& scalar, const std::string& label) {
  const int id = num_constraints();
  std::vector<Expr> exprs;
  exprs.reserve(vec.size() + 1);
  exprs.push_back(scalar);
  exprs.insert(exprs.end(), vec.begin(), vec.end());
  constraints_.push_back({label, ConstraintKind::soc, static_cast<int>(exprs.size()), false});
  rows_.push_back({id, ConstraintKind::soc, std::move(exprs)});
  return id;
}

int Program::add_rotated_soc(const Expr& x, const Expr& y, const std::vector<Expr>& z,
                             const std::string& label) {
  // 2xy >= |z|^2, x,y >= 0  <=>  |(x - y, sqrt2 z)| <= x + y
  const int id = num_constraints();
  std::vector<Expr> exprs;
  exprs.reserve(z.size() + 2);
  exprs.push_back(x + y);
  exprs.push_back(x - y);
  for (const auto& zi : z) exprs.push_back(std::sqrt(2.0) * zi);
  constraints_.push_back(
      {label, ConstraintKind::rotated_soc, static_cast<int>(exprs.size()), false});
  rows_.push_back({id, ConstraintKind::rotated_soc, std::move(exprs)});
  return id;
}

void Program::add_objective_square(double weight, const Expr& e, const std::string& label) {
  squares_.push_back({weight, e, label});
}

int Program::count_constraints(const std::string& label_prefix) const {
  int n = 0;
  for (const auto& c : constraints_) {
    if (c.label.compare(0, label_prefix.size(), label_prefix) == 0) ++n;
  }
  return n;
}

void Program::check_expr(const Expr& e) const {
  if (e.nonaffine()) throw ModelError("product of parameters is not affine");
  if (!std::isfinite(e.constant())) throw ModelError("non-finite constant");
  for (const auto& t : e.terms()) {
    if (t.var < 0 || t.var >= num_variables()) throw ModelError("unknown variable");
    if (!std::isfinite(t.coef)) throw ModelError("non-finite coefficient");
  }
  for (const auto& t : e.param_terms()) {
    if (t.param < 0 || t.param >= num_parameters()) throw ModelError("unknown parameter");
    if (!std::isfinite(t.coef)) throw ModelError("non-finite coefficient");
  }
  for (const auto& t : e.bilinear_terms()) {
    if (t.var < 0 || t.var >= num_variables()) throw ModelError("unknown variable");
    if (t.param < 0 || t.param >= num_parameters()) throw ModelError("unknown parameter");
    if (!std::isfinite(t.coef)) throw ModelError("non-finite coefficient");
  }
}

void Program::audit() const {
  for (const auto& row : rows_) {
    for (const auto& e : row.exprs) {
      try {
        check_expr(e);
      } catch (const ModelError& err) {
        throw ModelError(fmt::format("constraint '{}' (#{}): {}",
                                     constraints_[row.constraint].label, row.constraint,
                                     err.what()));
      }
    }
  }
  try {
    check_expr(objective_);
  } catch (const ModelError& err) {
    throw ModelError(fmt::format("objective: {}", err.what()));
  }
  for (const auto& sq : squares_) {
    if (!(sq.weight >= 0.0) || !std::isfinite(sq.weight)) {
      throw ModelError(fmt::format("objective term '{}': quadratic weight {} is not convex",
                                   sq.label, sq.weight));
    }
    try {
      check_expr(sq.e);
    } catch (const ModelError& err) {
      throw ModelError(fmt::format("objective term '{}': {}", sq.label, err.what()));
    }
  }
}

std::shared_ptr<const CompiledProgram> Program::compile() const {
  audit();
  return std::make_shared<const CompiledProgram>(*this);
}

namespace {

struct EntryBuilder {
  struct Entry {
    int row, col;
    double base = 0.0;
    std::vector<Expr::ParamTerm> terms;
  };
  std::vector<Entry> entries;
  std::unordered_map<long long, int> index;
  long long stride;

  explicit EntryBuilder(int cols) : stride(cols + 1) {}

  Entry& at(int row, int col) {
    const long long key = static_cast<long long>(row) * stride + col;
    auto [it, inserted] = index.emplace(key, static_cast<int>(entries.size()));
    if (inserted) entries.push_back({row, col, 0.0, {}});
    return entries[it->second];
  }

  // Adds sign * (linear part of e) to row.
  void add_row(int row, const Expr& e, double sign) {
    for (const auto& t : e.terms()) at(row, t.var).base += sign * t.coef;
    for (const auto& t : e.bilinear_terms()) {
      at(row, t.var).terms.push_back({t.param, sign * t.coef});
    }
  }
};

}  // namespace

CompiledProgram::CompiledProgram(const Program& prog) {
  num_user_vars_ = prog.num_variables();
  num_constraints_ = prog.num_constraints();
  param_defaults_ = prog.param_defaults_;
  const int nsq = static_cast<int>(prog.squares_.size());
  const int n = num_user_vars_ + nsq;

  // Collect rows by destination.
  std::vector<const Expr*> eq_rows;
  std::vector<std::pair<int, int>> eq_constraint;
  std::vector<Expr> orthant_rows;  // already in "G x + s = h" sign: expr <= 0
  std::vector<std::vector<Expr>> soc_blocks;
  std::vector<int> soc_constraint;

  for (const auto& row : prog.rows_) {
    switch (row.kind) {
      case ConstraintKind::equality:
        if (prog.constraints_[row.constraint].tagged) {
          tagged_rows_.emplace_back(row.constraint, static_cast<int>(eq_rows.size()));
        }
        eq_rows.push_back(&row.exprs[0]);
        eq_row_constraint_.push_back(row.constraint);
        break;
      case ConstraintKind::less_equal:
        orthant_rows.push_back(row.exprs[0]);
        g_row_constraint_.push_back(row.constraint);
        break;
      case ConstraintKind::soc:
      case ConstraintKind::rotated_soc:
        soc_blocks.push_back(row.exprs);
        soc_constraint.push_back(row.constraint);
        break;
    }
  }
  for (int j = 0; j < num_user_vars_; ++j) {
    if (prog.nonneg_[j]) {
      orthant_rows.push_back(-Expr(Var{j}));
      g_row_constraint_.push_back(-1);
    }
  }
  for (std::size_t b = 0; b < soc_blocks.size(); ++b) {
    g_row_constraint_.insert(g_row_constraint_.end(), soc_blocks[b].size(), soc_constraint[b]);
  }
  for (int k = 0; k < nsq; ++k) {
    const Var t{num_user_vars_ + k};
    const auto& sq = prog.squares_[k];
    soc_blocks.push_back({Expr(t) + 0.5, Expr(t) - 0.5, std::sqrt(2.0) * sq.e});
  }

  const int p = static_cast<int>(eq_rows.size());
  int m = static_cast<int>(orthant_rows.size());
  base_.cones.nonneg = m;
  for (const auto& blk : soc_blocks) {
    base_.cones.soc.push_back(static_cast<int>(blk.size()));
    m += static_cast<int>(blk.size());
  }

  base_.c = Eigen::VectorXd::Zero(n);
  base_.b = Eigen::VectorXd::Zero(p);
  base_.h = Eigen::VectorXd::Zero(m);

  auto add_rhs = [&](Target target, int index, const Expr& e, double sign,
                     Eigen::VectorXd& vec) {
    vec[index] += sign * e.constant();
    if (!e.param_terms().empty()) {
      Slot s{target, index, 0.0, {}};
      for (const auto& t : e.param_terms()) s.terms.push_back({t.param, sign * t.coef});
      slots_.push_back(std::move(s));
    }
  };

  EntryBuilder a_entries(n), g_entries(n);
  for (int i = 0; i < p; ++i) {
    a_entries.add_row(i, *eq_rows[i], 1.0);
    add_rhs(Target::b, i, *eq_rows[i], -1.0, base_.b);
  }
  int g_row = 0;
  for (const auto& e : orthant_rows) {
    g_entries.add_row(g_row, e, 1.0);
    add_rhs(Target::h, g_row, e, -1.0, base_.h);
    ++g_row;
  }
  for (const auto& blk : soc_blocks) {
    for (const auto& e : blk) {
      g_entries.add_row(g_row, e, -1.0);
      add_rhs(Target::h, g_row, e, 1.0, base_.h);
      ++g_row;
    }
  }

  // Objective.
  for (const auto& t : prog.objective_.terms()) base_.c[t.var] += t.coef;
  for (const auto& t : prog.objective_.bilinear_terms()) {
    slots_.push_back({Target::c, t.var, 0.0, {{t.param, t.coef}}});
  }
  objective_constant_ = prog.objective_.constant();
  if (!prog.objective_.param_terms().empty()) {
    slots_.push_back({Target::objective_constant, 0, 0.0, prog.objective_.param_terms()});
  }
  for (int k = 0; k < nsq; ++k) base_.c[num_user_vars_ + k] += prog.squares_[k].weight;

  auto build = [&](EntryBuilder& eb, int rows, Target target, SparseMatrix& out) {
    std::vector<Eigen::Triplet<double, int>> trip;
    trip.reserve(eb.entries.size());
    for (const auto& e : eb.entries) {
      if (e.base == 0.0 && e.terms.empty()) continue;
      trip.emplace_back(e.row, e.col, e.base);
    }
    out = SparseMatrix(rows, n);
    out.setFromTriplets(trip.begin(), trip.end());
    out.makeCompressed();
    std::unordered_map<long long, int> position;
    for (int j = 0; j < out.outerSize(); ++j) {
      for (int k = out.outerIndexPtr()[j]; k < out.outerIndexPtr()[j + 1]; ++k) {
        position[static_cast<long long>(out.innerIndexPtr()[k]) * eb.stride + j] = k;
      }
    }
    for (const auto& e : eb.entries) {
      if (e.terms.empty()) continue;
      const int k = position.at(static_cast<long long>(e.row) * eb.stride + e.col);
      slots_.push_back({target, k, 0.0, e.terms});
    }
  };
  build(a_entries, p, Target::A, base_.A);
  build(g_entries, m, Target::G, base_.G);

  // Bases of parameter-dependent slots are the parameter-free parts.
  for (auto& s : slots_) {
    switch (s.target) {
      case Target::c:
        s.base = base_.c[s.index];
        break;
      case Target::b:
        s.base = base_.b[s.index];
        break;
      case Target::h:
        s.base = base_.h[s.index];
        break;
      case Target::A:
        s.base = base_.A.valuePtr()[s.index];
        break;
      case Target::G:
        s.base = base_.G.valuePtr()[s.index];
        break;
      case Target::objective_constant:
        s.base = objective_constant_;
        break;
    }
  }
  // Slots sharing an index must accumulate from the same base exactly once:
  // merge them.
  std::map<std::pair<int, int>, int> merged;
  std::vector<Slot> unique;
  for (auto& s : slots_) {
    const auto key = std::make_pair(static_cast<int>(s.target), s.index);
    auto it = merged.find(key);
    if (it == merged.end()) {
      merged[key] = static_cast<int>(unique.size());
      unique.push_back(std::move(s));
    } else {
      auto& u = unique[it->second];
      u.terms.insert(u.terms.end(), s.terms.begin(), s.terms.end());
    }
  }
  slots_ = std::move(unique);
}

ConeProblemData CompiledProgram::instantiate(const ParameterValues& values) const {
  if (values.size() != param_defaults_.size()) {
    throw ModelError(fmt::format("expected {} parameter values, got {}", param_defaults_.size(),
                                 values.size()));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) throw ModelError(fmt::format("parameter {} is not finite", i));
  }
  ConeProblemData d = base_;
  for (const auto& s : slots_) {
    double v = s.base;
    for (const auto& t : s.terms) v += t.coef * values[t.param];
    switch (s.target) {
      case Target::c:
        d.c[s.index] = v;
        break;
      case Target::b:
        d.b[s.index] = v;
        break;
      case Target::h:
        d.h[s.index] = v;
        break;
      case Target::A:
        d.A.valuePtr()[s.index] = v;
        break;
      case Target::G:
        d.G.valuePtr()[s.index] = v;
        break;
      case Target::objective_constant:
        break;
    }
  }
  return d;
}

SolutionRecord CompiledProgram::solve(const ParameterValues& values,
                                      const SolverSettings& settings,
                                      const ConeBackend* backend) const {
  const auto start = std::chrono::steady_clock::now();
  const ConeProblemData data = instantiate(values);
  double constant = objective_constant_;
  for (const auto& s : slots_) {
    if (s.target != Target::objective_constant) continue;
    constant = s.base;
    for (const auto& t : s.terms) constant += t.coef * values[t.param];
  }
  std::shared_ptr<const ConeBackend> fallback;
  if (backend == nullptr) {
    fallback = default_backend();
    backend = fallback.get();
  }
  const ConeSolverResult r = backend->solve(data, settings);

  SolutionRecord rec;
  rec.status = r.status;
  rec.reduced_accuracy = r.reduced_accuracy;
  rec.iterations = r.iterations;
  rec.diagnostics = r.diagnostics;
  if (r.status == SolveStatus::optimal) {
    rec.values.assign(r.x.data(), r.x.data() + num_user_vars_);
    rec.objective = r.primal_objective + constant;
    rec.dual_objective = r.dual_objective + constant;
    for (const auto& [cid, row] : tagged_rows_) rec.duals[cid] = -r.y[row];
  } else if (r.status == SolveStatus::infeasible && r.y.size() == static_cast<int>(eq_row_constraint_.size()) &&
             r.z.size() >= static_cast<int>(g_row_constraint_.size())) {
    auto note = [&](int cid, double v) {
      if (cid < 0 || v == 0.0) return;
      double& slot = rec.certificate[cid];
      slot = std::max(slot, std::abs(v));
    };
    for (std::size_t i = 0; i < eq_row_constraint_.size(); ++i) note(eq_row_constraint_[i], r.y[i]);
    for (std::size_t i = 0; i < g_row_constraint_.size(); ++i) note(g_row_constraint_[i], r.z[i]);
  }
  rec.solve_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

}  // namespace bessplan::conic
