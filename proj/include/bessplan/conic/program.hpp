#pragma once

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "bessplan/conic/cone_solver.hpp"

namespace bessplan::conic {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Var {
  int id = -1;
};

struct Param {
  int id = -1;
};

// Affine expression in variables whose coefficients may be affine in
// parameters:  sum_j (a_j + sum_k b_jk p_k) x_j + (c + sum_k d_k p_k).
class Expr {
 public:
  struct Term {
    int var;
    double coef;
  };
  struct ParamTerm {
    int param;
    double coef;
  };
  struct BilinearTerm {
    int param;
    int var;
    double coef;
  };

  Expr() = default;
  Expr(double c) : constant_(c) {}  // NOLINT
  Expr(Var v) { terms_.push_back({v.id, 1.0}); }  // NOLINT
  Expr(Param p) { param_terms_.push_back({p.id, 1.0}); }  // NOLINT

  Expr& operator+=(const Expr& o);
  Expr& operator-=(const Expr& o);
  Expr& operator*=(double s);

  // Multiplication by a parameter; fails the audit if this already holds
  // parameter terms (parameter products are not affine).
  Expr times(Param p) const;

  const std::vector<Term>& terms() const { return terms_; }
  const std::vector<ParamTerm>& param_terms() const { return param_terms_; }
  const std::vector<BilinearTerm>& bilinear_terms() const { return bilinear_; }
  double constant() const { return constant_; }
  bool nonaffine() const { return nonaffine_; }

 private:
  std::vector<Term> terms_;
  std::vector<ParamTerm> param_terms_;
  std::vector<BilinearTerm> bilinear_;
  double constant_ = 0.0;
  bool nonaffine_ = false;
};

Expr operator+(Expr a, const Expr& b);
Expr operator-(Expr a, const Expr& b);
Expr operator-(Expr a);
Expr operator*(double s, Expr a);
Expr operator*(Expr a, double s);
Expr operator*(Param p, const Expr& a);
Expr operator*(const Expr& a, Param p);
Expr operator*(Param p, Var v);
Expr operator*(Var v, Param p);
Expr operator*(Param p, Param q);

Expr sum(const std::vector<Expr>& terms);

enum class ConstraintKind { equality, less_equal, soc, rotated_soc };

struct ConstraintInfo {
  std::string label;
  ConstraintKind kind;
  int rows;
  bool tagged;
};

class CompiledProgram;

class Program {
 public:
  Var add_variable(const std::string& name, bool nonneg = false);
  std::vector<Var> add_block(const std::string& name, int size, bool nonneg = false);
  Param add_parameter(const std::string& name, double default_value = 0.0);

  // Each call below counts as one constraint.
  int add_equality(const Expr& lhs, const Expr& rhs, const std::string& label,
                   bool tagged = false);
  int add_less_equal(const Expr& lhs, const Expr& rhs, const std::string& label);
  int add_greater_equal(const Expr& lhs, const Expr& rhs, const std::string& label) {
    return add_less_equal(rhs, lhs, label);
  }
  // ||vec|| <= scalar
  int add_soc(const std::vector<Expr>& vec, const Expr& scalar, const std::string& label);
  // 2 x y >= ||z||^2, x, y >= 0
  int add_rotated_soc(const Expr& x, const Expr& y, const std::vector<Expr>& z,
                      const std::string& label);

  void set_objective(const Expr& linear) { objective_ = linear; }
  void add_objective(const Expr& linear) { objective_ += linear; }
  // weight * e^2 with weight >= 0.
  void add_objective_square(double weight, const Expr& e, const std::string& label = "objective");

  int num_variables() const { return static_cast<int>(var_names_.size()); }
  int num_constraints() const { return static_cast<int>(constraints_.size()); }
  int num_parameters() const { return static_cast<int>(param_names_.size()); }
  int count_constraints(const std::string& label_prefix) const;

  const std::vector<ConstraintInfo>& constraints() const { return constraints_; }
  const std::string& variable_name(Var v) const { return var_names_.at(v.id); }
  const std::string& parameter_name(Param p) const { return param_names_.at(p.id); }
  Param parameter(const std::string& name) const;
  std::vector<Var> block(const std::string& name) const;

  // Raises ModelError naming the first offending constraint.
  void audit() const;

  std::shared_ptr<const CompiledProgram> compile() const;

 private:
  friend class CompiledProgram;
  struct Row {
    int constraint;
    ConstraintKind kind;
    std::vector<Expr> exprs;  // one per cone row; for soc: scalar first
  };

  void check_expr(const Expr& e) const;

  std::vector<std::string> var_names_;
  std::vector<bool> nonneg_;
  std::map<std::string, std::pair<int, int>> blocks_;
  std::vector<std::string> param_names_;
  std::vector<double> param_defaults_;
  std::vector<ConstraintInfo> constraints_;
  std::vector<Row> rows_;
  Expr objective_;
  struct Square {
    double weight;
    Expr e;
    std::string label;
  };
  std::vector<Square> squares_;
};

struct SolutionRecord {
  SolveStatus status = SolveStatus::numerical_failure;
  bool reduced_accuracy = false;
  std::vector<double> values;
  double objective = 0.0;
  double dual_objective = 0.0;
  // Constraint id -> d(optimal value)/d(rhs), for tagged equalities.
  std::map<int, double> duals;
  // Infeasible status only: constraint id -> largest |multiplier| of the
  // Farkas certificate over its rows (normalized so b'y + h'z = -1).
  std::map<int, double> certificate;
  double solve_time = 0.0;
  int iterations = 0;
  std::string diagnostics;

  double value(Var v) const { return values.at(v.id); }
  double dual(int constraint) const;
  bool optimal() const { return status == SolveStatus::optimal; }
};

class CompiledProgram {
 public:
  using ParameterValues = std::vector<double>;

  explicit CompiledProgram(const Program& program);

  ParameterValues default_parameters() const { return param_defaults_; }
  int num_parameters() const { return static_cast<int>(param_defaults_.size()); }
  int num_variables() const { return num_user_vars_; }
  int num_constraints() const { return num_constraints_; }
  // Number of coefficient slots that depend on parameters.
  int num_parametric_entries() const { return static_cast<int>(slots_.size()); }

  // Canonical data at the given parameter values.
  ConeProblemData instantiate(const ParameterValues& values) const;

  SolutionRecord solve(const ParameterValues& values, const SolverSettings& settings = {},
                       const ConeBackend* backend = nullptr) const;

 private:
  enum class Target { c, A, b, G, h, objective_constant };
  struct Slot {
    Target target;
    int index;
    double base;
    std::vector<Expr::ParamTerm> terms;
  };

  ConeProblemData base_;
  double objective_constant_ = 0.0;
  std::vector<Slot> slots_;
  std::vector<double> param_defaults_;
  int num_user_vars_ = 0;
  int num_constraints_ = 0;
  std::vector<std::pair<int, int>> tagged_rows_;  // (constraint id, equality row)
  std::vector<int> eq_row_constraint_;
  std::vector<int> g_row_constraint_;  // -1 for variable sign rows
};

}  // namespace bessplan::conic
