#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "bessplan/conic/cone_solver.hpp"
#include "conic/cones.hpp"

using namespace bessplan::conic;
using Eigen::VectorXd;

namespace {

SparseMatrix dense_to_sparse(const Eigen::MatrixXd& m) {
  SparseMatrix s = m.sparseView();
  s.makeCompressed();
  return s;
}

ConeProblemData box_lp() {
  // min x0 - x1, 0 <= x <= 1
  ConeProblemData p;
  p.c = VectorXd(2);
  p.c << 1, -1;
  p.A = SparseMatrix(0, 2);
  p.b = VectorXd(0);
  Eigen::MatrixXd g(4, 2);
  g << -1, 0, 0, -1, 1, 0, 0, 1;
  p.G = dense_to_sparse(g);
  p.h = VectorXd(4);
  p.h << 0, 0, 1, 1;
  p.cones.nonneg = 4;
  return p;
}

}  // namespace

TEST_CASE("box LP reaches the vertex") {
  const auto r = default_backend()->solve(box_lp(), {});
  REQUIRE(r.status == SolveStatus::optimal);
  CHECK(r.x[0] == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(std::abs(r.x[0]) < 1e-7);
  CHECK(std::abs(r.x[1] - 1.0) < 1e-7);
  CHECK(std::abs(r.primal_objective + 1.0) < 1e-7);
  CHECK(std::abs(r.dual_objective + 1.0) < 1e-7);
}

TEST_CASE("infeasible LP returns a Farkas certificate") {
  // x >= 1 and x <= 0
  ConeProblemData p;
  p.c = VectorXd::Ones(1);
  p.A = SparseMatrix(0, 1);
  p.b = VectorXd(0);
  Eigen::MatrixXd g(2, 1);
  g << -1, 1;
  p.G = dense_to_sparse(g);
  p.h = VectorXd(2);
  p.h << -1, 0;
  p.cones.nonneg = 2;
  const auto r = default_backend()->solve(p, {});
  REQUIRE(r.status == SolveStatus::infeasible);
  CHECK(std::abs(p.h.dot(r.z) + 1.0) < 1e-9);
  CHECK((p.G.transpose() * r.z).norm() < 1e-7);
  CHECK(r.z.minCoeff() > -1e-9);
}

TEST_CASE("unbounded LP returns a ray") {
  // min -x, x >= 0
  ConeProblemData p;
  p.c = -VectorXd::Ones(1);
  p.A = SparseMatrix(0, 1);
  p.b = VectorXd(0);
  p.G = dense_to_sparse(-Eigen::MatrixXd::Identity(1, 1));
  p.h = VectorXd::Zero(1);
  p.cones.nonneg = 1;
  const auto r = default_backend()->solve(p, {});
  REQUIRE(r.status == SolveStatus::unbounded);
  CHECK(r.x[0] > 0.0);
}

TEST_CASE("second-order cone: min t with t >= |(3,4)|") {
  // variables (t); G x + s = h with s = (t, 3, 4)
  ConeProblemData p;
  p.c = VectorXd::Ones(1);
  p.A = SparseMatrix(0, 1);
  p.b = VectorXd(0);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(3, 1);
  g(0, 0) = -1;
  p.G = dense_to_sparse(g);
  p.h = VectorXd(3);
  p.h << 0, 3, 4;
  p.cones.soc = {3};
  const auto r = default_backend()->solve(p, {});
  REQUIRE(r.status == SolveStatus::optimal);
  CHECK(std::abs(r.x[0] - 5.0) < 1e-7);
}

TEST_CASE("equality dual is the objective sensitivity") {
  // min t s.t. t >= x^2 via ||(t - 1/2, sqrt2 x)|| <= t + 1/2, x = 2
  // vars (x, t)
  ConeProblemData p;
  p.c = VectorXd(2);
  p.c << 0, 1;
  Eigen::MatrixXd a(1, 2);
  a << 1, 0;
  p.A = dense_to_sparse(a);
  p.b = VectorXd::Constant(1, 2.0);
  Eigen::MatrixXd g(3, 2);
  g << 0, -1, 0, -1, -std::sqrt(2.0), 0;
  p.G = dense_to_sparse(g);
  p.h = VectorXd(3);
  p.h << 0.5, -0.5, 0;
  p.cones.soc = {3};
  const auto r = default_backend()->solve(p, {});
  REQUIRE(r.status == SolveStatus::optimal);
  CHECK(std::abs(r.x[1] - 4.0) < 1e-6);
  // d opt / d b = -y
  CHECK(std::abs(-r.y[0] - 4.0) < 1e-5);
}

TEST_CASE("NT scaling satisfies W z = W^-1 s") {
  ConeDims dims;
  dims.nonneg = 2;
  dims.soc = {3, 4};
  bessplan::conic::detail::ConeOps ops(dims);
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    VectorXd s(9), z(9);
    for (int i = 0; i < 9; ++i) {
      s[i] = u(rng);
      z[i] = u(rng);
    }
    s.head(2) = s.head(2).cwiseAbs().array() + 0.1;
    z.head(2) = z.head(2).cwiseAbs().array() + 0.1;
    s[2] = s.segment(3, 2).norm() + 0.2 + std::abs(u(rng));
    z[2] = z.segment(3, 2).norm() + 0.2 + std::abs(u(rng));
    s[5] = s.segment(6, 3).norm() + 0.2 + std::abs(u(rng));
    z[5] = z.segment(6, 3).norm() + 0.2 + std::abs(u(rng));
    bessplan::conic::detail::NtScaling w;
    REQUIRE(ops.compute_scaling(s, z, w));
    VectorXd wz, wis, back;
    ops.apply_w(w, z, wz);
    ops.apply_w_inv(w, s, wis);
    CHECK((wz - wis).norm() < 1e-10);
    ops.apply_w(w, wis, back);
    CHECK((back - s).norm() < 1e-10);
    VectorXd prod, div;
    ops.jordan_product(wz, s, prod);
    ops.jordan_divide(wz, prod, div);
    CHECK((div - s).norm() < 1e-9);
  }
}

TEST_CASE("random feasible SOCPs satisfy KKT conditions") {
  std::mt19937 rng(11);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 6, p = 2;
    ConeDims dims;
    dims.nonneg = 4;
    dims.soc = {3, 4};
    const int m = dims.total();
    Eigen::MatrixXd a(p, n), g(m, n);
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = nd(rng);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) g(i, j) = nd(rng);
    bessplan::conic::detail::ConeOps ops(dims);
    // Strictly feasible primal point and strictly feasible dual point.
    VectorXd x0(n), s0 = ops.identity(), z0 = ops.identity(), y0(p);
    for (int j = 0; j < n; ++j) x0[j] = nd(rng);
    for (int i = 0; i < p; ++i) y0[i] = nd(rng);
    ConeProblemData prob;
    prob.A = dense_to_sparse(a);
    prob.G = dense_to_sparse(g);
    prob.b = a * x0;
    prob.h = g * x0 + s0;
    prob.c = -(a.transpose() * y0 + g.transpose() * z0);
    prob.cones = dims;
    const auto r = default_backend()->solve(prob, {});
    REQUIRE(r.status == SolveStatus::optimal);
    CHECK((a * r.x - prob.b).norm() < 1e-6);
    CHECK((g * r.x + r.s - prob.h).norm() < 1e-6);
    CHECK((a.transpose() * r.y + g.transpose() * r.z + prob.c).norm() < 1e-6);
    CHECK(std::abs(r.s.dot(r.z)) < 1e-6);
    CHECK(std::abs(r.primal_objective - r.dual_objective) < 1e-6);
  }
}

#include "bessplan/conic/program.hpp"

TEST_CASE("parameterized lower bound updates without recompiling") {
  Program prog;
  const Var x = prog.add_variable("x");
  const Param p = prog.add_parameter("p", 3.0);
  prog.add_greater_equal(x, p, "floor");
  prog.set_objective(x);
  const auto compiled = prog.compile();
  auto r = compiled->solve(compiled->default_parameters());
  REQUIRE(r.optimal());
  CHECK(std::abs(r.value(x) - 3.0) < 1e-7);
  r = compiled->solve({7.0});
  REQUIRE(r.optimal());
  CHECK(std::abs(r.value(x) - 7.0) < 1e-7);
}

TEST_CASE("rotated cone epigraph gives t = 4") {
  Program prog;
  const Var t = prog.add_variable("t");
  const Var x = prog.add_variable("x");
  prog.add_rotated_soc(0.5 * Expr(t), Expr(1.0), {Expr(x)}, "epi");
  prog.add_equality(x, 2.0, "fix");
  prog.set_objective(t);
  const auto r = prog.compile()->solve({});
  REQUIRE(r.optimal());
  CHECK(std::abs(r.value(t) - 4.0) < 1e-6);
}

TEST_CASE("box LP through the modeling layer has no equality duals") {
  Program prog;
  const auto x = prog.add_block("x", 2, true);
  prog.add_less_equal(x[0], 1.0, "ub0");
  prog.add_less_equal(x[1], 1.0, "ub1");
  prog.set_objective(Expr(x[0]) - Expr(x[1]));
  const auto r = prog.compile()->solve({});
  REQUIRE(r.optimal());
  CHECK(std::abs(r.value(x[0])) < 1e-7);
  CHECK(std::abs(r.value(x[1]) - 1.0) < 1e-7);
  CHECK(std::abs(r.objective + 1.0) < 1e-7);
  CHECK(r.duals.empty());
  CHECK(prog.num_constraints() == 2);
}

TEST_CASE("tagged equality dual of min x^2 s.t. x = a") {
  Program prog;
  const Var x = prog.add_variable("x");
  const Param a = prog.add_parameter("a", 2.0);
  const int link = prog.add_equality(x, a, "link", true);
  prog.add_objective_square(1.0, x);
  const auto compiled = prog.compile();
  const auto r = compiled->solve({2.0});
  REQUIRE(r.optimal());
  CHECK(std::abs(r.objective - 4.0) < 1e-6);
  CHECK(std::abs(r.dual(link) - 4.0) < 1e-5);
  // Finite-difference sensitivity.
  const double delta = 1e-5;
  const auto rp = compiled->solve({2.0 + delta});
  const double fd = (rp.objective - r.objective) / delta;
  CHECK(std::abs(fd - r.dual(link)) <= 1e-3 * std::abs(r.dual(link)));
  CHECK(std::abs(r.objective - r.dual_objective) <= 1e-6 * (1 + std::abs(r.objective)));
}

TEST_CASE("infeasible LP through the modeling layer") {
  Program prog;
  const Var x = prog.add_variable("x");
  prog.add_greater_equal(x, 1.0, "lo");
  prog.add_less_equal(x, 0.0, "hi");
  prog.set_objective(x);
  const auto r = prog.compile()->solve({});
  CHECK(r.status == SolveStatus::infeasible);
  CHECK(r.duals.empty());
}

TEST_CASE("parameter-multiplied coefficients") {
  // min x s.t. p * x >= 6, x >= 0
  Program prog;
  const Var x = prog.add_variable("x", true);
  const Param p = prog.add_parameter("p", 2.0);
  prog.add_greater_equal(p * x, 6.0, "scaled");
  prog.set_objective(x);
  const auto compiled = prog.compile();
  CHECK(std::abs(compiled->solve({2.0}).value(x) - 3.0) < 1e-7);
  CHECK(std::abs(compiled->solve({3.0}).value(x) - 2.0) < 1e-7);
  CHECK(compiled->num_parametric_entries() == 1);
}

TEST_CASE("audit names the offending construct") {
  Program prog;
  const Var x = prog.add_variable("x");
  const Param p = prog.add_parameter("p");
  const Param q = prog.add_parameter("q");
  prog.add_less_equal((Expr(x) * p) * q, 1.0, "bilinear_row");
  try {
    prog.compile();
    FAIL("expected audit failure");
  } catch (const ModelError& e) {
    CHECK(std::string(e.what()).find("bilinear_row") != std::string::npos);
  }
  Program neg;
  const Var y = neg.add_variable("y");
  neg.add_objective_square(-1.0, y, "concave_term");
  CHECK_THROWS_WITH_AS(neg.compile(), doctest::Contains("concave_term"), ModelError);
}

TEST_CASE("parameter update equals a fresh compile") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  for (int trial = 0; trial < 5; ++trial) {
    const double a = u(rng), b = u(rng);
    auto make = [&](double pa, double pb, Program& prog, Var& x, Var& y) {
      x = prog.add_variable("x");
      y = prog.add_variable("y");
      const Param p = prog.add_parameter("a", pa);
      const Param q = prog.add_parameter("b", pb);
      prog.add_soc({Expr(x) - p, Expr(y) - q}, 1.0, "ball");
      prog.set_objective(Expr(x) + 2.0 * Expr(y));
    };
    Program p1, p2;
    Var x1, y1, x2, y2;
    make(1.0, 1.0, p1, x1, y1);
    make(a, b, p2, x2, y2);
    const auto c1 = p1.compile();
    const auto r1 = c1->solve({a, b});
    const auto r2 = p2.compile()->solve(p2.compile()->default_parameters());
    REQUIRE(r1.optimal());
    REQUIRE(r2.optimal());
    CHECK(std::abs(r1.value(x1) - r2.value(x2)) < 1e-8);
    CHECK(std::abs(r1.objective - r2.objective) < 1e-8);
    // Closed form: center minus unit vector along (1,2).
    CHECK(std::abs(r1.objective - (a + 2 * b - std::sqrt(5.0))) < 1e-7);
  }
}
