#include <doctest.h>

#include <random>

#include "testutil.hpp"
#include "voltvar/conic.hpp"

using namespace voltvar;

namespace {

ConicProblem<double> empty_box_problem(int m) {
  ConicProblem<double> P;
  P.cost = Vectord::Zero(m);
  P.E = Matrixd::Zero(0, m);
  P.e = Vectord::Zero(0);
  P.box.G = Matrixd::Zero(0, m);
  P.box.offset = Vectord::Zero(0);
  P.box.lo = Vectord::Zero(0);
  P.box.hi = Vectord::Zero(0);
  return P;
}

/// Random primal strictly feasible, compact problem (every variable boxed).
ConicProblem<double> random_socp(std::mt19937_64& rng, int m, int k, int nc) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> upos(0.5, 1.5);
  auto rnd_mat = [&](int rows, int cols) {
    Matrixd A(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) A(i, j) = u(rng);
    return A;
  };
  Vectord z0(m);
  for (int i = 0; i < m; ++i) z0[i] = u(rng);

  ConicProblem<double> P = empty_box_problem(m);
  P.cost = Vectord(m);
  for (int i = 0; i < m; ++i) P.cost[i] = u(rng);
  if (k > 0) {
    P.E = rnd_mat(k, m);
    P.e = P.E * z0;
  }
  P.box.G = Matrixd::Identity(m, m);
  P.box.offset = Vectord::Zero(m);
  P.box.lo = Vectord(m);
  P.box.hi = Vectord(m);
  for (int i = 0; i < m; ++i) {
    P.box.lo[i] = z0[i] - upos(rng);
    P.box.hi[i] = z0[i] + upos(rng);
  }
  for (int c = 0; c < nc; ++c) {
    SocConstraint<double> sc;
    sc.F = rnd_mat(3, m);
    sc.f << u(rng), u(rng), u(rng);
    sc.h = Vectord(m);
    for (int i = 0; i < m; ++i) sc.h[i] = 0.3 * u(rng);
    sc.s = (sc.F * z0 + sc.f).norm() - sc.h.dot(z0) + upos(rng);
    P.cones.push_back(sc);
  }
  return P;
}

}  // namespace

TEST_CASE("one-dimensional cone: min z with |z| <= 1") {
  auto P = empty_box_problem(1);
  P.cost[0] = 1.0;
  SocConstraint<double> c;
  c.F = Matrixd::Zero(3, 1);
  c.F(0, 0) = 1.0;
  c.h = Vectord::Zero(1);
  c.s = 1.0;
  P.cones.push_back(c);

  const auto res = ipm_solve(P);
  REQUIRE(res.status == SolveStatus::optimal);
  CHECK(res.z[0] == doctest::Approx(-1.0).epsilon(1e-7));
  CHECK(std::abs(res.gap) <= 1e-7);
}

TEST_CASE("pure equality: min x s.t. x = 3 has multiplier -1") {
  auto P = empty_box_problem(1);
  P.cost[0] = 1.0;
  P.E = Matrixd::Ones(1, 1);
  P.e = Vectord::Constant(1, 3.0);
  const auto res = ipm_solve(P);
  REQUIRE(res.status == SolveStatus::optimal);
  CHECK(res.z[0] == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(res.dual.lambda[0] == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("box problem reports the active side multiplier") {
  auto P = empty_box_problem(1);
  P.cost[0] = 1.0;
  P.box.G = Matrixd::Identity(1, 1);
  P.box.offset = Vectord::Zero(1);
  P.box.lo = Vectord::Constant(1, 1.0);
  P.box.hi = Vectord::Constant(1, 2.0);
  const auto res = ipm_solve(P);
  REQUIRE(res.status == SolveStatus::optimal);
  CHECK(res.z[0] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(res.dual.nu_lo[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(res.dual.nu_hi[0] == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("random strictly feasible SOCPs solve to certified optimality") {
  std::mt19937_64 rng(23);
  int solved = 0;
  for (int rep = 0; rep < 60; ++rep) {
    const int m = 3 + static_cast<int>(rng() % 8);
    const int k = static_cast<int>(rng() % (static_cast<unsigned>(m) / 2 + 1));
    const int nc = 1 + static_cast<int>(rng() % 3);
    const auto P = random_socp(rng, m, k, nc);
    const auto res = ipm_solve(P);
    REQUIRE(res.status == SolveStatus::optimal);
    ++solved;

    const double scale = std::max(1.0, std::abs(res.primal_value));
    CHECK(std::abs(res.gap) <= 1e-7 * scale);
    CHECK(res.primal_residual <= 1e-8);
    CHECK(res.dual_residual <= 1e-8);

    const auto rep_d = dual_residuals(P, res.z, res.dual);
    CHECK(rep_d.stationarity <= 1e-6 * scale);
    CHECK(rep_d.cone_violation <= 1e-8);
    CHECK(rep_d.nu_sign_violation <= 1e-10);
    CHECK(rep_d.comp_slack <= 1e-6 * scale);
    CHECK(rep_d.equality_residual <= 1e-7);

    // Weak duality along the reported iterate history.
    for (const auto& it : res.history) CHECK(it.dual_obj <= it.primal_obj + 1e-6 * scale);
  }
  CHECK(solved == 60);
}

TEST_CASE("equality multipliers are sensitivities of the optimum") {
  std::mt19937_64 rng(41);
  const auto P = random_socp(rng, 6, 2, 2);
  IpmOptions<double> opt;
  opt.tol = 1e-9;
  const auto base = ipm_solve(P, opt);
  REQUIRE(base.status == SolveStatus::optimal);
  const double delta = 1e-5;
  for (int i = 0; i < 2; ++i) {
    auto Pp = P;
    Pp.e[i] += delta;
    auto Pm = P;
    Pm.e[i] -= delta;
    const auto rp = ipm_solve(Pp, opt);
    const auto rm = ipm_solve(Pm, opt);
    REQUIRE(rp.status == SolveStatus::optimal);
    REQUIRE(rm.status == SolveStatus::optimal);
    const double fd = (rp.primal_value - rm.primal_value) / (2 * delta);
    CHECK(fd == doctest::Approx(-base.dual.lambda[i]).epsilon(1e-3));
  }
}

TEST_CASE("contradictory equalities are reported infeasible") {
  auto P = empty_box_problem(2);
  P.cost << 1.0, 1.0;
  P.E = Matrixd(2, 2);
  P.E << 1, 0, 1, 0;
  P.e = Vectord(2);
  P.e << 0.0, 1.0;
  P.box.G = Matrixd::Identity(2, 2);
  P.box.offset = Vectord::Zero(2);
  P.box.lo = Vectord::Constant(2, -5.0);
  P.box.hi = Vectord::Constant(2, 5.0);
  const auto res = ipm_solve(P);
  CHECK(res.status == SolveStatus::infeasible);
}

TEST_CASE("empty box from crossed bounds is reported infeasible") {
  auto P = empty_box_problem(2);
  P.cost << 1.0, 0.0;
  P.box.G = Matrixd(2, 2);
  P.box.G << 1, 0, 1, 0;  // x0 <= -1 and x0 >= 1
  P.box.offset = Vectord::Zero(2);
  P.box.lo = Vectord(2);
  P.box.hi = Vectord(2);
  const double inf = std::numeric_limits<double>::infinity();
  P.box.lo << -inf, 1.0;
  P.box.hi << -1.0, inf;
  // Keep the remaining variable bounded.
  SocConstraint<double> c;
  c.F = Matrixd::Zero(3, 2);
  c.F(0, 1) = 1.0;
  c.h = Vectord::Zero(2);
  c.s = 1.0;
  P.cones.push_back(c);
  const auto res = ipm_solve(P);
  CHECK(res.status == SolveStatus::infeasible);
}

TEST_CASE("dual residual report flags constructed violations") {
  auto P = empty_box_problem(2);
  P.cost << 0.5, -0.25;
  P.box.G = Matrixd::Identity(2, 2);
  P.box.offset = Vectord::Zero(2);
  P.box.lo = Vectord::Constant(2, -1.0);
  P.box.hi = Vectord::Constant(2, 1.0);

  DualSolution<double> zero;
  zero.lambda = Vectord::Zero(0);
  zero.nu_lo = Vectord::Zero(2);
  zero.nu_hi = Vectord::Zero(2);
  const Vectord z = Vectord::Zero(2);
  const auto rep0 = dual_residuals(P, z, zero);
  CHECK(rep0.stationarity == doctest::Approx(0.5));  // = ||cost||_inf

  auto flipped = zero;
  flipped.nu_lo[0] = -0.3;
  const auto rep1 = dual_residuals(P, z, flipped);
  CHECK(rep1.nu_sign_violation == doctest::Approx(0.3));
}

TEST_CASE("identical inputs produce identical iterates") {
  std::mt19937_64 rng(99);
  const auto P = random_socp(rng, 7, 3, 2);
  const auto a = ipm_solve(P);
  const auto b = ipm_solve(P);
  REQUIRE(a.status == SolveStatus::optimal);
  REQUIRE(b.status == SolveStatus::optimal);
  REQUIRE(a.history.size() == b.history.size());
  CHECK((a.z - b.z).cwiseAbs().maxCoeff() == 0.0);
  for (size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].primal_obj == b.history[i].primal_obj);
    CHECK(a.history[i].step == b.history[i].step);
  }
}
