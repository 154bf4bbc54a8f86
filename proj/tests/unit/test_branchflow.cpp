#include <doctest.h>

#include <cmath>
#include <random>

#include "testutil.hpp"
#include "voltvar/branchflow.hpp"

using namespace voltvar;

namespace {

// Independent oracle for a two-bus feeder with v0 = 1: the squared current
// solves (r^2+x^2) L^2 - (1 + 2(r p + x q)) L + (p^2 + q^2) = 0, physical
// solution = smaller root.
double two_bus_ell_oracle(double r, double x, double p, double q) {
  const double a = r * r + x * x;
  const double b = -(1.0 + 2.0 * (r * p + x * q));
  const double c = p * p + q * q;
  const double disc = b * b - 4.0 * a * c;
  REQUIRE(disc > 0.0);
  const double sq = std::sqrt(disc);
  const double qq = -(b + (b >= 0 ? sq : -sq)) / 2.0;
  const double r1 = qq / a;
  const double r2 = c / qq;
  return std::min(r1, r2);
}

}  // namespace

TEST_CASE("two-bus sweep matches the scalar-quadratic oracle") {
  auto net = testutil::make_two_bus(0.01, 0.02);
  Vectord p(1), q(1);
  p << -0.1;
  q << -0.05;
  const double ell_star = two_bus_ell_oracle(0.01, 0.02, -0.1, -0.05);

  const auto pt = sweep_solve(net, p, q, 1e-12);
  CHECK(pt.ell[0] == doctest::Approx(ell_star).epsilon(1e-10));
  CHECK(power_loss(net, pt) == doctest::Approx(0.01 * ell_star).epsilon(1e-10));
  // Frozen from the oracle: ell ~ 0.012550, loss ~ 1.25503e-4, v ~ 0.995994.
  CHECK(pt.ell[0] == doctest::Approx(0.0125503).epsilon(1e-4));
  CHECK(pt.v[0] == doctest::Approx(0.9959937).epsilon(1e-5));

  const auto rep = residual_check(net, p, q, pt);
  CHECK(rep.max_equation() <= 1e-9);
}

TEST_CASE("two-bus sweep with zero reactive injection") {
  auto net = testutil::make_two_bus(0.01, 0.02);
  Vectord p(1), q(1);
  p << -0.1;
  q << 0.0;
  const double ell_star = two_bus_ell_oracle(0.01, 0.02, -0.1, 0.0);
  const auto pt = sweep_solve(net, p, q, 1e-12);
  CHECK(pt.ell[0] == doctest::Approx(ell_star).epsilon(1e-10));
  CHECK(power_loss(net, pt) == doctest::Approx(0.01 * ell_star).epsilon(1e-10));
}

TEST_CASE("zero injections produce the flat no-load point") {
  std::mt19937_64 rng(3);
  auto net = testutil::random_tree_network(rng, 9);
  const Vectord z = Vectord::Zero(net.num_lines());
  const auto pt = sweep_solve(net, z, z);
  CHECK(pt.P.cwiseAbs().maxCoeff() == 0.0);
  CHECK(pt.Q.cwiseAbs().maxCoeff() == 0.0);
  CHECK(pt.ell.cwiseAbs().maxCoeff() == 0.0);
  CHECK((pt.v.array() - net.v0).abs().maxCoeff() == 0.0);
  CHECK(power_loss(net, pt) == 0.0);

  const auto rep = residual_check(net, z, z, pt);
  CHECK(rep.power_p == 0.0);
  CHECK(rep.power_q == 0.0);
  CHECK(rep.voltage == 0.0);
  CHECK(rep.current == 0.0);
}

TEST_CASE("balanced generation and load keeps all flows at zero") {
  std::mt19937_64 rng(5);
  auto net = testutil::random_tree_network(rng, 7);
  const Vectord z = Vectord::Zero(net.num_lines());
  const auto pt = sweep_solve(net, z, z, 1e-12);
  CHECK(power_loss(net, pt) == 0.0);
  CHECK(pt.P.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("residual report reacts linearly to a current perturbation") {
  auto net = testutil::make_two_bus(0.01, 0.02);
  Vectord p(1), q(1);
  p << -0.1;
  q << -0.05;
  auto pt = sweep_solve(net, p, q, 1e-12);
  pt.ell[0] += 0.1;
  const auto rep = residual_check(net, p, q, pt);
  CHECK(rep.current == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("sweep output passes residual_check on random feasible cases") {
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 40; ++rep) {
    const int n = 2 + static_cast<int>(rng() % 14);
    auto net = testutil::random_tree_network(rng, n);
    const Vectord p = testutil::random_vector(rng, n, -0.02, 0.02);
    const Vectord q = testutil::random_vector(rng, n, -0.02, 0.02);
    const auto pt = sweep_solve(net, p, q);
    const auto res = residual_check(net, p, q, pt);
    CHECK(res.max_equation() <= 1e-8);

    // Loss identity and conservation.
    const double loss = power_loss(net, pt);
    CHECK(loss >= 0.0);
    CHECK(pt.p0 + p.sum() - loss == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(pt.q0 + q.sum() - net.x.dot(pt.ell) == doctest::Approx(0.0).epsilon(1e-9));
  }
}

TEST_CASE("non-convergence carries diagnostics") {
  auto net = testutil::make_two_bus(0.01, 0.02);
  Vectord p(1), q(1);
  // Far beyond the deliverable power of the line.
  p << -40.0;
  q << -40.0;
  CHECK_THROWS_AS(sweep_solve(net, p, q, 1e-12, 50), SweepNonConvergence);
}
