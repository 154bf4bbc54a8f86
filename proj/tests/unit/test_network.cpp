#include <doctest.h>

#include <random>

#include "testutil.hpp"
#include "voltvar/network.hpp"

using namespace voltvar;

TEST_CASE("smallest valid tree") {
  auto net = testutil::make_two_bus();
  CHECK(net.num_buses() == 2);
  CHECK(net.num_lines() == 1);
  REQUIRE(net.children[0].size() == 1);
  CHECK(net.children[0][0] == 1);
  CHECK(net.leaf_to_root.back() == 0);
}

TEST_CASE("construction rejects bad inputs with named diagnostics") {
  std::vector<Bus<double>> buses(3);
  for (int i = 0; i < 3; ++i) buses[static_cast<size_t>(i)].id = i;
  buses[0].parent = -1;
  buses[0].kind = BusKind::substation;
  buses[1].kind = BusKind::load;
  buses[2].kind = BusKind::load;

  SUBCASE("parent loop 1->2->1") {
    buses[1].parent = 2;
    buses[2].parent = 1;
    std::vector<Line<double>> lines{{1, 0.01, 0.02}, {2, 0.01, 0.02}};
    CHECK_THROWS_WITH_AS(build_network(buses, lines), doctest::Contains("cycle"), std::invalid_argument);
  }
  SUBCASE("nonpositive resistance") {
    buses[1].parent = 0;
    buses[2].parent = 1;
    std::vector<Line<double>> lines{{1, 0.0, 0.02}, {2, 0.01, 0.02}};
    CHECK_THROWS_WITH_AS(build_network(buses, lines), doctest::Contains("nonpositive resistance"),
                         std::invalid_argument);
  }
  SUBCASE("duplicate line") {
    buses[1].parent = 0;
    buses[2].parent = 1;
    std::vector<Line<double>> lines{{1, 0.01, 0.02}, {1, 0.01, 0.02}};
    CHECK_THROWS_WITH_AS(build_network(buses, lines), doctest::Contains("duplicate line"),
                         std::invalid_argument);
  }
  SUBCASE("missing parent") {
    buses[1].parent = 0;
    buses[2].parent = 7;
    std::vector<Line<double>> lines{{1, 0.01, 0.02}, {2, 0.01, 0.02}};
    CHECK_THROWS_WITH_AS(build_network(buses, lines), doctest::Contains("disconnected"),
                         std::invalid_argument);
  }
  SUBCASE("load bus with generation") {
    buses[1].parent = 0;
    buses[2].parent = 1;
    buses[1].p_g = 0.1;
    std::vector<Line<double>> lines{{1, 0.01, 0.02}, {2, 0.01, 0.02}};
    CHECK_THROWS_AS(build_network(buses, lines), std::invalid_argument);
  }
}

TEST_CASE("capability bound") {
  CHECK(capability_bound(1.0, 1.0) == doctest::Approx(0.0));
  // sqrt(1.21 - 1) and sqrt(1.69 - 1), frozen from the closed form.
  CHECK(capability_bound(1.1, 1.0) == doctest::Approx(0.45825756949558405).epsilon(1e-12));
  CHECK(capability_bound(1.3, 1.0) == doctest::Approx(0.8306623862918075).epsilon(1e-12));
  CHECK_THROWS_AS(capability_bound(0.9, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(capability_bound(1.0, 0.0), std::invalid_argument);
}

TEST_CASE("clamp_to_region") {
  auto net = testutil::make_two_bus(0.01, 0.02, 0.1, 0.05, 0.45);
  Vectord inside(1);
  inside << 0.2;
  CHECK(clamp_to_region(inside, net)[0] == 0.2);
  CHECK(clamp_to_region(clamp_to_region(inside, net), net)[0] == 0.2);

  Vectord big(1);
  big << 0.9;
  CHECK(clamp_to_region(big, net)[0] == doctest::Approx(0.45));

  Vectord wrong_len(2);
  wrong_len << 0.1, 0.2;
  CHECK_THROWS_WITH_AS(clamp_to_region(wrong_len, net), doctest::Contains("length mismatch"),
                       std::invalid_argument);
}

TEST_CASE("non-controllable entries are forced to zero") {
  std::vector<Bus<double>> buses(3);
  buses[0] = {0, -1, BusKind::substation, 0, 0, 0, 0, 0};
  buses[1] = {1, 0, BusKind::load, 0.1, 0.05, 0, 0, 0};
  buses[2] = {2, 1, BusKind::dg, 0.0, 0.0, 0.1, -0.3, 0.3};
  std::vector<Line<double>> lines{{1, 0.01, 0.02}, {2, 0.01, 0.02}};
  auto net = build_network(buses, lines);
  Vectord q(2);
  q << 0.1, 0.2;
  const auto out = clamp_to_region(q, net);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == doctest::Approx(0.2));
}

TEST_CASE("clamp is non-expansive in the Euclidean norm") {
  std::mt19937_64 rng(7);
  auto net = testutil::random_tree_network(rng, 12);
  for (int rep = 0; rep < 200; ++rep) {
    const Vectord a = testutil::random_vector(rng, net.num_lines(), -1.0, 1.0);
    const Vectord b = testutil::random_vector(rng, net.num_lines(), -1.0, 1.0);
    const double lhs = (clamp_to_region(a, net) - clamp_to_region(b, net)).norm();
    CHECK(lhs <= (a - b).norm() + 1e-14);
  }
}

TEST_CASE("leaf-to-root order visits children before parents, root last") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 30; ++rep) {
    auto net = testutil::random_tree_network(rng, 2 + static_cast<int>(rng() % 14));
    std::vector<int> position(static_cast<size_t>(net.num_buses()), -1);
    for (size_t i = 0; i < net.leaf_to_root.size(); ++i)
      position[static_cast<size_t>(net.leaf_to_root[i])] = static_cast<int>(i);
    CHECK(net.leaf_to_root.back() == 0);
    for (int n = 1; n < net.num_buses(); ++n)
      CHECK(position[static_cast<size_t>(n)] < position[static_cast<size_t>(net.parent_of(n))]);
  }
}

TEST_CASE("price schedule validation") {
  auto net = testutil::make_two_bus();
  const auto ps = uniform_price_schedule(net, 6.6);
  CHECK(ps.c_tilde[0] == doctest::Approx(0.0825));
  CHECK(ps.c[0] == doctest::Approx(1.0 / 80.0));

  Vectord bad(1);
  bad << -0.1;
  CHECK_THROWS_AS(make_price_schedule(net, 6.6, bad), std::invalid_argument);
  CHECK_THROWS_AS(make_price_schedule(net, 0.0, Vectord::Zero(1).eval()), std::invalid_argument);
}
