#pragma once

#include <random>
#include <string>
#include <vector>

#include "voltvar/branchflow.hpp"
#include "voltvar/network.hpp"

namespace testutil {

using namespace voltvar;

inline std::string data_path(const std::string& name) {
#ifdef VOLTVAR_DATA_DIR
  return std::string(VOLTVAR_DATA_DIR) + "/" + name;
#else
  return "data/" + name;
#endif
}

/// Two-bus feeder: substation plus one controllable DG/load bus.
inline RadialNetworkd make_two_bus(double r = 0.01, double x = 0.02, double p_c = 0.1, double q_c = 0.05,
                                   double q_cap = 0.45, double v_lo = 0.5, double v_hi = 1.8) {
  std::vector<Bus<double>> buses(2);
  buses[0].id = 0;
  buses[0].parent = -1;
  buses[0].kind = BusKind::substation;
  buses[1].id = 1;
  buses[1].parent = 0;
  buses[1].kind = BusKind::dg;
  buses[1].p_c = p_c;
  buses[1].q_c = q_c;
  buses[1].q_g_max = q_cap;
  buses[1].q_g_min = -q_cap;
  std::vector<Line<double>> lines{{1, r, x}};
  Vectord vmin = Vectord::Constant(1, v_lo);
  Vectord vmax = Vectord::Constant(1, v_hi);
  return build_network(std::move(buses), std::move(lines), 1.0, vmin, vmax, 1000.0);
}

/// Random recursive tree with light impedances; parent of bus n is uniform
/// over 0..n-1, so ids are contiguous by construction.
inline RadialNetworkd random_tree_network(std::mt19937_64& rng, int n_bus, double cap_fraction = 0.3) {
  std::uniform_real_distribution<double> ur(0.004, 0.02);
  std::uniform_real_distribution<double> ux(0.008, 0.03);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<Bus<double>> buses(static_cast<size_t>(n_bus + 1));
  buses[0].id = 0;
  buses[0].parent = -1;
  buses[0].kind = BusKind::substation;
  std::vector<Line<double>> lines;
  for (int n = 1; n <= n_bus; ++n) {
    auto& b = buses[static_cast<size_t>(n)];
    b.id = n;
    b.parent = n == 1 ? 0 : static_cast<int>(u01(rng) * n);  // in [0, n-1]
    if (b.parent >= n) b.parent = n - 1;
    const bool dg = u01(rng) < cap_fraction;
    b.kind = dg ? BusKind::dg : BusKind::load;
    b.p_c = 0.02 * u01(rng);
    b.q_c = 0.015 * u01(rng);
    if (dg) {
      b.p_g = 0.03 * u01(rng);
      b.q_g_max = 0.02 + 0.03 * u01(rng);
      b.q_g_min = -b.q_g_max;
    }
    lines.push_back({n, ur(rng), ux(rng)});
  }
  Vectord vmin = Vectord::Constant(n_bus, 0.64);
  Vectord vmax = Vectord::Constant(n_bus, 1.44);
  return build_network(std::move(buses), std::move(lines), 1.0, vmin, vmax, 1000.0);
}

inline Vectord random_vector(std::mt19937_64& rng, int n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vectord v(n);
  for (int i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

/// Grid search oracle for the scalar problem
/// min (1/2)(q - y)^2 + b |q| over [lo, hi].
inline double brute_force_prox(double y, double b, double lo, double hi, double step = 1e-5) {
  double best_q = lo;
  double best_f = 0.5 * (lo - y) * (lo - y) + b * std::abs(lo);
  const long n = static_cast<long>((hi - lo) / step);
  for (long i = 1; i <= n; ++i) {
    const double q = lo + static_cast<double>(i) * step;
    const double f = 0.5 * (q - y) * (q - y) + b * std::abs(q);
    if (f < best_f) {
      best_f = f;
      best_q = q;
    }
  }
  const double f_hi = 0.5 * (hi - y) * (hi - y) + b * std::abs(hi);
  if (f_hi < best_f) best_q = hi;
  return best_q;
}

}  // namespace testutil
