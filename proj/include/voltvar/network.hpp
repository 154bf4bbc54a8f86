#pragma once

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace voltvar {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vectord = Vector<double>;
using Matrixd = Matrix<double>;

// Default voltage limits: +/-5% on magnitude, stored as squared bounds.
inline constexpr double kDefaultVminSq = 0.9025;
inline constexpr double kDefaultVmaxSq = 1.1025;

enum class BusKind { substation, load, dg, shunt };

inline const char* to_string(BusKind k) {
  switch (k) {
    case BusKind::substation: return "substation";
    case BusKind::load: return "load";
    case BusKind::dg: return "dg";
    case BusKind::shunt: return "shunt";
  }
  return "unknown";
}

inline BusKind bus_kind_from_string(const std::string& s) {
  if (s == "substation") return BusKind::substation;
  if (s == "load") return BusKind::load;
  if (s == "dg") return BusKind::dg;
  if (s == "shunt") return BusKind::shunt;
  throw std::invalid_argument("unknown bus kind \"" + s + "\"");
}

/// One bus of a radial feeder. Bus 0 is the substation; every other bus is
/// fed through exactly one line from its parent.
template <typename Scalar>
struct Bus {
  int id{0};
  int parent{-1};  // -1 for the root only
  BusKind kind{BusKind::load};
  Scalar p_c{0};  // active demand (per-unit)
  Scalar q_c{0};  // reactive demand (per-unit)
  Scalar p_g{0};  // active generation (per-unit)
  Scalar q_g_min{0};
  Scalar q_g_max{0};  // reactive capability box; symmetric for controllable buses
};

/// Line n feeds bus n from its parent.
template <typename Scalar>
struct Line {
  int child{0};
  Scalar r{0};
  Scalar x{0};
};

/// Validated rooted tree plus the derived data every solver needs.
/// Treat as immutable after build_network: the derived fields are not kept
/// in sync under mutation.
template <typename Scalar>
struct RadialNetwork {
  std::vector<Bus<Scalar>> buses;   // buses[n].id == n
  std::vector<Line<Scalar>> lines;  // lines[n-1].child == n
  Scalar v0{1};                     // squared substation voltage
  Vector<Scalar> v_min, v_max;      // squared bounds per non-root bus
  Scalar base_kva{1000};

  // Derived on construction.
  std::vector<std::vector<int>> children;  // children[n], n in 0..N
  std::vector<int> leaf_to_root;           // all bus ids, children before parents, root last
  Vector<Scalar> r, x;                     // line impedances, entry n-1 for line n
  Vector<Scalar> q_lo, q_hi;               // reactive capability box, entry n-1 for bus n

  int num_buses() const { return static_cast<int>(buses.size()); }
  int num_lines() const { return static_cast<int>(lines.size()); }
  int parent_of(int n) const { return buses[n].parent; }
  bool controllable(int n) const { return q_hi[n - 1] > Scalar(0); }

  std::vector<int> controllable_buses() const {
    std::vector<int> out;
    for (int n = 1; n < num_buses(); ++n)
      if (controllable(n)) out.push_back(n);
    return out;
  }

  /// Net nominal active injection p_g - p_c per non-root bus.
  Vector<Scalar> nominal_p() const {
    Vector<Scalar> p(num_lines());
    for (int n = 1; n < num_buses(); ++n) p[n - 1] = buses[n].p_g - buses[n].p_c;
    return p;
  }

  /// Reactive demand q_c per non-root bus.
  Vector<Scalar> nominal_qc() const {
    Vector<Scalar> q(num_lines());
    for (int n = 1; n < num_buses(); ++n) q[n - 1] = buses[n].q_c;
    return q;
  }
};

using RadialNetworkd = RadialNetwork<double>;

namespace detail {

template <typename Scalar>
void check_bus_invariants(const Bus<Scalar>& b) {
  const std::string who = "bus " + std::to_string(b.id);
  if (b.p_c < Scalar(0) || b.q_c < Scalar(0))
    throw std::invalid_argument(who + ": negative demand");
  if (b.p_g < Scalar(0)) throw std::invalid_argument(who + ": negative generation");
  if (b.kind == BusKind::load && (b.p_g != Scalar(0) || b.q_g_min != Scalar(0) || b.q_g_max != Scalar(0)))
    throw std::invalid_argument(who + ": load bus with generation or reactive capability");
  if (b.q_g_max < Scalar(0))
    throw std::invalid_argument(who + ": negative reactive capability bound");
  if (b.q_g_min != -b.q_g_max)
    throw std::invalid_argument(who + ": reactive capability box must be symmetric (q_g_min = -q_g_max)");
}

}  // namespace detail

/// Builds and validates a radial network. Throws std::invalid_argument with
/// a diagnostic naming the offending bus or line.
template <typename Scalar>
RadialNetwork<Scalar> build_network(std::vector<Bus<Scalar>> buses, std::vector<Line<Scalar>> lines,
                                    Scalar v0 = Scalar(1), Vector<Scalar> v_min = Vector<Scalar>(),
                                    Vector<Scalar> v_max = Vector<Scalar>(), Scalar base_kva = Scalar(1000)) {
  if (buses.empty()) throw std::invalid_argument("network needs at least the substation bus");
  const int nb = static_cast<int>(buses.size());
  const int N = nb - 1;

  for (int n = 0; n < nb; ++n) {
    if (buses[n].id != n)
      throw std::invalid_argument("bus ids must be contiguous and equal to their position; got id " +
                                  std::to_string(buses[n].id) + " at position " + std::to_string(n));
  }
  if (buses[0].parent != -1) throw std::invalid_argument("bus 0: root must have no parent");
  if (buses[0].kind != BusKind::substation)
    throw std::invalid_argument("bus 0: root must be a substation");
  for (int n = 1; n < nb; ++n) {
    const int pi = buses[n].parent;
    if (pi < 0 || pi >= nb)
      throw std::invalid_argument("disconnected bus " + std::to_string(n) + ": parent " +
                                  std::to_string(pi) + " does not exist");
    if (pi == n) throw std::invalid_argument("cycle detected at bus " + std::to_string(n) + " (self parent)");
  }
  for (const auto& b : buses) detail::check_bus_invariants(b);

  if (static_cast<int>(lines.size()) != N)
    throw std::invalid_argument("expected exactly one line per non-root bus (" + std::to_string(N) +
                                "), got " + std::to_string(lines.size()));
  std::vector<int> line_of(nb, -1);
  for (int i = 0; i < N; ++i) {
    const int c = lines[i].child;
    if (c < 1 || c >= nb)
      throw std::invalid_argument("line " + std::to_string(i) + ": child bus " + std::to_string(c) +
                                  " does not exist");
    if (line_of[c] != -1) throw std::invalid_argument("duplicate line feeding bus " + std::to_string(c));
    line_of[c] = i;
    if (!(lines[i].r > Scalar(0)))
      throw std::invalid_argument("nonpositive resistance on line feeding bus " + std::to_string(c));
  }

  RadialNetwork<Scalar> net;
  net.buses = std::move(buses);
  // Store lines in child order: lines[n-1] feeds bus n.
  net.lines.resize(N);
  for (int n = 1; n < nb; ++n) net.lines[n - 1] = lines[line_of[n]];
  net.v0 = v0;
  if (!(v0 > Scalar(0))) throw std::invalid_argument("root voltage v0 must be positive");
  net.base_kva = base_kva;

  net.v_min = v_min.size() ? v_min : Vector<Scalar>::Constant(N, Scalar(kDefaultVminSq));
  net.v_max = v_max.size() ? v_max : Vector<Scalar>::Constant(N, Scalar(kDefaultVmaxSq));
  if (net.v_min.size() != N || net.v_max.size() != N)
    throw std::invalid_argument("voltage limit vectors must have one entry per non-root bus");
  for (int n = 1; n <= N; ++n) {
    if (!(Scalar(0) < net.v_min[n - 1] && net.v_min[n - 1] < net.v_max[n - 1]))
      throw std::invalid_argument("bus " + std::to_string(n) + ": voltage limits need 0 < v_min < v_max");
  }

  // Children sets and reachability from the root.
  net.children.assign(nb, {});
  for (int n = 1; n < nb; ++n) net.children[net.buses[n].parent].push_back(n);

  std::vector<char> seen(nb, 0);
  std::vector<int> order;  // root-to-leaf pre-order
  order.reserve(nb);
  std::vector<int> stack{0};
  seen[0] = 1;
  while (!stack.empty()) {
    const int n = stack.back();
    stack.pop_back();
    order.push_back(n);
    // Push children in reverse so they pop in ascending id order.
    for (auto it = net.children[n].rbegin(); it != net.children[n].rend(); ++it) {
      seen[*it] = 1;
      stack.push_back(*it);
    }
  }
  if (static_cast<int>(order.size()) != nb) {
    for (int n = 1; n < nb; ++n)
      if (!seen[n]) throw std::invalid_argument("cycle detected: bus " + std::to_string(n) +
                                                " is not reachable from the substation");
  }
  net.leaf_to_root.assign(order.rbegin(), order.rend());

  net.r.resize(N);
  net.x.resize(N);
  net.q_lo.resize(N);
  net.q_hi.resize(N);
  for (int n = 1; n <= N; ++n) {
    net.r[n - 1] = net.lines[n - 1].r;
    net.x[n - 1] = net.lines[n - 1].x;
    net.q_lo[n - 1] = net.buses[n].q_g_min;
    net.q_hi[n - 1] = net.buses[n].q_g_max;
  }
  return net;
}

/// Time-invariant reactive half-width of an inverter with apparent capacity s
/// backing a panel of nameplate capacity p_bar: sqrt(s^2 - p_bar^2).
template <typename Scalar>
Scalar capability_bound(Scalar s, Scalar p_bar) {
  using std::sqrt;
  if (!(p_bar > Scalar(0))) throw std::invalid_argument("capability_bound: nameplate capacity must be positive");
  if (s < p_bar)
    throw std::invalid_argument("capability_bound: inverter capacity below nameplate capacity");
  return sqrt(s * s - p_bar * p_bar);
}

/// Entrywise projection onto the reactive injection box; non-controllable
/// buses carry a [0, 0] box and are forced to zero.
template <typename Scalar>
Vector<Scalar> clamp_to_region(const Vector<Scalar>& q_g, const RadialNetwork<Scalar>& net) {
  if (q_g.size() != net.num_lines())
    throw std::invalid_argument("clamp_to_region: length mismatch (expected " +
                                std::to_string(net.num_lines()) + ", got " + std::to_string(q_g.size()) + ")");
  return q_g.cwiseMax(net.q_lo).cwiseMin(net.q_hi);
}

/// Loss and reactive-support prices. c holds the normalized prices
/// c_tilde / c0_tilde used by the optimization; the tilded values convert
/// per-unit results back to currency.
template <typename Scalar>
struct PriceSchedule {
  Scalar c0_tilde{Scalar(6.6)};  // currency per kWh
  Vector<Scalar> c_tilde;        // currency per kVar-hour, length N
  Vector<Scalar> c;              // normalized, length N
};

using PriceScheduled = PriceSchedule<double>;

template <typename Scalar>
PriceSchedule<Scalar> make_price_schedule(const RadialNetwork<Scalar>& net, Scalar c0_tilde,
                                          const Vector<Scalar>& c_tilde) {
  if (!(c0_tilde > Scalar(0))) throw std::invalid_argument("loss price c0 must be positive");
  if (c_tilde.size() != net.num_lines())
    throw std::invalid_argument("price vector must have one entry per non-root bus");
  for (int n = 1; n <= net.num_lines(); ++n) {
    if (c_tilde[n - 1] < Scalar(0))
      throw std::invalid_argument("bus " + std::to_string(n) + ": negative reactive support price");
    if (!net.controllable(n) && c_tilde[n - 1] != Scalar(0))
      throw std::invalid_argument("bus " + std::to_string(n) +
                                  ": reactive support price on a non-controllable bus");
  }
  PriceSchedule<Scalar> ps;
  ps.c0_tilde = c0_tilde;
  ps.c_tilde = c_tilde;
  ps.c = c_tilde / c0_tilde;
  return ps;
}

/// Uniform support price on all controllable buses, as a fraction of the
/// loss price (default 1/80).
template <typename Scalar>
PriceSchedule<Scalar> uniform_price_schedule(const RadialNetwork<Scalar>& net, Scalar c0_tilde = Scalar(6.6),
                                             Scalar support_ratio = Scalar(1) / Scalar(80)) {
  Vector<Scalar> ct = Vector<Scalar>::Zero(net.num_lines());
  for (int n : net.controllable_buses()) ct[n - 1] = c0_tilde * support_ratio;
  return make_price_schedule(net, c0_tilde, ct);
}

}  // namespace voltvar
