#pragma once

#include <Eigen/Core>

#include <limits>
#include <stdexcept>
#include <string>

#include "voltvar/network.hpp"

namespace voltvar {

/// A full grid state in branch-flow variables: root injections, sending-end
/// line flows, squared line currents and squared bus voltages.
template <typename Scalar>
struct OperatingPoint {
  Scalar p0{0}, q0{0};
  Vector<Scalar> P, Q;    // sending-end flows, length N
  Vector<Scalar> ell;     // squared current magnitudes, length N
  Vector<Scalar> v;       // squared voltage magnitudes, length N

  static OperatingPoint flat(const RadialNetwork<Scalar>& net) {
    OperatingPoint pt;
    const int N = net.num_lines();
    pt.P = Vector<Scalar>::Zero(N);
    pt.Q = Vector<Scalar>::Zero(N);
    pt.ell = Vector<Scalar>::Zero(N);
    pt.v = Vector<Scalar>::Constant(N, net.v0);
    return pt;
  }
};

using OperatingPointd = OperatingPoint<double>;

/// Max absolute residuals of the branch-flow equations at a point, one entry
/// per equation family, plus the voltage-box violation. Pure diagnostic.
template <typename Scalar>
struct ResidualReport {
  Scalar power_p{0};      // active power balance per line
  Scalar power_q{0};      // reactive power balance per line
  Scalar voltage{0};      // voltage drop recursion
  Scalar current{0};      // squared-current definition
  Scalar voltage_box{0};  // distance to [v_min, v_max], 0 if inside

  Scalar max_equation() const {
    using std::max;
    return max(max(power_p, power_q), max(voltage, current));
  }
};

using ResidualReportd = ResidualReport<double>;

class SweepNonConvergence : public std::runtime_error {
 public:
  SweepNonConvergence(const std::string& msg, double last_delta, double current_residual)
      : std::runtime_error(msg), last_delta(last_delta), current_residual(current_residual) {}
  double last_delta;
  double current_residual;
};

template <typename Scalar>
ResidualReport<Scalar> residual_check(const RadialNetwork<Scalar>& net, const Vector<Scalar>& p,
                                      const Vector<Scalar>& q, const OperatingPoint<Scalar>& pt) {
  using std::abs;
  const int N = net.num_lines();
  if (p.size() != N || q.size() != N || pt.P.size() != N || pt.Q.size() != N || pt.ell.size() != N ||
      pt.v.size() != N)
    throw std::invalid_argument("residual_check: all vectors must have one entry per non-root bus");

  ResidualReport<Scalar> rep;
  for (int n = 1; n <= N; ++n) {
    Scalar sumP{0}, sumQ{0};
    for (int k : net.children[n]) {
      sumP += pt.P[k - 1];
      sumQ += pt.Q[k - 1];
    }
    const Scalar rn = net.r[n - 1], xn = net.x[n - 1];
    rep.power_p = std::max(rep.power_p, abs(sumP - (pt.P[n - 1] - rn * pt.ell[n - 1]) - p[n - 1]));
    rep.power_q = std::max(rep.power_q, abs(sumQ - (pt.Q[n - 1] - xn * pt.ell[n - 1]) - q[n - 1]));

    const int pi = net.parent_of(n);
    const Scalar v_up = pi == 0 ? net.v0 : pt.v[pi - 1];
    rep.voltage = std::max(
        rep.voltage, abs(v_up + (rn * rn + xn * xn) * pt.ell[n - 1] -
                         Scalar(2) * (rn * pt.P[n - 1] + xn * pt.Q[n - 1]) - pt.v[n - 1]));
    if (v_up > Scalar(0)) {
      rep.current = std::max(
          rep.current, abs(pt.ell[n - 1] - (pt.P[n - 1] * pt.P[n - 1] + pt.Q[n - 1] * pt.Q[n - 1]) / v_up));
    } else {
      rep.current = std::numeric_limits<Scalar>::infinity();
    }
    rep.voltage_box = std::max(rep.voltage_box,
                               std::max(Scalar(0), std::max(net.v_min[n - 1] - pt.v[n - 1],
                                                            pt.v[n - 1] - net.v_max[n - 1])));
  }
  // Root balances.
  Scalar sumP0{0}, sumQ0{0};
  for (int k : net.children[0]) {
    sumP0 += pt.P[k - 1];
    sumQ0 += pt.Q[k - 1];
  }
  rep.power_p = std::max(rep.power_p, abs(pt.p0 - sumP0));
  rep.power_q = std::max(rep.power_q, abs(pt.q0 - sumQ0));
  return rep;
}

namespace detail {

// Backward pass: P_n = sum of child flows + r_n*ell_n - p_n, and likewise for Q.
template <typename Scalar>
void sweep_flows(const RadialNetwork<Scalar>& net, const Vector<Scalar>& p, const Vector<Scalar>& q,
                 const Vector<Scalar>& ell, OperatingPoint<Scalar>& pt) {
  const int N = net.num_lines();
  pt.P = net.r.cwiseProduct(ell) - p;
  pt.Q = net.x.cwiseProduct(ell) - q;
  for (int n : net.leaf_to_root) {
    if (n == 0) continue;
    const int pi = net.parent_of(n);
    if (pi != 0) {
      pt.P[pi - 1] += pt.P[n - 1];
      pt.Q[pi - 1] += pt.Q[n - 1];
    }
  }
  pt.p0 = pt.q0 = Scalar(0);
  for (int k : net.children[0]) {
    pt.p0 += pt.P[k - 1];
    pt.q0 += pt.Q[k - 1];
  }
  // Forward pass: voltages from the root down.
  pt.v.resize(N);
  for (auto it = net.leaf_to_root.rbegin(); it != net.leaf_to_root.rend(); ++it) {
    const int n = *it;
    if (n == 0) continue;
    const int pi = net.parent_of(n);
    const Scalar v_up = pi == 0 ? net.v0 : pt.v[pi - 1];
    const Scalar rn = net.r[n - 1], xn = net.x[n - 1];
    pt.v[n - 1] =
        v_up + (rn * rn + xn * xn) * ell[n - 1] - Scalar(2) * (rn * pt.P[n - 1] + xn * pt.Q[n - 1]);
  }
}

}  // namespace detail

/// Fixed-point backward/forward sweep solver for the branch-flow equations.
/// Voltage limits are reported by residual_check but never enforced here.
template <typename Scalar>
OperatingPoint<Scalar> sweep_solve(const RadialNetwork<Scalar>& net, const Vector<Scalar>& p,
                                   const Vector<Scalar>& q, Scalar tol = Scalar(1e-10),
                                   int max_iter = 200) {
  const int N = net.num_lines();
  if (p.size() != N || q.size() != N)
    throw std::invalid_argument("sweep_solve: injection vectors must have one entry per non-root bus");
  if (!(tol > Scalar(0))) throw std::invalid_argument("sweep_solve: tol must be positive");
  if (!p.allFinite() || !q.allFinite())
    throw std::invalid_argument("sweep_solve: injections must be finite");

  OperatingPoint<Scalar> pt;
  Vector<Scalar> ell = Vector<Scalar>::Zero(N);
  Scalar delta = std::numeric_limits<Scalar>::infinity();
  for (int it = 0; it < max_iter; ++it) {
    detail::sweep_flows(net, p, q, ell, pt);
    Vector<Scalar> ell_next(N);
    for (int n = 1; n <= N; ++n) {
      const int pi = net.parent_of(n);
      const Scalar v_up = pi == 0 ? net.v0 : pt.v[pi - 1];
      if (!(v_up > Scalar(0)))
        throw SweepNonConvergence("sweep_solve: voltage collapsed at bus " + std::to_string(pi),
                                  static_cast<double>(delta), std::numeric_limits<double>::infinity());
      ell_next[n - 1] = (pt.P[n - 1] * pt.P[n - 1] + pt.Q[n - 1] * pt.Q[n - 1]) / v_up;
    }
    delta = (ell_next - ell).cwiseAbs().maxCoeff();
    ell = ell_next;
    if (delta <= tol) {
      detail::sweep_flows(net, p, q, ell, pt);
      pt.ell = ell;
      return pt;
    }
  }
  detail::sweep_flows(net, p, q, ell, pt);
  pt.ell = ell;
  const auto rep = residual_check(net, p, q, pt);
  throw SweepNonConvergence("sweep_solve: no convergence after " + std::to_string(max_iter) +
                                " iterations (last delta " + std::to_string(static_cast<double>(delta)) + ")",
                            static_cast<double>(delta), static_cast<double>(rep.max_equation()));
}

/// Total line loss sum r_n * ell_n of a point.
template <typename Scalar>
Scalar power_loss(const RadialNetwork<Scalar>& net, const OperatingPoint<Scalar>& pt) {
  if (pt.ell.size() != net.num_lines())
    throw std::invalid_argument("power_loss: point does not match network size");
  return net.r.dot(pt.ell);
}

}  // namespace voltvar
