#pragma once

#include <Eigen/Core>

#include <limits>
#include <stdexcept>
#include <vector>

#include "voltvar/branchflow.hpp"
#include "voltvar/conic.hpp"
#include "voltvar/network.hpp"

namespace voltvar {

/// Affine maps expressing (P, v, q) as functions of z = [Q; ell] for a fixed
/// network, plus the per-line second-order-cone parameters. The offsets that
/// depend on the active injections are exposed as builders b_p(p), b_v(p);
/// the root voltage constant is folded into the voltage offsets.
template <typename Scalar>
struct AffineMaps {
  int n_bus{0};               // N (non-root buses)
  Matrix<Scalar> A_p, A_v, A_q;  // N x 2N
  Matrix<Scalar> S;           // subtree indicator: S(n-1,k-1) = 1 iff k in subtree(n)
  Matrix<Scalar> B_vp;        // p-dependent part of the voltage offset
  Vector<Scalar> b_v0;        // constant part of the voltage offset (v0 terms)
  Vector<Scalar> r_z;         // cost vector [0; r]
  std::vector<Matrix<Scalar>> A_soc;  // 3 x 2N per line
  Matrix<Scalar> C_soc;       // N x 2N, row n-1 = c_n'
  Scalar v0{1};
  std::vector<int> parent;    // parent[n-1] for line n

  Vector<Scalar> b_p(const Vector<Scalar>& p) const { return -S * p; }
  Vector<Scalar> b_v(const Vector<Scalar>& p) const { return b_v0 + B_vp * p; }

  Eigen::Matrix<Scalar, 3, 1> b_soc(const Vector<Scalar>& bp, const Vector<Scalar>& bv, int line) const {
    Eigen::Matrix<Scalar, 3, 1> f;
    f[0] = Scalar(2) * bp[line - 1];
    f[1] = Scalar(0);
    const int pi = parent[line - 1];
    f[2] = pi == 0 ? v0 : bv[pi - 1];
    return f;
  }
  Scalar d_soc(const Vector<Scalar>& bv, int line) const {
    const int pi = parent[line - 1];
    return pi == 0 ? v0 : bv[pi - 1];
  }
};

using AffineMapsd = AffineMaps<double>;

template <typename Scalar>
AffineMaps<Scalar> build_maps(const RadialNetwork<Scalar>& net) {
  const int N = net.num_lines();
  AffineMaps<Scalar> M;
  M.n_bus = N;
  M.v0 = net.v0;
  M.parent.resize(N);
  for (int n = 1; n <= N; ++n) M.parent[n - 1] = net.parent_of(n);

  // Subtree indicator, built children-first.
  M.S = Matrix<Scalar>::Zero(N, N);
  for (int n : net.leaf_to_root) {
    if (n == 0) continue;
    M.S(n - 1, n - 1) = Scalar(1);
    for (int kid : net.children[n]) M.S.row(n - 1) += M.S.row(kid - 1);
  }
  // Path indicator (lines on the root-to-bus path, inclusive), built top-down.
  Matrix<Scalar> U = Matrix<Scalar>::Zero(N, N);
  for (auto it = net.leaf_to_root.rbegin(); it != net.leaf_to_root.rend(); ++it) {
    const int n = *it;
    if (n == 0) continue;
    const int pi = net.parent_of(n);
    if (pi != 0) U.row(n - 1) = U.row(pi - 1);
    U(n - 1, n - 1) = Scalar(1);
  }

  M.A_p = Matrix<Scalar>::Zero(N, 2 * N);
  M.A_p.rightCols(N) = M.S * net.r.asDiagonal();

  M.A_q = Matrix<Scalar>::Zero(N, 2 * N);
  for (int n = 1; n <= N; ++n) {
    M.A_q(n - 1, n - 1) = Scalar(-1);
    for (int kid : net.children[n]) M.A_q(n - 1, kid - 1) = Scalar(1);
    M.A_q(n - 1, N + n - 1) = net.x[n - 1];
  }

  M.A_v = Matrix<Scalar>::Zero(N, 2 * N);
  M.A_v.leftCols(N) = Scalar(-2) * U * net.x.asDiagonal();
  const Vector<Scalar> z2 = net.r.cwiseProduct(net.r) + net.x.cwiseProduct(net.x);
  M.A_v.rightCols(N) = U * z2.asDiagonal() - Scalar(2) * (U * net.r.asDiagonal()) * M.A_p.rightCols(N);

  M.b_v0 = Vector<Scalar>::Constant(N, net.v0);
  M.B_vp = Scalar(2) * (U * net.r.asDiagonal()) * M.S;

  M.r_z = Vector<Scalar>::Zero(2 * N);
  M.r_z.tail(N) = net.r;

  M.A_soc.resize(static_cast<size_t>(N));
  M.C_soc = Matrix<Scalar>::Zero(N, 2 * N);
  for (int n = 1; n <= N; ++n) {
    Matrix<Scalar> An = Matrix<Scalar>::Zero(3, 2 * N);
    An.row(0) = Scalar(2) * M.A_p.row(n - 1);
    An(1, n - 1) = Scalar(2);
    const int pi = net.parent_of(n);
    Vector<Scalar> row_v = pi == 0 ? Vector<Scalar>(Vector<Scalar>::Zero(2 * N))
                                   : Vector<Scalar>(M.A_v.row(pi - 1).transpose());
    An.row(2) = row_v.transpose();
    An(2, N + n - 1) -= Scalar(1);
    M.A_soc[static_cast<size_t>(n - 1)] = An;
    M.C_soc.row(n - 1) = row_v.transpose();
    M.C_soc(n - 1, N + n - 1) += Scalar(1);
  }
  return M;
}

/// Rebuilds (P, v, Q, ell) and the root flows from z and the injections.
template <typename Scalar>
OperatingPoint<Scalar> reconstruct_point(const AffineMaps<Scalar>& maps, const RadialNetwork<Scalar>& net,
                                         const Vector<Scalar>& p, const Vector<Scalar>& z) {
  const int N = maps.n_bus;
  OperatingPoint<Scalar> pt;
  pt.Q = z.head(N);
  pt.ell = z.tail(N);
  pt.P = maps.A_p * z + maps.b_p(p);
  pt.v = maps.A_v * z + maps.b_v(p);
  pt.p0 = pt.q0 = Scalar(0);
  for (int kid : net.children[0]) {
    pt.p0 += pt.P[kid - 1];
    pt.q0 += pt.Q[kid - 1];
  }
  return pt;
}

/// Loss-minimization instance at fixed injections (the relaxed problem in
/// reduced variables z = [Q; ell]).
template <typename Scalar>
ConicProblem<Scalar> assemble_loss_socp(const AffineMaps<Scalar>& maps, const RadialNetwork<Scalar>& net,
                                        const Vector<Scalar>& p, const Vector<Scalar>& q) {
  const int N = maps.n_bus;
  if (p.size() != N || q.size() != N)
    throw std::invalid_argument("assemble_loss_socp: injection vectors must have length N");
  ConicProblem<Scalar> P;
  P.cost = maps.r_z;
  P.E = maps.A_q;
  P.e = q;
  P.box.G = maps.A_v;
  P.box.offset = maps.b_v(p);
  P.box.lo = net.v_min;
  P.box.hi = net.v_max;
  const Vector<Scalar> bp = maps.b_p(p);
  const Vector<Scalar> bv = maps.b_v(p);
  P.cones.resize(static_cast<size_t>(N));
  for (int n = 1; n <= N; ++n) {
    auto& c = P.cones[static_cast<size_t>(n - 1)];
    c.F = maps.A_soc[static_cast<size_t>(n - 1)];
    c.f = maps.b_soc(bp, bv, n);
    c.h = maps.C_soc.row(n - 1).transpose();
    c.s = maps.d_soc(bv, n);
  }
  return P;
}

enum class PrimalStatus { optimal, infeasible, solver_failure };

inline const char* to_string(PrimalStatus s) {
  switch (s) {
    case PrimalStatus::optimal: return "optimal";
    case PrimalStatus::infeasible: return "infeasible";
    case PrimalStatus::solver_failure: return "solver_failure";
  }
  return "unknown";
}

template <typename Scalar>
struct PrimalSolution {
  PrimalStatus status{PrimalStatus::solver_failure};
  Scalar value{std::numeric_limits<Scalar>::quiet_NaN()};
  Vector<Scalar> z;
  OperatingPoint<Scalar> point;
  DualSolution<Scalar> dual;
  IpmResult<Scalar> raw;
};

using PrimalSolutiond = PrimalSolution<double>;

/// Minimizes the line loss over the relaxed feasible set at fixed injections.
/// Returns the optimum, the reconstructed operating point and the duals.
template <typename Scalar>
PrimalSolution<Scalar> solve_primal(const AffineMaps<Scalar>& maps, const RadialNetwork<Scalar>& net,
                                    const Vector<Scalar>& p, const Vector<Scalar>& q,
                                    const IpmOptions<Scalar>& opt = {}) {
  PrimalSolution<Scalar> sol;
  const auto problem = assemble_loss_socp(maps, net, p, q);
  sol.raw = ipm_solve(problem, opt);
  switch (sol.raw.status) {
    case SolveStatus::optimal:
      sol.status = PrimalStatus::optimal;
      sol.value = sol.raw.primal_value;
      sol.z = sol.raw.z;
      sol.point = reconstruct_point(maps, net, p, sol.z);
      sol.dual = sol.raw.dual;
      break;
    case SolveStatus::infeasible:
      sol.status = PrimalStatus::infeasible;
      break;
    default:
      // The loss cost is bounded below by zero, so an unboundedness
      // certificate can only be a solver artifact.
      sol.status = PrimalStatus::solver_failure;
      break;
  }
  return sol;
}

/// Per-line relaxation gaps ell_n - (P_n^2 + Q_n^2)/v_parent and the dual
/// sufficient condition mu_n > 0, reported independently.
template <typename Scalar>
struct ExactnessReport {
  Vector<Scalar> gaps;
  Vector<Scalar> mu;
  Scalar max_gap{0};
  Scalar min_mu{0};
  bool exact_by_gap{false};
  bool mu_all_positive{false};
  Scalar tol_cone{0}, tol_mu{0};
};

using ExactnessReportd = ExactnessReport<double>;

template <typename Scalar>
ExactnessReport<Scalar> exactness_certificate(const AffineMaps<Scalar>& maps, const RadialNetwork<Scalar>& net,
                                              const Vector<Scalar>& p, const Vector<Scalar>& z,
                                              const DualSolution<Scalar>& dual,
                                              Scalar tol_cone = Scalar(1e-6), Scalar tol_mu = Scalar(1e-7)) {
  const int N = maps.n_bus;
  const auto pt = reconstruct_point(maps, net, p, z);
  ExactnessReport<Scalar> rep;
  rep.tol_cone = tol_cone;
  rep.tol_mu = tol_mu;
  rep.gaps.resize(N);
  for (int n = 1; n <= N; ++n) {
    const int pi = net.parent_of(n);
    const Scalar v_up = pi == 0 ? net.v0 : pt.v[pi - 1];
    rep.gaps[n - 1] = pt.ell[n - 1] - (pt.P[n - 1] * pt.P[n - 1] + pt.Q[n - 1] * pt.Q[n - 1]) / v_up;
  }
  rep.mu = dual.mu;
  rep.max_gap = rep.gaps.maxCoeff();
  rep.min_mu = dual.mu.size() ? dual.mu.minCoeff() : Scalar(0);
  rep.exact_by_gap = rep.max_gap <= tol_cone;
  rep.mu_all_positive = dual.mu.size() ? (rep.min_mu >= tol_mu) : false;
  return rep;
}

enum class ProbeMode { maximize_loss, max_min_slack };

template <typename Scalar>
struct ProbeReport {
  PrimalStatus status{PrimalStatus::solver_failure};
  Scalar margin{std::numeric_limits<Scalar>::quiet_NaN()};
  Vector<Scalar> slacks;
};

/// Certifies strict cone feasibility at the given injections, either by
/// maximizing the loss cost and evaluating the cone slacks at the maximizer,
/// or by maximizing the minimum cone slack directly.
template <typename Scalar>
ProbeReport<Scalar> strict_feasibility_probe(const AffineMaps<Scalar>& maps, const RadialNetwork<Scalar>& net,
                                             const Vector<Scalar>& p, const Vector<Scalar>& q,
                                             const IpmOptions<Scalar>& opt = {},
                                             ProbeMode mode = ProbeMode::maximize_loss) {
  const int N = maps.n_bus;
  ProbeReport<Scalar> rep;
  auto slacks_at = [&](const Vector<Scalar>& z) {
    const Vector<Scalar> bp = maps.b_p(p);
    const Vector<Scalar> bv = maps.b_v(p);
    Vector<Scalar> sl(N);
    for (int n = 1; n <= N; ++n) {
      const auto& A = maps.A_soc[static_cast<size_t>(n - 1)];
      const Eigen::Matrix<Scalar, 3, 1> w = A * z + maps.b_soc(bp, bv, n);
      sl[n - 1] = maps.C_soc.row(n - 1).dot(z) + maps.d_soc(bv, n) - w.norm();
    }
    return sl;
  };

  if (mode == ProbeMode::maximize_loss) {
    auto problem = assemble_loss_socp(maps, net, p, q);
    problem.cost = -problem.cost;
    const auto res = ipm_solve(problem, opt);
    if (res.status == SolveStatus::optimal) {
      rep.status = PrimalStatus::optimal;
      rep.slacks = slacks_at(res.z);
      rep.margin = rep.slacks.minCoeff();
    } else {
      rep.status = res.status == SolveStatus::infeasible ? PrimalStatus::infeasible
                                                         : PrimalStatus::solver_failure;
    }
    return rep;
  }

  // max t subject to the loss-problem constraints with every cone slack >= t.
  const auto base = assemble_loss_socp(maps, net, p, q);
  const int m = 2 * N + 1;
  ConicProblem<Scalar> P;
  P.cost = Vector<Scalar>::Zero(m);
  P.cost[2 * N] = Scalar(-1);
  P.E = Matrix<Scalar>::Zero(N, m);
  P.E.leftCols(2 * N) = base.E;
  P.e = base.e;
  P.box.G = Matrix<Scalar>::Zero(N + 1, m);
  P.box.G.topLeftCorner(N, 2 * N) = base.box.G;
  P.box.G(N, 2 * N) = Scalar(1);
  P.box.offset = Vector<Scalar>::Zero(N + 1);
  P.box.offset.head(N) = base.box.offset;
  P.box.lo = Vector<Scalar>::Zero(N + 1);
  P.box.lo.head(N) = base.box.lo;
  P.box.lo[N] = Scalar(-10);
  P.box.hi = Vector<Scalar>::Zero(N + 1);
  P.box.hi.head(N) = base.box.hi;
  P.box.hi[N] = Scalar(10);
  P.cones.resize(static_cast<size_t>(N));
  for (int n = 1; n <= N; ++n) {
    auto& c = P.cones[static_cast<size_t>(n - 1)];
    const auto& b = base.cones[static_cast<size_t>(n - 1)];
    c.F = Matrix<Scalar>::Zero(3, m);
    c.F.leftCols(2 * N) = b.F;
    c.f = b.f;
    c.h = Vector<Scalar>::Zero(m);
    c.h.head(2 * N) = b.h;
    c.h[2 * N] = Scalar(-1);
    c.s = b.s;
  }
  const auto res = ipm_solve(P, opt);
  if (res.status == SolveStatus::optimal) {
    rep.status = PrimalStatus::optimal;
    rep.slacks = slacks_at(res.z.head(2 * N));
    rep.margin = res.z[2 * N];
  } else {
    rep.status =
        res.status == SolveStatus::infeasible ? PrimalStatus::infeasible : PrimalStatus::solver_failure;
  }
  return rep;
}

template <typename Scalar>
struct DualSocpSolution {
  SolveStatus status{SolveStatus::numerical_failure};
  Vector<Scalar> lambda;
  Scalar value{std::numeric_limits<Scalar>::quiet_NaN()};
};

/// Solves the Lagrange dual of the loss SOCP as its own conic program and
/// returns the equality multipliers. Cross-validation path for the
/// multipliers extracted from the primal solve.
template <typename Scalar>
DualSocpSolution<Scalar> solve_dual_socp(const AffineMaps<Scalar>& maps, const RadialNetwork<Scalar>& net,
                                         const Vector<Scalar>& p, const Vector<Scalar>& q,
                                         const IpmOptions<Scalar>& opt = {}) {
  const int N = maps.n_bus;
  const Vector<Scalar> bp = maps.b_p(p);
  const Vector<Scalar> bv = maps.b_v(p);
  // Variables: [lambda (N); {u_n (3), mu_n (1)} per line; nu_lo (N); nu_hi (N)].
  const int off_u = N;
  const int off_nu_lo = N + 4 * N;
  const int off_nu_hi = off_nu_lo + N;
  const int m = off_nu_hi + N;

  ConicProblem<Scalar> P;
  P.cost = Vector<Scalar>::Zero(m);
  // Maximize sum(u_n' b_n - mu_n d_n) - lambda' q + b_v'(nu_hi - nu_lo)
  //          - v_max' nu_hi + v_min' nu_lo, i.e. minimize its negative.
  P.cost.head(N) = q;
  for (int n = 1; n <= N; ++n) {
    P.cost.segment(off_u + 4 * (n - 1), 3) = -maps.b_soc(bp, bv, n);
    P.cost[off_u + 4 * (n - 1) + 3] = maps.d_soc(bv, n);
  }
  P.cost.segment(off_nu_lo, N) = bv - net.v_min;
  P.cost.segment(off_nu_hi, N) = net.v_max - bv;

  // Stationarity: A_v'(nu_hi - nu_lo) + A_q' lambda + sum(A_n' u_n - mu_n c_n) + r_z = 0.
  P.E = Matrix<Scalar>::Zero(2 * N, m);
  P.E.leftCols(N) = maps.A_q.transpose();
  for (int n = 1; n <= N; ++n) {
    P.E.middleCols(off_u + 4 * (n - 1), 3) = maps.A_soc[static_cast<size_t>(n - 1)].transpose();
    P.E.col(off_u + 4 * (n - 1) + 3) = -maps.C_soc.row(n - 1).transpose();
  }
  P.E.middleCols(off_nu_lo, N) = -maps.A_v.transpose();
  P.E.middleCols(off_nu_hi, N) = maps.A_v.transpose();
  P.e = -maps.r_z;

  const Scalar inf = std::numeric_limits<Scalar>::infinity();
  P.box.G = Matrix<Scalar>::Zero(2 * N, m);
  P.box.G.block(0, off_nu_lo, 2 * N, 2 * N).setIdentity();
  P.box.offset = Vector<Scalar>::Zero(2 * N);
  P.box.lo = Vector<Scalar>::Zero(2 * N);
  P.box.hi = Vector<Scalar>::Constant(2 * N, inf);

  P.cones.resize(static_cast<size_t>(N));
  for (int n = 1; n <= N; ++n) {
    auto& c = P.cones[static_cast<size_t>(n - 1)];
    c.F = Matrix<Scalar>::Zero(3, m);
    c.F.block(0, off_u + 4 * (n - 1), 3, 3).setIdentity();
    c.f.setZero();
    c.h = Vector<Scalar>::Zero(m);
    c.h[off_u + 4 * (n - 1) + 3] = Scalar(1);
    c.s = Scalar(0);
  }

  const auto res = ipm_solve(P, opt);
  DualSocpSolution<Scalar> out;
  out.status = res.status;
  if (res.status == SolveStatus::optimal) {
    out.lambda = res.z.head(N);
    out.value = -res.primal_value;
  }
  return out;
}

}  // namespace voltvar
