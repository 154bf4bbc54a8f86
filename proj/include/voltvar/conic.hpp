#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "voltvar/network.hpp"

namespace voltvar {

/// One second-order cone constraint ||F z + f||_2 <= h' z + s with a
/// 3-dimensional norm argument.
template <typename Scalar>
struct SocConstraint {
  Matrix<Scalar> F;  // 3 x m
  Eigen::Matrix<Scalar, 3, 1> f{Eigen::Matrix<Scalar, 3, 1>::Zero()};
  Vector<Scalar> h;  // m
  Scalar s{0};
};

/// Two-sided bounds lo <= G z + offset <= hi. Entries of lo/hi may be
/// +-infinity to drop a side.
template <typename Scalar>
struct BoxBlock {
  Matrix<Scalar> G;  // rows x m
  Vector<Scalar> offset, lo, hi;
  Eigen::Index rows() const { return G.rows(); }
};

template <typename Scalar>
struct ConicProblem {
  Vector<Scalar> cost;  // m
  Matrix<Scalar> E;     // k x m equality matrix, E z = e
  Vector<Scalar> e;     // k
  BoxBlock<Scalar> box;
  std::vector<SocConstraint<Scalar>> cones;

  Eigen::Index num_vars() const { return cost.size(); }

  void validate() const {
    const auto m = num_vars();
    if (m == 0) throw std::invalid_argument("conic problem has no variables");
    if (E.rows() != e.size() || (E.rows() > 0 && E.cols() != m))
      throw std::invalid_argument("equality block dimensions inconsistent");
    if (box.rows() > 0) {
      if (box.G.cols() != m || box.offset.size() != box.rows() || box.lo.size() != box.rows() ||
          box.hi.size() != box.rows())
        throw std::invalid_argument("box block dimensions inconsistent");
    }
    for (const auto& c : cones) {
      if (c.F.rows() != 3 || c.F.cols() != m || c.h.size() != m)
        throw std::invalid_argument("cone block dimensions inconsistent");
    }
  }
};

/// Multipliers of a solved conic problem: lambda for the equalities,
/// (u, mu) per cone with ||u|| <= mu, and nonnegative nu for the box sides.
template <typename Scalar>
struct DualSolution {
  Vector<Scalar> lambda;
  std::vector<Eigen::Matrix<Scalar, 3, 1>> u;
  Vector<Scalar> mu;
  Vector<Scalar> nu_lo, nu_hi;
  Scalar dual_value{std::numeric_limits<Scalar>::quiet_NaN()};
};

using DualSolutiond = DualSolution<double>;

enum class SolveStatus { optimal, infeasible, unbounded, stalled, numerical_failure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::stalled: return "stalled";
    case SolveStatus::numerical_failure: return "numerical_failure";
  }
  return "unknown";
}

template <typename Scalar>
struct IterateInfo {
  int iter{0};
  Scalar primal_obj{0}, dual_obj{0}, gap{0};
  Scalar mu{0};
  Scalar primal_res{0}, dual_res{0};
  Scalar step{0};
};

template <typename Scalar>
struct IpmOptions {
  Scalar tol{Scalar(1e-8)};
  int max_iter{100};
  Scalar step_fraction{Scalar(0.99)};
};

using IpmOptionsd = IpmOptions<double>;

template <typename Scalar>
struct IpmResult {
  SolveStatus status{SolveStatus::numerical_failure};
  Vector<Scalar> z;
  DualSolution<Scalar> dual;
  Scalar primal_value{std::numeric_limits<Scalar>::quiet_NaN()};
  Scalar dual_value{std::numeric_limits<Scalar>::quiet_NaN()};
  Scalar gap{std::numeric_limits<Scalar>::quiet_NaN()};
  Scalar primal_residual{std::numeric_limits<Scalar>::quiet_NaN()};
  Scalar dual_residual{std::numeric_limits<Scalar>::quiet_NaN()};
  Scalar comp_slack{std::numeric_limits<Scalar>::quiet_NaN()};
  int iterations{0};
  std::vector<IterateInfo<Scalar>> history;
};

using IpmResultd = IpmResult<double>;

namespace detail {

// Internal cone-LP form: min c'x s.t. A x = b, G x + s = h, s in K,
// K = R^{m_l}_+ x (4-dim second-order cones)^{n_soc}.
template <typename Scalar>
struct ConeLp {
  Vector<Scalar> c;
  Matrix<Scalar> A;
  Vector<Scalar> b;
  Matrix<Scalar> G;
  Vector<Scalar> h;
  int m_l{0};
  int n_soc{0};
  std::vector<int> up_row, lo_row;  // per original box row, -1 if that side is infinite
  Eigen::Index rows() const { return G.rows(); }
};

template <typename Scalar>
ConeLp<Scalar> to_conelp(const ConicProblem<Scalar>& P) {
  const auto m = P.num_vars();
  ConeLp<Scalar> L;
  L.c = P.cost;
  L.A = P.E;
  L.b = P.e;
  const Eigen::Index nb = P.box.rows();
  L.up_row.assign(static_cast<size_t>(nb), -1);
  L.lo_row.assign(static_cast<size_t>(nb), -1);
  int ml = 0;
  for (Eigen::Index i = 0; i < nb; ++i) {
    if (std::isfinite(static_cast<double>(P.box.hi[i]))) L.up_row[i] = ml++;
    if (std::isfinite(static_cast<double>(P.box.lo[i]))) L.lo_row[i] = ml++;
  }
  L.m_l = ml;
  L.n_soc = static_cast<int>(P.cones.size());
  const Eigen::Index rows = ml + 4 * L.n_soc;
  L.G.setZero(rows, m);
  L.h.setZero(rows);
  for (Eigen::Index i = 0; i < nb; ++i) {
    if (L.up_row[i] >= 0) {
      L.G.row(L.up_row[i]) = P.box.G.row(i);
      L.h[L.up_row[i]] = P.box.hi[i] - P.box.offset[i];
    }
    if (L.lo_row[i] >= 0) {
      L.G.row(L.lo_row[i]) = -P.box.G.row(i);
      L.h[L.lo_row[i]] = P.box.offset[i] - P.box.lo[i];
    }
  }
  for (int i = 0; i < L.n_soc; ++i) {
    const auto& c = P.cones[static_cast<size_t>(i)];
    const Eigen::Index r0 = ml + 4 * i;
    L.G.row(r0) = -c.h.transpose();
    L.G.block(r0 + 1, 0, 3, m) = -c.F;
    L.h[r0] = c.s;
    L.h.segment(r0 + 1, 3) = c.f;
  }
  return L;
}

// Smallest margin to the cone boundary; positive iff strictly interior.
template <typename Scalar>
Scalar cone_margin(const Vector<Scalar>& v, int m_l, int n_soc) {
  Scalar m = std::numeric_limits<Scalar>::infinity();
  for (int i = 0; i < m_l; ++i) m = std::min(m, v[i]);
  for (int i = 0; i < n_soc; ++i) {
    const auto blk = v.segment(m_l + 4 * i, 4);
    m = std::min(m, blk[0] - blk.tail(3).norm());
  }
  return m;
}

template <typename Scalar>
Vector<Scalar> cone_identity(int m_l, int n_soc) {
  Vector<Scalar> e = Vector<Scalar>::Zero(m_l + 4 * n_soc);
  e.head(m_l).setOnes();
  for (int i = 0; i < n_soc; ++i) e[m_l + 4 * i] = Scalar(1);
  return e;
}

template <typename Scalar>
void shift_into_cone(Vector<Scalar>& v, int m_l, int n_soc) {
  if (v.size() == 0) return;
  const Scalar m = cone_margin(v, m_l, n_soc);
  if (m <= Scalar(0)) v += (Scalar(1) - m) * cone_identity<Scalar>(m_l, n_soc);
}

// Jordan product for the orthant (componentwise) and 4-dim SOC blocks.
template <typename Scalar>
Vector<Scalar> jordan_prod(const Vector<Scalar>& a, const Vector<Scalar>& b, int m_l, int n_soc) {
  Vector<Scalar> out(a.size());
  out.head(m_l) = a.head(m_l).cwiseProduct(b.head(m_l));
  for (int i = 0; i < n_soc; ++i) {
    const auto ai = a.segment(m_l + 4 * i, 4);
    const auto bi = b.segment(m_l + 4 * i, 4);
    out[m_l + 4 * i] = ai.dot(bi);
    out.segment(m_l + 4 * i + 1, 3) = ai[0] * bi.tail(3) + bi[0] * ai.tail(3);
  }
  return out;
}

// Solve lam o x = d blockwise.
template <typename Scalar>
Vector<Scalar> jordan_div(const Vector<Scalar>& lam, const Vector<Scalar>& d, int m_l, int n_soc) {
  Vector<Scalar> out(lam.size());
  out.head(m_l) = d.head(m_l).cwiseQuotient(lam.head(m_l));
  for (int i = 0; i < n_soc; ++i) {
    const auto li = lam.segment(m_l + 4 * i, 4);
    const auto di = d.segment(m_l + 4 * i, 4);
    const Scalar det = li[0] * li[0] - li.tail(3).squaredNorm();
    const Scalar x0 = (li[0] * di[0] - li.tail(3).dot(di.tail(3))) / det;
    out[m_l + 4 * i] = x0;
    out.segment(m_l + 4 * i + 1, 3) = (di.tail(3) - x0 * li.tail(3)) / li[0];
  }
  return out;
}

// Largest step a with v + a*dv in the cone (v strictly interior); may be inf.
template <typename Scalar>
Scalar max_step(const Vector<Scalar>& v, const Vector<Scalar>& dv, int m_l, int n_soc) {
  using std::sqrt;
  Scalar amax = std::numeric_limits<Scalar>::infinity();
  for (int i = 0; i < m_l; ++i)
    if (dv[i] < Scalar(0)) amax = std::min(amax, -v[i] / dv[i]);
  for (int i = 0; i < n_soc; ++i) {
    const auto vi = v.segment(m_l + 4 * i, 4);
    const auto di = dv.segment(m_l + 4 * i, 4);
    // Roots of |v0 + a d0|^2 - ||v1 + a d1||^2 = 0.
    const Scalar a = di[0] * di[0] - di.tail(3).squaredNorm();
    const Scalar b = Scalar(2) * (vi[0] * di[0] - vi.tail(3).dot(di.tail(3)));
    const Scalar c = vi[0] * vi[0] - vi.tail(3).squaredNorm();  // > 0 strictly interior
    Scalar root = std::numeric_limits<Scalar>::infinity();
    const Scalar eps = std::numeric_limits<Scalar>::epsilon();
    if (std::abs(a) < eps * (std::abs(b) + std::abs(c) + eps)) {
      if (b < Scalar(0)) root = -c / b;
    } else {
      const Scalar disc = b * b - Scalar(4) * a * c;
      if (disc >= Scalar(0)) {
        const Scalar sq = sqrt(disc);
        const Scalar qq = -(b + (b >= Scalar(0) ? sq : -sq)) / Scalar(2);
        const Scalar r1 = qq / a;
        const Scalar r2 = (qq != Scalar(0)) ? c / qq : std::numeric_limits<Scalar>::infinity();
        for (Scalar r : {r1, r2})
          if (r > Scalar(0)) root = std::min(root, r);
      }
    }
    amax = std::min(amax, root);
  }
  return amax;
}

// Nesterov-Todd scaling W with W z = W^{-1} s for s, z strictly interior.
template <typename Scalar>
struct Scaling {
  int m_l{0}, n_soc{0};
  Vector<Scalar> wl;  // orthant: W = diag(wl)
  std::vector<Eigen::Matrix<Scalar, 4, 4>> Wq, Wq_inv;
  Vector<Scalar> lambda;  // scaled point W z = W^{-1} s

 private:
  std::vector<Eigen::Matrix<Scalar, 4, 1>> lambda_soc_;

 public:

  void identity(int ml, int ns, Eigen::Index m) {
    m_l = ml;
    n_soc = ns;
    wl = Vector<Scalar>::Ones(ml);
    Wq.assign(static_cast<size_t>(ns), Eigen::Matrix<Scalar, 4, 4>::Identity());
    Wq_inv = Wq;
    lambda = Vector<Scalar>::Zero(m);
  }

  bool compute(const Vector<Scalar>& s, const Vector<Scalar>& z, int ml, int ns) {
    using std::sqrt;
    m_l = ml;
    n_soc = ns;
    wl.resize(ml);
    for (int i = 0; i < ml; ++i) {
      if (!(s[i] > Scalar(0)) || !(z[i] > Scalar(0))) return false;
      wl[i] = sqrt(s[i] / z[i]);
    }
    Wq.resize(static_cast<size_t>(ns));
    Wq_inv.resize(static_cast<size_t>(ns));
    lambda_soc_.resize(static_cast<size_t>(ns));
    Eigen::Matrix<Scalar, 4, 4> J = Eigen::Matrix<Scalar, 4, 4>::Identity();
    J.diagonal().tail(3).setConstant(Scalar(-1));
    for (int i = 0; i < ns; ++i) {
      const auto si = s.segment(ml + 4 * i, 4);
      const auto zi = z.segment(ml + 4 * i, 4);
      const Scalar s_res2 = si[0] * si[0] - si.tail(3).squaredNorm();
      const Scalar z_res2 = zi[0] * zi[0] - zi.tail(3).squaredNorm();
      if (!(s_res2 > Scalar(0)) || !(z_res2 > Scalar(0)) || !(si[0] > Scalar(0)) || !(zi[0] > Scalar(0)))
        return false;
      const Scalar s_res = sqrt(s_res2), z_res = sqrt(z_res2);
      const Eigen::Matrix<Scalar, 4, 1> sb = si / s_res;
      const Eigen::Matrix<Scalar, 4, 1> zb = zi / z_res;
      const Scalar gamma = sqrt((Scalar(1) + sb.dot(zb)) / Scalar(2));
      // Nesterov-Todd point via the hyperbolic Householder reflection that
      // maps the cone identity onto (sb + J zb)/(2 gamma); the reflection
      // vector is the half-angle normalization of that target.
      Eigen::Matrix<Scalar, 4, 1> wb = (sb + J * zb) / (Scalar(2) * gamma);
      Eigen::Matrix<Scalar, 4, 1> vb = wb;
      vb[0] += Scalar(1);
      vb /= sqrt(Scalar(2) * vb[0]);
      const Scalar eta = sqrt(s_res / z_res);
      Wq[static_cast<size_t>(i)] = eta * (Scalar(2) * vb * vb.transpose() - J);
      const Eigen::Matrix<Scalar, 4, 1> jvb = J * vb;
      Wq_inv[static_cast<size_t>(i)] = (Scalar(2) * jvb * jvb.transpose() - J) / eta;
      // Scaled point, in the closed form that avoids the matrix product.
      const Scalar dd = Scalar(2) * gamma + sb[0] + zb[0];
      const Scalar sc = sqrt(s_res * z_res);
      lambda_soc_[static_cast<size_t>(i)][0] = sc * gamma;
      lambda_soc_[static_cast<size_t>(i)].tail(3) =
          sc * (((gamma + zb[0]) / dd) * sb.tail(3) + ((gamma + sb[0]) / dd) * zb.tail(3));
    }
    lambda.resize(s.size());
    for (int i = 0; i < ml; ++i) lambda[i] = sqrt(s[i] * z[i]);
    for (int i = 0; i < ns; ++i) lambda.segment(ml + 4 * i, 4) = lambda_soc_[static_cast<size_t>(i)];
    return lambda.allFinite();
  }

  Vector<Scalar> apply(const Vector<Scalar>& v) const {
    Vector<Scalar> out(v.size());
    out.head(m_l) = wl.cwiseProduct(v.head(m_l));
    for (int i = 0; i < n_soc; ++i)
      out.segment(m_l + 4 * i, 4) = Wq[static_cast<size_t>(i)] * v.segment(m_l + 4 * i, 4);
    return out;
  }

  Vector<Scalar> apply_inv(const Vector<Scalar>& v) const {
    Vector<Scalar> out(v.size());
    out.head(m_l) = v.head(m_l).cwiseQuotient(wl);
    for (int i = 0; i < n_soc; ++i)
      out.segment(m_l + 4 * i, 4) = Wq_inv[static_cast<size_t>(i)] * v.segment(m_l + 4 * i, 4);
    return out;
  }

  Vector<Scalar> apply_w2(const Vector<Scalar>& v) const { return apply(apply(v)); }

  Matrix<Scalar> apply_inv_matrix(const Matrix<Scalar>& G) const {
    Matrix<Scalar> out(G.rows(), G.cols());
    out.topRows(m_l) = wl.cwiseInverse().asDiagonal() * G.topRows(m_l);
    for (int i = 0; i < n_soc; ++i)
      out.middleRows(m_l + 4 * i, 4) = Wq_inv[static_cast<size_t>(i)] * G.middleRows(m_l + 4 * i, 4);
    return out;
  }
};

// Factorization of [[0 A' G'],[A 0 0],[G 0 -W^2]] via elimination of the
// third block, with one pass of iterative refinement.
template <typename Scalar>
class KktSolver {
 public:
  void factor(const Matrix<Scalar>& A, const Matrix<Scalar>& G, const Scaling<Scalar>& W) {
    A_ = &A;
    G_ = &G;
    W_ = &W;
    n_ = G.cols();
    k_ = A.rows();
    WiG_ = W.apply_inv_matrix(G);
    Matrix<Scalar> K(n_ + k_, n_ + k_);
    K.setZero();
    K.topLeftCorner(n_, n_).noalias() = WiG_.transpose() * WiG_;
    if (k_ > 0) {
      K.topRightCorner(n_, k_) = A.transpose();
      K.bottomLeftCorner(k_, n_) = A;
    }
    // Static regularization keeps the factorization well defined; refinement
    // solves against the unregularized system.
    const Scalar delta = Scalar(1e-12) * std::max(Scalar(1), K.topLeftCorner(n_, n_).diagonal().cwiseAbs().maxCoeff());
    K.topLeftCorner(n_, n_).diagonal().array() += delta;
    K.bottomRightCorner(k_, k_).diagonal().array() -= delta;
    lu_.compute(K);
  }

  // Solves the 3x3 saddle system for (dx, dy, dz) given the right-hand side.
  void solve(const Vector<Scalar>& bx, const Vector<Scalar>& by, const Vector<Scalar>& bz,
             Vector<Scalar>& dx, Vector<Scalar>& dy, Vector<Scalar>& dz) const {
    solve_raw(bx, by, bz, dx, dy, dz);
    // One refinement pass against the true blocks.
    Vector<Scalar> rx = bx - kkt_rx(dx, dy, dz);
    Vector<Scalar> ry = by - kkt_ry(dx);
    Vector<Scalar> rz = bz - kkt_rz(dx, dz);
    Vector<Scalar> cx, cy, cz;
    solve_raw(rx, ry, rz, cx, cy, cz);
    dx += cx;
    dy += cy;
    dz += cz;
  }

 private:
  Vector<Scalar> kkt_rx(const Vector<Scalar>& dx, const Vector<Scalar>& dy, const Vector<Scalar>& dz) const {
    Vector<Scalar> out = G_->transpose() * dz;
    if (k_ > 0) out.noalias() += A_->transpose() * dy;
    (void)dx;
    return out;
  }
  Vector<Scalar> kkt_ry(const Vector<Scalar>& dx) const {
    return k_ > 0 ? Vector<Scalar>(*A_ * dx) : Vector<Scalar>();
  }
  Vector<Scalar> kkt_rz(const Vector<Scalar>& dx, const Vector<Scalar>& dz) const {
    return *G_ * dx - W_->apply_w2(dz);
  }

  void solve_raw(const Vector<Scalar>& bx, const Vector<Scalar>& by, const Vector<Scalar>& bz,
                 Vector<Scalar>& dx, Vector<Scalar>& dy, Vector<Scalar>& dz) const {
    Vector<Scalar> rhs(n_ + k_);
    rhs.head(n_) = bx;
    if (bz.size() > 0) rhs.head(n_).noalias() += WiG_.transpose() * W_->apply_inv(bz);
    if (k_ > 0) rhs.tail(k_) = by;
    Vector<Scalar> sol = lu_.solve(rhs);
    dx = sol.head(n_);
    dy = sol.tail(k_);
    if (bz.size() > 0)
      dz = W_->apply_inv(W_->apply_inv(*G_ * dx - bz));
    else
      dz = Vector<Scalar>();
  }

  const Matrix<Scalar>* A_{nullptr};
  const Matrix<Scalar>* G_{nullptr};
  const Scaling<Scalar>* W_{nullptr};
  Matrix<Scalar> WiG_;
  Eigen::Index n_{0}, k_{0};
  Eigen::PartialPivLU<Matrix<Scalar>> lu_;
};

}  // namespace detail

/// Residuals of a candidate primal/dual pair stated in the original problem
/// terms: stationarity, cone membership of (u, mu), sign of the box
/// multipliers, and complementary slackness products.
template <typename Scalar>
struct DualResidualReport {
  Scalar stationarity{0};       // inf-norm of the gradient of the Lagrangian
  Scalar cone_violation{0};     // max(0, ||u_i|| - mu_i)
  Scalar nu_sign_violation{0};  // max(0, -min entry of nu)
  Scalar comp_slack{0};         // max |multiplier * slack| over all constraints
  Scalar equality_residual{0};  // ||E z - e||_inf
};

template <typename Scalar>
DualResidualReport<Scalar> dual_residuals(const ConicProblem<Scalar>& P, const Vector<Scalar>& z,
                                          const DualSolution<Scalar>& dual) {
  using std::abs;
  P.validate();
  DualResidualReport<Scalar> rep;
  Vector<Scalar> stat = P.cost;
  if (P.E.rows() > 0) {
    stat.noalias() += P.E.transpose() * dual.lambda;
    rep.equality_residual = (P.E * z - P.e).template lpNorm<Eigen::Infinity>();
  }
  if (P.box.rows() > 0) {
    stat.noalias() += P.box.G.transpose() * (dual.nu_hi - dual.nu_lo);
    const Vector<Scalar> gz = P.box.G * z + P.box.offset;
    for (Eigen::Index i = 0; i < P.box.rows(); ++i) {
      rep.nu_sign_violation = std::max(rep.nu_sign_violation, std::max(-dual.nu_hi[i], -dual.nu_lo[i]));
      if (std::isfinite(static_cast<double>(P.box.hi[i])))
        rep.comp_slack = std::max(rep.comp_slack, abs(dual.nu_hi[i] * (P.box.hi[i] - gz[i])));
      if (std::isfinite(static_cast<double>(P.box.lo[i])))
        rep.comp_slack = std::max(rep.comp_slack, abs(dual.nu_lo[i] * (gz[i] - P.box.lo[i])));
    }
    rep.nu_sign_violation = std::max(rep.nu_sign_violation, Scalar(0));
  }
  for (size_t i = 0; i < P.cones.size(); ++i) {
    const auto& c = P.cones[i];
    stat.noalias() += c.F.transpose() * dual.u[i] - dual.mu[i] * c.h;
    rep.cone_violation = std::max(rep.cone_violation, dual.u[i].norm() - dual.mu[i]);
    const Scalar t = c.h.dot(z) + c.s;
    const Eigen::Matrix<Scalar, 3, 1> w = c.F * z + c.f;
    rep.comp_slack = std::max(rep.comp_slack, abs(dual.mu[i] * t - dual.u[i].dot(w)));
  }
  rep.cone_violation = std::max(rep.cone_violation, Scalar(0));
  rep.stationarity = stat.template lpNorm<Eigen::Infinity>();
  return rep;
}

/// Dense primal-dual interior-point solver (Mehrotra predictor-corrector with
/// Nesterov-Todd scaling on a homogeneous self-dual embedding). Deterministic:
/// identical inputs produce identical iterates.
template <typename Scalar>
IpmResult<Scalar> ipm_solve(const ConicProblem<Scalar>& problem, const IpmOptions<Scalar>& opt = {}) {
  using std::abs;
  using std::sqrt;
  problem.validate();
  const auto L = detail::to_conelp(problem);
  const Eigen::Index n = L.c.size();
  const Eigen::Index k = L.b.size();
  const Eigen::Index m = L.h.size();
  const int ml = L.m_l, ns = L.n_soc;
  const Scalar nu_deg = Scalar(ml + ns);

  IpmResult<Scalar> out;
  out.history.reserve(static_cast<size_t>(opt.max_iter));

  const Scalar cinf = Scalar(1) + L.c.template lpNorm<Eigen::Infinity>();
  const Scalar binf = Scalar(1) + (k > 0 ? L.b.template lpNorm<Eigen::Infinity>() : Scalar(0));
  const Scalar hinf = Scalar(1) + (m > 0 ? L.h.template lpNorm<Eigen::Infinity>() : Scalar(0));

  detail::Scaling<Scalar> W;
  W.identity(ml, ns, m);
  detail::KktSolver<Scalar> kkt;
  kkt.factor(L.A, L.G, W);

  Vector<Scalar> x(n), y, z, s;
  {
    Vector<Scalar> tx, ty, tz;
    kkt.solve(Vector<Scalar>::Zero(n), L.b, L.h, tx, ty, tz);
    x = tx;
    s = m > 0 ? Vector<Scalar>(L.h - L.G * x) : Vector<Scalar>();
    detail::shift_into_cone(s, ml, ns);
    kkt.solve(Vector<Scalar>(-L.c), Vector<Scalar>::Zero(k), Vector<Scalar>::Zero(m), tx, ty, tz);
    y = ty;
    z = tz;
    detail::shift_into_cone(z, ml, ns);
  }
  Scalar tau{1}, kappa{1};

  // Best-iterate snapshot: dense double-precision KKT systems lose accuracy
  // once mu shrinks past ~1e-12, so keep the cleanest point seen.
  struct Snapshot {
    Vector<Scalar> x, y, z, s;
    Scalar tau{1}, kappa{1};
    Scalar merit{std::numeric_limits<Scalar>::infinity()};
  } best;

  auto extract = [&](SolveStatus st) {
    out.status = st;
    out.iterations = static_cast<int>(out.history.size());
    const Scalar t = tau > Scalar(0) ? tau : Scalar(1);
    out.z = x / t;
    DualSolution<Scalar>& D = out.dual;
    D.lambda = y / t;
    const Eigen::Index nb = problem.box.rows();
    D.nu_hi = Vector<Scalar>::Zero(nb);
    D.nu_lo = Vector<Scalar>::Zero(nb);
    for (Eigen::Index i = 0; i < nb; ++i) {
      if (L.up_row[static_cast<size_t>(i)] >= 0) D.nu_hi[i] = z[L.up_row[static_cast<size_t>(i)]] / t;
      if (L.lo_row[static_cast<size_t>(i)] >= 0) D.nu_lo[i] = z[L.lo_row[static_cast<size_t>(i)]] / t;
    }
    D.mu.resize(ns);
    D.u.resize(static_cast<size_t>(ns));
    for (int i = 0; i < ns; ++i) {
      D.mu[i] = z[ml + 4 * i] / t;
      D.u[static_cast<size_t>(i)] = -z.segment(ml + 4 * i + 1, 3) / t;
    }
    out.primal_value = L.c.dot(x) / t;
    out.dual_value = -(((k > 0) ? L.b.dot(y) : Scalar(0)) + ((m > 0) ? L.h.dot(z) : Scalar(0))) / t;
    D.dual_value = out.dual_value;
    out.gap = out.primal_value - out.dual_value;
    out.comp_slack = m > 0 ? s.dot(z) / (t * t) : Scalar(0);
  };

  Scalar step_taken{0};
  for (int iter = 0; iter < opt.max_iter; ++iter) {
    Vector<Scalar> hx = L.c * tau;
    if (k > 0) hx.noalias() += L.A.transpose() * y;
    if (m > 0) hx.noalias() += L.G.transpose() * z;
    Vector<Scalar> hy = k > 0 ? Vector<Scalar>(L.A * x - L.b * tau) : Vector<Scalar>();
    Vector<Scalar> hz = m > 0 ? Vector<Scalar>(L.G * x + s - L.h * tau) : Vector<Scalar>();
    const Scalar cx = L.c.dot(x);
    const Scalar by = k > 0 ? L.b.dot(y) : Scalar(0);
    const Scalar hzv = m > 0 ? L.h.dot(z) : Scalar(0);
    const Scalar hk = cx + by + hzv + kappa;

    const Scalar sz = m > 0 ? s.dot(z) : Scalar(0);
    const Scalar mu = (sz + tau * kappa) / (nu_deg + Scalar(1));
    const Scalar pobj = cx / tau;
    const Scalar dobj = -(by + hzv) / tau;
    const Scalar pres = std::max(k > 0 ? hy.template lpNorm<Eigen::Infinity>() / (tau * binf) : Scalar(0),
                                 m > 0 ? hz.template lpNorm<Eigen::Infinity>() / (tau * hinf) : Scalar(0));
    const Scalar dres = hx.template lpNorm<Eigen::Infinity>() / (tau * cinf);
    const Scalar gap_cs = sz / (tau * tau);

    out.history.push_back({iter, pobj, dobj, pobj - dobj, mu, pres, dres, step_taken});
    out.primal_residual = pres;
    out.dual_residual = dres;

    const Scalar obj_scale = std::max(Scalar(1), std::max(abs(pobj), abs(dobj)));
    if (pres <= opt.tol && dres <= opt.tol && (gap_cs <= opt.tol * obj_scale) &&
        abs(pobj - dobj) <= std::max(opt.tol * obj_scale, Scalar(100) * std::numeric_limits<Scalar>::epsilon())) {
      extract(SolveStatus::optimal);
      return out;
    }

    const Scalar merit = std::max({pres, dres, gap_cs / obj_scale, abs(pobj - dobj) / obj_scale});
    if (merit < best.merit) {
      best.merit = merit;
      best.x = x;
      best.y = y;
      best.z = z;
      best.s = s;
      best.tau = tau;
      best.kappa = kappa;
    } else if (merit > Scalar(100) * best.merit && best.merit < sqrt(opt.tol)) {
      // Numerical regime exhausted; report the best point seen.
      x = best.x;
      y = best.y;
      z = best.z;
      s = best.s;
      tau = best.tau;
      kappa = best.kappa;
      extract(SolveStatus::stalled);
      out.primal_residual = best.merit;
      out.dual_residual = best.merit;
      return out;
    }

    // Infeasibility certificates once tau collapses.
    if (tau <= Scalar(1e-2) * std::min(Scalar(1), kappa)) {
      const Scalar w_p = -(by + hzv);
      if (w_p > Scalar(0)) {
        Vector<Scalar> cert = k > 0 ? Vector<Scalar>(L.A.transpose() * y) : Vector<Scalar>::Zero(n);
        if (m > 0) cert.noalias() += L.G.transpose() * z;
        if (cert.template lpNorm<Eigen::Infinity>() / w_p <= std::max(opt.tol, Scalar(1e-10))) {
          extract(SolveStatus::infeasible);
          return out;
        }
      }
      const Scalar w_d = -cx;
      if (w_d > Scalar(0)) {
        const Scalar rp = std::max(k > 0 ? (L.A * x).template lpNorm<Eigen::Infinity>() : Scalar(0),
                                   m > 0 ? (L.G * x + s).template lpNorm<Eigen::Infinity>() : Scalar(0));
        if (rp / w_d <= std::max(opt.tol, Scalar(1e-10))) {
          extract(SolveStatus::unbounded);
          return out;
        }
      }
    }

    if (m > 0 && !W.compute(s, z, ml, ns)) {
      extract(SolveStatus::numerical_failure);
      return out;
    }
    if (m == 0) W.identity(ml, ns, m);
    kkt.factor(L.A, L.G, W);

    Vector<Scalar> x1, y1, z1;
    kkt.solve(Vector<Scalar>(-L.c), L.b, L.h, x1, y1, z1);
    const Scalar den = L.c.dot(x1) + (k > 0 ? L.b.dot(y1) : Scalar(0)) +
                       (m > 0 ? L.h.dot(z1) : Scalar(0)) - kappa / tau;

    auto direction = [&](const Vector<Scalar>& ds, Scalar dk, Scalar rscale, Vector<Scalar>& dx,
                         Vector<Scalar>& dy, Vector<Scalar>& dz, Vector<Scalar>& dsv, Scalar& dtau,
                         Scalar& dkappa) {
      Vector<Scalar> wld = m > 0 ? Vector<Scalar>(W.apply(detail::jordan_div(W.lambda, ds, ml, ns)))
                                 : Vector<Scalar>();
      Vector<Scalar> bz = m > 0 ? Vector<Scalar>(-rscale * hz - wld) : Vector<Scalar>();
      Vector<Scalar> x2, y2, z2;
      kkt.solve(Vector<Scalar>(-rscale * hx), k > 0 ? Vector<Scalar>(-rscale * hy) : Vector<Scalar>(), bz,
                x2, y2, z2);
      const Scalar num = -rscale * hk - dk / tau -
                         (L.c.dot(x2) + (k > 0 ? L.b.dot(y2) : Scalar(0)) + (m > 0 ? L.h.dot(z2) : Scalar(0)));
      dtau = num / den;
      dx = x2 + dtau * x1;
      dy = k > 0 ? Vector<Scalar>(y2 + dtau * y1) : Vector<Scalar>();
      dz = m > 0 ? Vector<Scalar>(z2 + dtau * z1) : Vector<Scalar>();
      dsv = m > 0 ? Vector<Scalar>(wld - W.apply_w2(dz)) : Vector<Scalar>();
      dkappa = (dk - kappa * dtau) / tau;
    };

    // Predictor.
    Vector<Scalar> ds_aff = m > 0 ? Vector<Scalar>(-detail::jordan_prod(W.lambda, W.lambda, ml, ns))
                                  : Vector<Scalar>();
    Vector<Scalar> dx_a, dy_a, dz_a, ds_a;
    Scalar dtau_a, dkap_a;
    direction(ds_aff, -tau * kappa, Scalar(1), dx_a, dy_a, dz_a, ds_a, dtau_a, dkap_a);

    Scalar alpha_max = std::numeric_limits<Scalar>::infinity();
    if (m > 0)
      alpha_max = std::min(detail::max_step(s, ds_a, ml, ns), detail::max_step(z, dz_a, ml, ns));
    if (dtau_a < Scalar(0)) alpha_max = std::min(alpha_max, -tau / dtau_a);
    if (dkap_a < Scalar(0)) alpha_max = std::min(alpha_max, -kappa / dkap_a);
    const Scalar alpha_aff = std::min(Scalar(1), alpha_max);

    Scalar mu_aff = ((tau + alpha_aff * dtau_a) * (kappa + alpha_aff * dkap_a));
    if (m > 0) mu_aff += (s + alpha_aff * ds_a).dot(z + alpha_aff * dz_a);
    mu_aff /= (nu_deg + Scalar(1));
    Scalar sigma = mu_aff / mu;
    sigma = std::min(Scalar(1), std::max(Scalar(0), sigma * sigma * sigma));

    // Corrector.
    Vector<Scalar> ds_c;
    if (m > 0) {
      ds_c = sigma * mu * detail::cone_identity<Scalar>(ml, ns) -
             detail::jordan_prod(W.lambda, W.lambda, ml, ns) -
             detail::jordan_prod(W.apply_inv(ds_a), W.apply(dz_a), ml, ns);
    }
    const Scalar dk_c = sigma * mu - tau * kappa - dtau_a * dkap_a;
    Vector<Scalar> dx, dy, dz, dsv;
    Scalar dtau, dkap;
    direction(ds_c, dk_c, Scalar(1) - sigma, dx, dy, dz, dsv, dtau, dkap);

    Scalar amax = std::numeric_limits<Scalar>::infinity();
    if (m > 0) amax = std::min(detail::max_step(s, dsv, ml, ns), detail::max_step(z, dz, ml, ns));
    if (dtau < Scalar(0)) amax = std::min(amax, -tau / dtau);
    if (dkap < Scalar(0)) amax = std::min(amax, -kappa / dkap);
    const Scalar alpha = std::min(Scalar(1), opt.step_fraction * amax);
    if (!(alpha > Scalar(1e-10))) {
      if (best.merit < std::numeric_limits<Scalar>::infinity()) {
        x = best.x;
        y = best.y;
        z = best.z;
        s = best.s;
        tau = best.tau;
        kappa = best.kappa;
      }
      extract(SolveStatus::stalled);
      return out;
    }

    x += alpha * dx;
    if (k > 0) y += alpha * dy;
    if (m > 0) {
      z += alpha * dz;
      s += alpha * dsv;
    }
    tau += alpha * dtau;
    kappa += alpha * dkap;
    step_taken = alpha;

    if (!x.allFinite() || !std::isfinite(static_cast<double>(tau)) ||
        !std::isfinite(static_cast<double>(kappa)) || (m > 0 && (!s.allFinite() || !z.allFinite()))) {
      if (best.merit < std::numeric_limits<Scalar>::infinity()) {
        x = best.x;
        y = best.y;
        z = best.z;
        s = best.s;
        tau = best.tau;
        kappa = best.kappa;
        extract(SolveStatus::stalled);
      } else {
        extract(SolveStatus::numerical_failure);
      }
      return out;
    }
  }

  // Iterations exhausted: distinguish a hard infeasibility trend from a stall.
  if (tau <= Scalar(1e-6) && kappa > tau) {
    const Scalar w_p = -((k > 0 ? L.b.dot(y) : Scalar(0)) + (m > 0 ? L.h.dot(z) : Scalar(0)));
    if (w_p > Scalar(0)) {
      Vector<Scalar> cert = k > 0 ? Vector<Scalar>(L.A.transpose() * y) : Vector<Scalar>::Zero(n);
      if (m > 0) cert.noalias() += L.G.transpose() * z;
      if (cert.template lpNorm<Eigen::Infinity>() / w_p <= sqrt(opt.tol)) {
        extract(SolveStatus::infeasible);
        return out;
      }
    }
  }
  if (best.merit < std::numeric_limits<Scalar>::infinity()) {
    x = best.x;
    y = best.y;
    z = best.z;
    s = best.s;
    tau = best.tau;
    kappa = best.kappa;
  }
  extract(SolveStatus::stalled);
  return out;
}

}  // namespace voltvar
