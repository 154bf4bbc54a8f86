#pragma once

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <stdexcept>

#include "voltvar/conic.hpp"
#include "voltvar/network.hpp"
#include "voltvar/relaxation.hpp"

namespace voltvar {

enum class ScheduleKind { constant_horizon, decaying, scaled_decaying };

inline const char* to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::constant_horizon: return "constant_horizon";
    case ScheduleKind::decaying: return "decaying";
    case ScheduleKind::scaled_decaying: return "scaled_decaying";
  }
  return "unknown";
}

inline ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "constant_horizon") return ScheduleKind::constant_horizon;
  if (s == "decaying") return ScheduleKind::decaying;
  if (s == "scaled_decaying") return ScheduleKind::scaled_decaying;
  throw std::invalid_argument("unknown schedule kind \"" + s + "\"");
}

template <typename Scalar>
struct StepSizeSchedule {
  ScheduleKind kind{ScheduleKind::decaying};
  Scalar D{1};     // iterate diameter bound
  Scalar L{1};     // subgradient norm bound
  int T{1};        // horizon, used by constant_horizon
  Scalar beta{1};  // scale, used by scaled_decaying

  void validate() const {
    if (!(D > Scalar(0)) || !(L > Scalar(0))) throw std::invalid_argument("step size schedule needs D, L > 0");
    if (!(beta > Scalar(0))) throw std::invalid_argument("step size schedule needs beta > 0");
    if (kind == ScheduleKind::constant_horizon && T < 1)
      throw std::invalid_argument("constant_horizon schedule needs T >= 1");
  }
};

using StepSizeScheduled = StepSizeSchedule<double>;

template <typename Scalar>
Scalar eta_at(const StepSizeSchedule<Scalar>& sched, long t) {
  using std::sqrt;
  sched.validate();
  if (t < 1) throw std::invalid_argument("eta_at: interval index must be >= 1");
  switch (sched.kind) {
    case ScheduleKind::constant_horizon: return sched.D / (sched.L * sqrt(Scalar(sched.T)));
    case ScheduleKind::decaying: return sched.D / (sched.L * sqrt(Scalar(t)));
    case ScheduleKind::scaled_decaying: return sched.beta * sched.D / (sched.L * sqrt(Scalar(t)));
  }
  throw std::logic_error("unreachable");
}

/// Entrywise minimizer of (1/2)(q - y)^2 + eta_c |q| over [q_lo, q_hi]:
/// soft threshold by eta_c, then clip to the box.
template <typename Scalar>
Vector<Scalar> threshold_update(const Vector<Scalar>& y, const Vector<Scalar>& eta_c,
                                const Vector<Scalar>& q_lo, const Vector<Scalar>& q_hi) {
  const auto n = y.size();
  if (eta_c.size() != n || q_lo.size() != n || q_hi.size() != n)
    throw std::invalid_argument("threshold_update: length mismatch");
  Vector<Scalar> out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar b = eta_c[i], yi = y[i], lo = q_lo[i], hi = q_hi[i];
    if (b < Scalar(0)) throw std::invalid_argument("threshold_update: negative threshold");
    if (lo > Scalar(0) || hi < Scalar(0) || lo > hi)
      throw std::invalid_argument("threshold_update: box must contain zero");
    if (yi > hi + b)
      out[i] = hi;
    else if (yi > b)
      out[i] = yi - b;
    else if (yi >= -b)
      out[i] = Scalar(0);
    else if (yi >= lo - b)
      out[i] = yi + b;
    else
      out[i] = lo;
  }
  return out;
}

/// State of the online controller: the applied setpoint, the running sum of
/// iterates, and the step-size schedule (with an optional running estimate
/// of the subgradient norm bound).
template <typename Scalar>
struct ControllerState {
  Vector<Scalar> q_hat;
  Vector<Scalar> q_bar_sum;
  long t{0};
  StepSizeSchedule<Scalar> schedule;
  bool auto_L{false};
  Scalar L_run{0};

  Vector<Scalar> q_bar() const { return t > 0 ? Vector<Scalar>(q_bar_sum / Scalar(t)) : q_bar_sum; }
};

using ControllerStated = ControllerState<double>;

/// Initial state with q_hat = 0. A nonpositive D in the schedule is replaced
/// by the box-derived default D = sqrt(2 sum q_hi^2); a nonpositive L enables
/// the running-max estimate.
template <typename Scalar>
ControllerState<Scalar> init_controller(const RadialNetwork<Scalar>& net, StepSizeSchedule<Scalar> sched) {
  using std::sqrt;
  ControllerState<Scalar> st;
  const int N = net.num_lines();
  st.q_hat = Vector<Scalar>::Zero(N);
  st.q_bar_sum = Vector<Scalar>::Zero(N);
  if (!(sched.D > Scalar(0))) sched.D = sqrt(Scalar(2) * net.q_hi.squaredNorm());
  if (!(sched.L > Scalar(0))) {
    sched.L = Scalar(1);
    st.auto_L = true;
  }
  st.schedule = sched;
  return st;
}

enum class DualMode { from_primal, separate };

template <typename Scalar>
struct ControllerOptions {
  IpmOptions<Scalar> ipm{};
  Scalar tol_cone{Scalar(1e-6)};
  Scalar tol_mu{Scalar(1e-7)};
  DualMode dual_mode{DualMode::from_primal};
};

using ControllerOptionsd = ControllerOptions<double>;

template <typename Scalar>
struct StepResult {
  Vector<Scalar> setpoint;
  Scalar eta{std::numeric_limits<Scalar>::quiet_NaN()};
  Scalar f_value{std::numeric_limits<Scalar>::quiet_NaN()};
  Vector<Scalar> lambda;
  bool exact{false};
  bool held{false};
  PrimalStatus solve_status{PrimalStatus::solver_failure};
};

using StepResultd = StepResult<double>;

/// One interval of the online scheme: solve the loss SOCP at the observed
/// injections with the standing setpoint, step along the equality
/// multipliers, and re-project through the soft threshold. On solver
/// infeasibility or failure the previous setpoint is held and flagged.
template <typename Scalar>
StepResult<Scalar> stochastic_step(ControllerState<Scalar>& state, const RadialNetwork<Scalar>& net,
                                   const AffineMaps<Scalar>& maps, const PriceSchedule<Scalar>& prices,
                                   const Vector<Scalar>& observed_p, const Vector<Scalar>& observed_qc,
                                   const ControllerOptions<Scalar>& opt = {}) {
  const int N = net.num_lines();
  if (observed_p.size() != N || observed_qc.size() != N)
    throw std::invalid_argument("stochastic_step: observation vectors must have length N");

  StepResult<Scalar> res;
  const Vector<Scalar> q_inj = state.q_hat - observed_qc;
  const auto sol = solve_primal(maps, net, observed_p, q_inj, opt.ipm);
  res.solve_status = sol.status;
  state.t += 1;

  if (sol.status != PrimalStatus::optimal) {
    res.held = true;
    res.setpoint = state.q_hat;
    state.q_bar_sum += state.q_hat;
    return res;
  }

  Vector<Scalar> lambda = sol.dual.lambda;
  if (opt.dual_mode == DualMode::separate) {
    const auto ds = solve_dual_socp(maps, net, observed_p, q_inj, opt.ipm);
    if (ds.status == SolveStatus::optimal) lambda = ds.lambda;
  }

  const auto cert = exactness_certificate(maps, net, observed_p, sol.z, sol.dual, opt.tol_cone, opt.tol_mu);

  StepSizeSchedule<Scalar> sched = state.schedule;
  if (state.auto_L) {
    state.L_run = std::max(state.L_run, std::max(lambda.norm(), Scalar(1e-8)));
    sched.L = state.L_run;
  }
  const Scalar eta = eta_at(sched, state.t);

  const Vector<Scalar> y = state.q_hat + eta * lambda;
  const Vector<Scalar> eta_c = eta * prices.c;
  const Vector<Scalar> next = threshold_update(y, eta_c, net.q_lo, net.q_hi);

  state.q_hat = next;
  state.q_bar_sum += next;

  res.setpoint = next;
  res.eta = eta;
  res.f_value = sol.value;
  res.lambda = lambda;
  res.exact = cert.exact_by_gap;
  return res;
}

template <typename Scalar>
struct DispatchResult {
  Vector<Scalar> setpoint;
  Scalar value{std::numeric_limits<Scalar>::quiet_NaN()};  // loss + normalized price term
  bool exact{false};
  PrimalStatus status{PrimalStatus::solver_failure};
};

using DispatchResultd = DispatchResult<double>;

/// Per-interval optimal dispatch: minimizes loss plus the normalized support
/// prices over the reactive injection box, with the setpoint as a decision
/// variable (absolute values handled by epigraph splits).
template <typename Scalar>
DispatchResult<Scalar> deterministic_step(const RadialNetwork<Scalar>& net, const AffineMaps<Scalar>& maps,
                                          const PriceSchedule<Scalar>& prices, const Vector<Scalar>& observed_p,
                                          const Vector<Scalar>& observed_qc,
                                          const ControllerOptions<Scalar>& opt = {}) {
  const int N = net.num_lines();
  if (observed_p.size() != N || observed_qc.size() != N)
    throw std::invalid_argument("deterministic_step: observation vectors must have length N");
  const auto ctrl = net.controllable_buses();
  const int M = static_cast<int>(ctrl.size());
  const int m = 2 * N + 2 * M;  // [z; g; t]
  const Scalar inf = std::numeric_limits<Scalar>::infinity();

  const auto base = assemble_loss_socp(maps, net, observed_p, Vector<Scalar>(-observed_qc));

  ConicProblem<Scalar> P;
  P.cost = Vector<Scalar>::Zero(m);
  P.cost.head(2 * N) = maps.r_z;
  for (int j = 0; j < M; ++j) P.cost[2 * N + M + j] = prices.c[ctrl[static_cast<size_t>(j)] - 1];

  P.E = Matrix<Scalar>::Zero(N, m);
  P.E.leftCols(2 * N) = maps.A_q;
  for (int j = 0; j < M; ++j) P.E(ctrl[static_cast<size_t>(j)] - 1, 2 * N + j) = Scalar(-1);
  P.e = -observed_qc;

  // Rows: voltage box, setpoint box, epigraph t >= +-g (with a loose cap on t
  // to keep the feasible set bounded).
  const int rows = N + 3 * M;
  P.box.G = Matrix<Scalar>::Zero(rows, m);
  P.box.offset = Vector<Scalar>::Zero(rows);
  P.box.lo = Vector<Scalar>::Zero(rows);
  P.box.hi = Vector<Scalar>::Zero(rows);
  P.box.G.topLeftCorner(N, 2 * N) = maps.A_v;
  P.box.offset.head(N) = base.box.offset;
  P.box.lo.head(N) = net.v_min;
  P.box.hi.head(N) = net.v_max;
  for (int j = 0; j < M; ++j) {
    const int b = ctrl[static_cast<size_t>(j)];
    P.box.G(N + j, 2 * N + j) = Scalar(1);
    P.box.lo[N + j] = net.q_lo[b - 1];
    P.box.hi[N + j] = net.q_hi[b - 1];
    P.box.G(N + M + j, 2 * N + j) = Scalar(-1);
    P.box.G(N + M + j, 2 * N + M + j) = Scalar(1);
    P.box.lo[N + M + j] = Scalar(0);
    P.box.hi[N + M + j] = inf;
    P.box.G(N + 2 * M + j, 2 * N + j) = Scalar(1);
    P.box.G(N + 2 * M + j, 2 * N + M + j) = Scalar(1);
    P.box.lo[N + 2 * M + j] = Scalar(0);
    P.box.hi[N + 2 * M + j] = net.q_hi[b - 1] + Scalar(1);
  }

  P.cones.resize(static_cast<size_t>(N));
  for (int n = 1; n <= N; ++n) {
    auto& c = P.cones[static_cast<size_t>(n - 1)];
    const auto& bc = base.cones[static_cast<size_t>(n - 1)];
    c.F = Matrix<Scalar>::Zero(3, m);
    c.F.leftCols(2 * N) = bc.F;
    c.f = bc.f;
    c.h = Vector<Scalar>::Zero(m);
    c.h.head(2 * N) = bc.h;
    c.s = bc.s;
  }

  DispatchResult<Scalar> res;
  const auto raw = ipm_solve(P, opt.ipm);
  if (raw.status == SolveStatus::optimal) {
    res.status = PrimalStatus::optimal;
    res.value = raw.primal_value;
    Vector<Scalar> g = Vector<Scalar>::Zero(N);
    for (int j = 0; j < M; ++j) g[ctrl[static_cast<size_t>(j)] - 1] = raw.z[2 * N + j];
    res.setpoint = clamp_to_region(g, net);
    // Exactness of the relaxation at the dispatch optimum.
    const Vector<Scalar> z = raw.z.head(2 * N);
    const auto pt = reconstruct_point(maps, net, observed_p, z);
    Scalar max_gap = Scalar(0);
    for (int n = 1; n <= N; ++n) {
      const int pi = net.parent_of(n);
      const Scalar v_up = pi == 0 ? net.v0 : pt.v[pi - 1];
      max_gap = std::max(max_gap,
                         pt.ell[n - 1] - (pt.P[n - 1] * pt.P[n - 1] + pt.Q[n - 1] * pt.Q[n - 1]) / v_up);
    }
    res.exact = max_gap <= opt.tol_cone;
  } else if (raw.status == SolveStatus::infeasible) {
    res.status = PrimalStatus::infeasible;
  } else {
    res.status = PrimalStatus::solver_failure;
  }
  return res;
}

/// Benchmark dispatch on the true instantaneous grid state. Identical to
/// deterministic_step; the simulator feeds it undelayed, noise-free
/// injections, which no deployable controller can observe.
template <typename Scalar>
DispatchResult<Scalar> ideal_step(const RadialNetwork<Scalar>& net, const AffineMaps<Scalar>& maps,
                                  const PriceSchedule<Scalar>& prices, const Vector<Scalar>& true_p,
                                  const Vector<Scalar>& true_qc, const ControllerOptions<Scalar>& opt = {}) {
  return deterministic_step(net, maps, prices, true_p, true_qc, opt);
}

}  // namespace voltvar
