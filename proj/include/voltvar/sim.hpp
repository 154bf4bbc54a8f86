#pragma once

#include <Eigen/Core>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include "voltvar/branchflow.hpp"
#include "voltvar/controller.hpp"
#include "voltvar/network.hpp"

namespace voltvar {

/// Stationary Gaussian disturbance scenario: true injections are the nominal
/// values plus zero-mean noise with per-entry std noise_sigma * |nominal|;
/// the controller observes the true values delayed by delay_intervals.
template <typename Scalar>
struct Scenario {
  Vector<Scalar> nominal_p, nominal_qc;
  Scalar noise_sigma{Scalar(0.3)};
  int horizon{120};
  Scalar interval_seconds{30};
  int delay_intervals{1};
  std::uint64_t seed{1};
};

using Scenariod = Scenario<double>;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t v) {
  v += 0x9E3779B97F4A7C15ull;
  v = (v ^ (v >> 30)) * 0xBF58476D1CE4E5B9ull;
  v = (v ^ (v >> 27)) * 0x94D049BB133111EBull;
  return v ^ (v >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream));
}

}  // namespace detail

template <typename Scalar>
struct InjectionDraw {
  Vector<Scalar> true_p, true_qc;
  Vector<Scalar> observed_p, observed_qc;
};

/// True and observed injections at interval t (1-based). Draws are a pure
/// function of (seed, t), so the delayed observation at t is bit-identical
/// to the true draw at t - d; before t = d + 1 the nominal values stand in.
template <typename Scalar>
InjectionDraw<Scalar> gen_gaussian(const Scenario<Scalar>& sc, int t) {
  if (t < 1 || t > sc.horizon) throw std::invalid_argument("gen_gaussian: interval out of range");
  const auto n = sc.nominal_p.size();
  auto draw_at = [&](int ti) {
    std::mt19937_64 rng(detail::mix_seed(sc.seed, static_cast<std::uint64_t>(ti)));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::pair<Vector<Scalar>, Vector<Scalar>> out{sc.nominal_p, sc.nominal_qc};
    if (sc.noise_sigma > Scalar(0)) {
      for (Eigen::Index i = 0; i < n; ++i)
        out.first[i] += sc.noise_sigma * std::abs(sc.nominal_p[i]) * Scalar(normal(rng));
      for (Eigen::Index i = 0; i < n; ++i)
        out.second[i] += sc.noise_sigma * std::abs(sc.nominal_qc[i]) * Scalar(normal(rng));
    }
    return out;
  };

  InjectionDraw<Scalar> d;
  auto now = draw_at(t);
  d.true_p = std::move(now.first);
  d.true_qc = std::move(now.second);
  const int t_obs = t - sc.delay_intervals;
  if (t_obs >= 1) {
    auto past = draw_at(t_obs);
    d.observed_p = std::move(past.first);
    d.observed_qc = std::move(past.second);
  } else {
    d.observed_p = sc.nominal_p;
    d.observed_qc = sc.nominal_qc;
  }
  return d;
}

/// Realized cost of one controller at one interval, evaluated on the true
/// injections through the power-flow oracle (never the relaxation).
template <typename Scalar>
struct ControllerEval {
  bool attempted{false};
  bool valid{false};  // power flow converged
  bool exact{true};   // relaxation exactness flag from the controller's solve
  bool held{false};   // setpoint held after a solver failure
  Scalar cost{std::numeric_limits<Scalar>::quiet_NaN()};     // currency per hour
  Scalar loss_pu{std::numeric_limits<Scalar>::quiet_NaN()};  // per-unit line loss
  Scalar v_min_obs{std::numeric_limits<Scalar>::quiet_NaN()};
  Scalar v_max_obs{std::numeric_limits<Scalar>::quiet_NaN()};
  Vector<Scalar> setpoint;
};

template <typename Scalar>
struct CostRecord {
  int t{0};
  ControllerEval<Scalar> stochastic, deterministic, ideal;
};

using CostRecordd = CostRecord<double>;

/// Evaluates a setpoint on the true injections: power flow by sweep, loss
/// converted to currency through the base power, plus the support payments.
template <typename Scalar>
ControllerEval<Scalar> true_cost(const RadialNetwork<Scalar>& net, const PriceSchedule<Scalar>& prices,
                                 const Vector<Scalar>& true_p, const Vector<Scalar>& true_qc,
                                 const Vector<Scalar>& setpoint, Scalar sweep_tol = Scalar(1e-10)) {
  ControllerEval<Scalar> ev;
  ev.attempted = true;
  ev.setpoint = clamp_to_region(setpoint, net);
  const Vector<Scalar> q = ev.setpoint - true_qc;
  try {
    const auto pt = sweep_solve(net, true_p, q, sweep_tol);
    ev.valid = true;
    ev.loss_pu = power_loss(net, pt);
    const Scalar loss_kw = ev.loss_pu * net.base_kva;
    Scalar support = Scalar(0);
    for (Eigen::Index i = 0; i < ev.setpoint.size(); ++i)
      support += prices.c_tilde[i] * std::abs(ev.setpoint[i]) * net.base_kva;
    ev.cost = prices.c0_tilde * loss_kw + support;
    ev.v_min_obs = pt.v.minCoeff();
    ev.v_max_obs = pt.v.maxCoeff();
  } catch (const SweepNonConvergence&) {
    ev.valid = false;
  }
  return ev;
}

struct ControllerSelection {
  bool stochastic{true};
  bool deterministic{true};
  bool ideal{true};
};

template <typename Scalar>
struct ExperimentConfig {
  ControllerSelection controllers{};
  StepSizeSchedule<Scalar> schedule{};
  ControllerOptions<Scalar> options{};
  Scalar sweep_tol{Scalar(1e-10)};
};

using ExperimentConfigd = ExperimentConfig<double>;

/// Runs one realization of the interval loop: generate injections, apply the
/// observation delay, step every selected controller on the observed data and
/// account each on the true data. Controller failures hold the previous
/// setpoint and are recorded, never fatal.
template <typename Scalar>
std::vector<CostRecord<Scalar>> run_experiment(const RadialNetwork<Scalar>& net,
                                               const AffineMaps<Scalar>& maps,
                                               const PriceSchedule<Scalar>& prices,
                                               const Scenario<Scalar>& scenario,
                                               const ExperimentConfig<Scalar>& cfg) {
  const int N = net.num_lines();
  if (scenario.nominal_p.size() != N || scenario.nominal_qc.size() != N)
    throw std::invalid_argument("run_experiment: scenario dimensions do not match the network");
  if (scenario.horizon < 1) throw std::invalid_argument("run_experiment: horizon must be >= 1");

  std::vector<CostRecord<Scalar>> records;
  records.reserve(static_cast<size_t>(scenario.horizon));

  auto st = init_controller(net, cfg.schedule);
  Vector<Scalar> det_prev = Vector<Scalar>::Zero(N);
  Vector<Scalar> ideal_prev = Vector<Scalar>::Zero(N);

  for (int t = 1; t <= scenario.horizon; ++t) {
    const auto draw = gen_gaussian(scenario, t);
    CostRecord<Scalar> rec;
    rec.t = t;

    if (cfg.controllers.stochastic) {
      const auto step = stochastic_step(st, net, maps, prices, draw.observed_p, draw.observed_qc, cfg.options);
      rec.stochastic = true_cost(net, prices, draw.true_p, draw.true_qc, step.setpoint, cfg.sweep_tol);
      rec.stochastic.exact = step.exact;
      rec.stochastic.held = step.held;
    }
    if (cfg.controllers.deterministic) {
      const auto d = deterministic_step(net, maps, prices, draw.observed_p, draw.observed_qc, cfg.options);
      const bool ok = d.status == PrimalStatus::optimal;
      const Vector<Scalar> sp = ok ? d.setpoint : det_prev;
      det_prev = sp;
      rec.deterministic = true_cost(net, prices, draw.true_p, draw.true_qc, sp, cfg.sweep_tol);
      rec.deterministic.exact = ok ? d.exact : false;
      rec.deterministic.held = !ok;
    }
    if (cfg.controllers.ideal) {
      const auto d = ideal_step(net, maps, prices, draw.true_p, draw.true_qc, cfg.options);
      const bool ok = d.status == PrimalStatus::optimal;
      const Vector<Scalar> sp = ok ? d.setpoint : ideal_prev;
      ideal_prev = sp;
      rec.ideal = true_cost(net, prices, draw.true_p, draw.true_qc, sp, cfg.sweep_tol);
      rec.ideal.exact = ok ? d.exact : false;
      rec.ideal.held = !ok;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

/// Per-interval means over Monte Carlo realizations. exact_* hold the
/// fraction of realizations whose solve was certified exact.
template <typename Scalar>
struct MeanCurvePoint {
  int t{0};
  Scalar cost_stochastic{std::numeric_limits<Scalar>::quiet_NaN()};
  Scalar cost_deterministic{std::numeric_limits<Scalar>::quiet_NaN()};
  Scalar cost_ideal{std::numeric_limits<Scalar>::quiet_NaN()};
  Scalar loss_stochastic{std::numeric_limits<Scalar>::quiet_NaN()};
  Scalar loss_deterministic{std::numeric_limits<Scalar>::quiet_NaN()};
  Scalar loss_ideal{std::numeric_limits<Scalar>::quiet_NaN()};
  Scalar exact_stochastic{0}, exact_deterministic{0}, exact_ideal{0};
  Scalar vmin_stochastic{std::numeric_limits<Scalar>::quiet_NaN()};
  Scalar vmax_stochastic{std::numeric_limits<Scalar>::quiet_NaN()};
  Scalar vmin_deterministic{std::numeric_limits<Scalar>::quiet_NaN()};
  Scalar vmax_deterministic{std::numeric_limits<Scalar>::quiet_NaN()};
  Scalar vmin_ideal{std::numeric_limits<Scalar>::quiet_NaN()};
  Scalar vmax_ideal{std::numeric_limits<Scalar>::quiet_NaN()};
};

template <typename Scalar>
struct MonteCarloResult {
  std::vector<std::vector<CostRecord<Scalar>>> realizations;
  std::vector<MeanCurvePoint<Scalar>> mean;
};

using MonteCarloResultd = MonteCarloResult<double>;

namespace detail {

template <typename Scalar>
std::vector<MeanCurvePoint<Scalar>> mean_curve(const std::vector<std::vector<CostRecord<Scalar>>>& runs) {
  std::vector<MeanCurvePoint<Scalar>> mean;
  if (runs.empty()) return mean;
  const size_t T = runs.front().size();
  mean.resize(T);
  auto fold = [&](size_t ti, auto get_eval, Scalar& cost, Scalar& loss, Scalar& exact, Scalar& vmin,
                  Scalar& vmax) {
    Scalar c{0}, l{0}, ex{0}, vl{0}, vh{0};
    int n_valid = 0, n_att = 0;
    for (const auto& run : runs) {
      const ControllerEval<Scalar>& ev = get_eval(run[ti]);
      if (!ev.attempted) continue;
      ++n_att;
      if (ev.exact) ex += Scalar(1);
      if (!ev.valid) continue;
      ++n_valid;
      c += ev.cost;
      l += ev.loss_pu;
      vl += ev.v_min_obs;
      vh += ev.v_max_obs;
    }
    if (n_att > 0) exact = ex / Scalar(n_att);
    if (n_valid > 0) {
      cost = c / Scalar(n_valid);
      loss = l / Scalar(n_valid);
      vmin = vl / Scalar(n_valid);
      vmax = vh / Scalar(n_valid);
    }
  };
  for (size_t ti = 0; ti < T; ++ti) {
    auto& mp = mean[ti];
    mp.t = runs.front()[ti].t;
    fold(ti, [](const CostRecord<Scalar>& r) -> const ControllerEval<Scalar>& { return r.stochastic; },
         mp.cost_stochastic, mp.loss_stochastic, mp.exact_stochastic, mp.vmin_stochastic, mp.vmax_stochastic);
    fold(ti, [](const CostRecord<Scalar>& r) -> const ControllerEval<Scalar>& { return r.deterministic; },
         mp.cost_deterministic, mp.loss_deterministic, mp.exact_deterministic, mp.vmin_deterministic,
         mp.vmax_deterministic);
    fold(ti, [](const CostRecord<Scalar>& r) -> const ControllerEval<Scalar>& { return r.ideal; },
         mp.cost_ideal, mp.loss_ideal, mp.exact_ideal, mp.vmin_ideal, mp.vmax_ideal);
  }
  return mean;
}

}  // namespace detail

/// Repeats the experiment over independent realization seeds (derived from
/// the scenario seed) and averages the cost curves. Realizations run in
/// parallel; results are reduced in realization order, so the output is
/// independent of the thread count.
template <typename Scalar>
MonteCarloResult<Scalar> run_monte_carlo(const RadialNetwork<Scalar>& net, const AffineMaps<Scalar>& maps,
                                         const PriceSchedule<Scalar>& prices, const Scenario<Scalar>& scenario,
                                         const ExperimentConfig<Scalar>& cfg, int realizations,
                                         int threads = 0) {
  if (realizations < 1) throw std::invalid_argument("run_monte_carlo: need at least one realization");
  MonteCarloResult<Scalar> out;
  out.realizations.resize(static_cast<size_t>(realizations));

  int hw = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  hw = std::min(hw, realizations);

  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= realizations) break;
      Scenario<Scalar> sc = scenario;
      sc.seed = detail::mix_seed(scenario.seed, 0x5EEDu + static_cast<std::uint64_t>(r));
      out.realizations[static_cast<size_t>(r)] = run_experiment(net, maps, prices, sc, cfg);
    }
  };
  if (hw == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(hw));
    for (int i = 0; i < hw; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  out.mean = detail::mean_curve(out.realizations);
  return out;
}

}  // namespace voltvar
