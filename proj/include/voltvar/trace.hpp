#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <vector>

#include "voltvar/sim.hpp"

namespace voltvar {

/// Per-bus time series of generation and demand at a fixed cadence. Columns
/// follow the non-root bus order (bus n at column n-1).
template <typename Scalar>
struct TraceData {
  Matrix<Scalar> pg, pc, qc;  // samples x N
  Scalar cadence_seconds{60};

  int samples() const { return static_cast<int>(pg.rows()); }

  void validate(int n_bus) const {
    if (pg.cols() != n_bus || pc.cols() != n_bus || qc.cols() != n_bus)
      throw std::invalid_argument("trace: column count must match the non-root bus count");
    if (pg.rows() != pc.rows() || pg.rows() != qc.rows())
      throw std::invalid_argument("trace: series lengths differ");
    if (!(cadence_seconds > Scalar(0))) throw std::invalid_argument("trace: cadence must be positive");
    if (!pg.allFinite() || !pc.allFinite() || !qc.allFinite())
      throw std::invalid_argument("trace: values must be finite");
  }
};

using TraceDatad = TraceData<double>;

/// Zero-order-hold resample onto the control cadence.
template <typename Scalar>
TraceData<Scalar> resample_zoh(const TraceData<Scalar>& trace, Scalar interval_seconds) {
  if (!(interval_seconds > Scalar(0))) throw std::invalid_argument("resample: interval must be positive");
  const int S = trace.samples();
  const int out_samples = static_cast<int>(static_cast<double>(S) * static_cast<double>(trace.cadence_seconds) /
                                           static_cast<double>(interval_seconds));
  TraceData<Scalar> out;
  out.cadence_seconds = interval_seconds;
  out.pg.resize(out_samples, trace.pg.cols());
  out.pc.resize(out_samples, trace.pc.cols());
  out.qc.resize(out_samples, trace.qc.cols());
  for (int i = 0; i < out_samples; ++i) {
    int src = static_cast<int>(static_cast<double>(i) * static_cast<double>(interval_seconds) /
                               static_cast<double>(trace.cadence_seconds));
    src = std::min(src, S - 1);
    out.pg.row(i) = trace.pg.row(src);
    out.pc.row(i) = trace.pc.row(src);
    out.qc.row(i) = trace.qc.row(src);
  }
  return out;
}

/// Interval loop driven by a recorded trace (already at the control cadence);
/// observations are the true rows delayed by delay_intervals, clamped to the
/// first row at the start.
template <typename Scalar>
std::vector<CostRecord<Scalar>> run_experiment_trace(const RadialNetwork<Scalar>& net,
                                                     const AffineMaps<Scalar>& maps,
                                                     const PriceSchedule<Scalar>& prices,
                                                     const TraceData<Scalar>& trace, int horizon,
                                                     int delay_intervals,
                                                     const ExperimentConfig<Scalar>& cfg) {
  const int N = net.num_lines();
  trace.validate(N);
  if (horizon < 1) throw std::invalid_argument("run_experiment_trace: horizon must be >= 1");
  if (trace.samples() < horizon)
    throw std::invalid_argument("run_experiment_trace: trace shorter than the requested horizon (" +
                                std::to_string(trace.samples()) + " < " + std::to_string(horizon) + ")");
  if (delay_intervals < 0) throw std::invalid_argument("run_experiment_trace: negative delay");

  auto injections_at = [&](int row) {
    std::pair<Vector<Scalar>, Vector<Scalar>> out;
    out.first = (trace.pg.row(row) - trace.pc.row(row)).transpose();
    out.second = trace.qc.row(row).transpose();
    return out;
  };

  std::vector<CostRecord<Scalar>> records;
  records.reserve(static_cast<size_t>(horizon));
  auto st = init_controller(net, cfg.schedule);
  Vector<Scalar> det_prev = Vector<Scalar>::Zero(N);
  Vector<Scalar> ideal_prev = Vector<Scalar>::Zero(N);

  for (int t = 1; t <= horizon; ++t) {
    const auto tru = injections_at(t - 1);
    const auto obs = injections_at(std::max(0, t - 1 - delay_intervals));
    CostRecord<Scalar> rec;
    rec.t = t;
    if (cfg.controllers.stochastic) {
      const auto step = stochastic_step(st, net, maps, prices, obs.first, obs.second, cfg.options);
      rec.stochastic = true_cost(net, prices, tru.first, tru.second, step.setpoint, cfg.sweep_tol);
      rec.stochastic.exact = step.exact;
      rec.stochastic.held = step.held;
    }
    if (cfg.controllers.deterministic) {
      const auto d = deterministic_step(net, maps, prices, obs.first, obs.second, cfg.options);
      const bool ok = d.status == PrimalStatus::optimal;
      const Vector<Scalar> sp = ok ? d.setpoint : det_prev;
      det_prev = sp;
      rec.deterministic = true_cost(net, prices, tru.first, tru.second, sp, cfg.sweep_tol);
      rec.deterministic.exact = ok ? d.exact : false;
      rec.deterministic.held = !ok;
    }
    if (cfg.controllers.ideal) {
      const auto d = ideal_step(net, maps, prices, tru.first, tru.second, cfg.options);
      const bool ok = d.status == PrimalStatus::optimal;
      const Vector<Scalar> sp = ok ? d.setpoint : ideal_prev;
      ideal_prev = sp;
      rec.ideal = true_cost(net, prices, tru.first, tru.second, sp, cfg.sweep_tol);
      rec.ideal.exact = ok ? d.exact : false;
      rec.ideal.held = !ok;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace voltvar
