#include "voltvar/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "voltvar/feeder_io.hpp"
#include "voltvar/relaxation.hpp"
#include "voltvar/trace.hpp"
#include "voltvar/trace_io.hpp"

namespace voltvar {

using nlohmann::json;

namespace {

std::vector<double> read_csv_numbers(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open \"" + path + "\"");
  std::vector<double> out;
  std::string tok;
  while (in) {
    int c = in.peek();
    if (c == EOF) break;
    if (c == ',' || std::isspace(c)) {
      in.get();
      continue;
    }
    double v;
    if (!(in >> v)) throw ConfigError("non-numeric data in \"" + path + "\"");
    out.push_back(v);
    while (in.peek() == ',' || std::isspace(in.peek())) in.get();
  }
  return out;
}

ControllerSelection selection_from(const std::vector<std::string>& names) {
  ControllerSelection sel{false, false, false};
  for (const auto& n : names) {
    if (n == "stochastic")
      sel.stochastic = true;
    else if (n == "deterministic")
      sel.deterministic = true;
    else if (n == "ideal")
      sel.ideal = true;
    else
      throw ConfigError("unknown controller \"" + n + "\"");
  }
  if (!sel.stochastic && !sel.deterministic && !sel.ideal)
    throw ConfigError("at least one controller must be selected");
  return sel;
}

StepSizeScheduled schedule_from(const RunConfig& cfg) {
  StepSizeScheduled s;
  if (cfg.eta_override > 0) {
    // A fixed step size is the constant-horizon schedule with D/L*sqrt(T)
    // collapsed to the requested value.
    s.kind = ScheduleKind::constant_horizon;
    s.D = cfg.eta_override;
    s.L = 1;
    s.T = 1;
    return s;
  }
  s.kind = schedule_kind_from_string(cfg.schedule_kind);
  s.D = cfg.D;
  s.L = cfg.L;
  s.beta = cfg.beta;
  s.T = cfg.schedule_T > 0 ? cfg.schedule_T : cfg.horizon;
  return s;
}

void append_eval_columns(std::ostringstream& os, const ControllerEval<double>& ev) {
  auto num = [&](double v) {
    if (std::isfinite(v))
      os << ',' << std::setprecision(12) << v;
    else
      os << ',';
  };
  num(ev.cost);
  num(ev.loss_pu);
  os << ',' << (ev.exact ? 1 : 0);
  num(ev.v_min_obs);
  num(ev.v_max_obs);
}

void append_mean_columns(std::ostringstream& os, double cost, double loss, double exact_frac, double vmin,
                         double vmax) {
  auto num = [&](double v) {
    if (std::isfinite(v))
      os << ',' << std::setprecision(12) << v;
    else
      os << ',';
  };
  num(cost);
  num(loss);
  os << ',' << std::setprecision(12) << exact_frac;
  num(vmin);
  num(vmax);
}

int count_warnings(const std::vector<CostRecord<double>>& run) {
  int w = 0;
  for (const auto& r : run) {
    for (const ControllerEval<double>* ev : {&r.stochastic, &r.deterministic, &r.ideal}) {
      if (!ev->attempted) continue;
      if (!ev->valid || ev->held || !ev->exact) ++w;
    }
  }
  return w;
}

double steady_state_mean(const std::vector<MeanCurvePoint<double>>& mean,
                         double MeanCurvePoint<double>::*field) {
  if (mean.empty()) return std::numeric_limits<double>::quiet_NaN();
  const size_t T = mean.size();
  const size_t window = std::max<size_t>(1, T / 4);
  double acc = 0;
  size_t count = 0;
  for (size_t i = T - window; i < T; ++i) {
    const double v = mean[i].*field;
    if (std::isfinite(v)) {
      acc += v;
      ++count;
    }
  }
  return count ? acc / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

std::string costs_csv_header(const ControllerSelection& sel) {
  std::string h = "t";
  auto block = [&](const std::string& name) {
    h += ",cost_" + name + ",loss_pu_" + name + ",exact_" + name + ",vmin_" + name + ",vmax_" + name;
  };
  if (sel.stochastic) block("stochastic");
  if (sel.deterministic) block("deterministic");
  if (sel.ideal) block("ideal");
  return h;
}

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& err) {
    throw ConfigError(std::string("config JSON parse error: ") + err.what());
  }
  RunConfig cfg;
  try {
    cfg.feeder_path = j.at("feeder").get<std::string>();
    cfg.mode = j.value("mode", cfg.mode);
    if (j.contains("scenario")) {
      const auto& s = j["scenario"];
      cfg.noise_sigma = s.value("noise_sigma", cfg.noise_sigma);
      cfg.horizon = s.value("horizon", cfg.horizon);
      cfg.interval_seconds = s.value("interval_seconds", cfg.interval_seconds);
      cfg.delay_intervals = s.value("delay_intervals", cfg.delay_intervals);
      cfg.seed = s.value("seed", cfg.seed);
    }
    cfg.trace_path = j.value("trace", cfg.trace_path);
    if (j.contains("controllers")) cfg.controllers = j["controllers"].get<std::vector<std::string>>();
    if (j.contains("schedule")) {
      const auto& s = j["schedule"];
      cfg.schedule_kind = s.value("kind", cfg.schedule_kind);
      cfg.D = s.value("D", cfg.D);
      cfg.L = s.value("L", cfg.L);
      cfg.beta = s.value("beta", cfg.beta);
      cfg.schedule_T = s.value("T", cfg.schedule_T);
      cfg.eta_override = s.value("eta", cfg.eta_override);
    }
    if (j.contains("prices")) {
      const auto& s = j["prices"];
      cfg.c0_tilde = s.value("c0_tilde", cfg.c0_tilde);
      cfg.support_price_ratio = s.value("support_ratio", cfg.support_price_ratio);
    }
    cfg.realizations = j.value("realizations", cfg.realizations);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    cfg.save_realizations = j.value("save_realizations", cfg.save_realizations);
    cfg.threads = j.value("threads", cfg.threads);
    if (j.contains("solver")) {
      cfg.ipm_tol = j["solver"].value("tol", cfg.ipm_tol);
      cfg.ipm_max_iter = j["solver"].value("max_iter", cfg.ipm_max_iter);
    }
  } catch (const json::exception& err) {
    throw ConfigError(std::string("config error: ") + err.what());
  }
  if (cfg.realizations < 1) throw ConfigError("realizations must be >= 1");
  if (cfg.mode != "gaussian" && cfg.mode != "trace") throw ConfigError("mode must be gaussian or trace");
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file \"" + path + "\"");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

RunOutput run(const RunConfig& cfg) {
  RadialNetworkd net;
  try {
    net = load_feeder(cfg.feeder_path);
  } catch (const std::invalid_argument& err) {
    throw ConfigError(err.what());
  }
  const auto maps = build_maps(net);
  const auto prices = uniform_price_schedule(net, cfg.c0_tilde, cfg.support_price_ratio);
  const auto sel = selection_from(cfg.controllers);

  ExperimentConfigd ecfg;
  ecfg.controllers = sel;
  ecfg.schedule = schedule_from(cfg);
  ecfg.options.ipm.tol = cfg.ipm_tol;
  ecfg.options.ipm.max_iter = cfg.ipm_max_iter;

  std::filesystem::create_directories(cfg.output_dir);
  const std::string costs_path = (std::filesystem::path(cfg.output_dir) / "costs.csv").string();
  const std::string summary_path = (std::filesystem::path(cfg.output_dir) / "summary.json").string();

  std::vector<std::vector<CostRecord<double>>> runs;
  if (cfg.mode == "trace") {
    if (cfg.trace_path.empty()) throw ConfigError("trace mode needs a trace file");
    TraceDatad trace;
    try {
      trace = load_trace_csv(cfg.trace_path, net);
    } catch (const std::invalid_argument& err) {
      throw ConfigError(err.what());
    }
    const auto res = resample_zoh(trace, cfg.interval_seconds);
    const int horizon = cfg.horizon > 0 ? std::min(cfg.horizon, res.samples()) : res.samples();
    runs.push_back(run_experiment_trace(net, maps, prices, res, horizon, cfg.delay_intervals, ecfg));
  } else {
    Scenariod sc;
    sc.nominal_p = net.nominal_p();
    sc.nominal_qc = net.nominal_qc();
    sc.noise_sigma = cfg.noise_sigma;
    sc.horizon = cfg.horizon;
    sc.interval_seconds = cfg.interval_seconds;
    sc.delay_intervals = cfg.delay_intervals;
    sc.seed = cfg.seed;
    if (cfg.realizations == 1) {
      runs.push_back(run_experiment(net, maps, prices, sc, ecfg));
    } else {
      auto mc = run_monte_carlo(net, maps, prices, sc, ecfg, cfg.realizations, cfg.threads);
      runs = std::move(mc.realizations);
    }
  }

  const auto mean = detail::mean_curve(runs);

  // costs.csv holds the single run, or the mean curve in Monte Carlo mode.
  {
    std::ofstream out(costs_path);
    if (!out) throw ConfigError("cannot write \"" + costs_path + "\"");
    out << costs_csv_header(sel) << "\n";
    if (runs.size() == 1) {
      for (const auto& rec : runs.front()) {
        std::ostringstream os;
        os << rec.t;
        if (sel.stochastic) append_eval_columns(os, rec.stochastic);
        if (sel.deterministic) append_eval_columns(os, rec.deterministic);
        if (sel.ideal) append_eval_columns(os, rec.ideal);
        out << os.str() << "\n";
      }
    } else {
      for (const auto& mp : mean) {
        std::ostringstream os;
        os << mp.t;
        if (sel.stochastic)
          append_mean_columns(os, mp.cost_stochastic, mp.loss_stochastic, mp.exact_stochastic,
                              mp.vmin_stochastic, mp.vmax_stochastic);
        if (sel.deterministic)
          append_mean_columns(os, mp.cost_deterministic, mp.loss_deterministic, mp.exact_deterministic,
                              mp.vmin_deterministic, mp.vmax_deterministic);
        if (sel.ideal)
          append_mean_columns(os, mp.cost_ideal, mp.loss_ideal, mp.exact_ideal, mp.vmin_ideal, mp.vmax_ideal);
        out << os.str() << "\n";
      }
    }
  }
  if (cfg.save_realizations && runs.size() > 1) {
    for (size_t r = 0; r < runs.size(); ++r) {
      std::ostringstream name;
      name << "costs_r" << std::setw(3) << std::setfill('0') << r << ".csv";
      std::ofstream out((std::filesystem::path(cfg.output_dir) / name.str()).string());
      out << costs_csv_header(sel) << "\n";
      for (const auto& rec : runs[r]) {
        std::ostringstream os;
        os << rec.t;
        if (sel.stochastic) append_eval_columns(os, rec.stochastic);
        if (sel.deterministic) append_eval_columns(os, rec.deterministic);
        if (sel.ideal) append_eval_columns(os, rec.ideal);
        out << os.str() << "\n";
      }
    }
  }

  int warnings = 0;
  for (const auto& r : runs) warnings += count_warnings(r);

  const double ss_sto = steady_state_mean(mean, &MeanCurvePoint<double>::cost_stochastic);
  const double ss_det = steady_state_mean(mean, &MeanCurvePoint<double>::cost_deterministic);
  const double ss_ideal = steady_state_mean(mean, &MeanCurvePoint<double>::cost_ideal);

  // First interval whose mean stochastic cost is within 10% of steady state.
  int convergence_t = -1;
  if (sel.stochastic && std::isfinite(ss_sto)) {
    for (const auto& mp : mean) {
      if (std::isfinite(mp.cost_stochastic) && mp.cost_stochastic <= 1.1 * ss_sto) {
        convergence_t = mp.t;
        break;
      }
    }
  }

  json summary;
  summary["mode"] = cfg.mode;
  summary["feeder"] = cfg.feeder_path;
  summary["realizations"] = static_cast<int>(runs.size());
  summary["horizon"] = runs.empty() ? 0 : static_cast<int>(runs.front().size());
  summary["currency_unit"] = "currency/h (same unit as c0_tilde per kWh)";
  summary["steady_state_window"] = "last quarter of the horizon";
  json ss;
  if (sel.stochastic) ss["stochastic"] = ss_sto;
  if (sel.deterministic) ss["deterministic"] = ss_det;
  if (sel.ideal) ss["ideal"] = ss_ideal;
  summary["mean_steady_state_cost"] = ss;
  json savings;
  if (sel.stochastic && sel.deterministic) savings["deterministic_minus_stochastic"] = ss_det - ss_sto;
  if (sel.stochastic && sel.ideal) savings["stochastic_minus_ideal"] = ss_sto - ss_ideal;
  if (sel.deterministic && sel.ideal) savings["deterministic_minus_ideal"] = ss_det - ss_ideal;
  summary["savings"] = savings;
  summary["convergence_interval"] = convergence_t;
  summary["warnings"] = warnings;

  std::ofstream out(summary_path);
  if (!out) throw ConfigError("cannot write \"" + summary_path + "\"");
  out << summary.dump(2) << "\n";

  RunOutput ro;
  ro.warnings = warnings;
  ro.costs_csv_path = costs_path;
  ro.summary_json_path = summary_path;
  return ro;
}

std::string validate_feeder_report(const std::string& feeder_path) {
  RadialNetworkd net;
  try {
    net = load_feeder(feeder_path);
  } catch (const std::invalid_argument& err) {
    throw ConfigError(err.what());
  }
  std::ostringstream os;
  os << "feeder: " << feeder_path << "\n";
  os << "buses: " << net.num_buses() << " (substation + " << net.num_lines() << ")\n";
  os << "tree: rooted, acyclic, connected\n";
  const auto ctrl = net.controllable_buses();
  os << "controllable buses (" << ctrl.size() << "):";
  for (int n : ctrl) os << " " << n << " [|q| <= " << net.q_hi[n - 1] << "]";
  os << "\n";
  os << "voltage limits (squared): [" << net.v_min.minCoeff() << ", " << net.v_max.maxCoeff() << "]\n";
  os << "base: " << net.base_kva << " kVA, v0 = " << net.v0 << "\n";
  os << "nominal net load: p = " << -net.nominal_p().sum() << " pu, qc = " << net.nominal_qc().sum()
     << " pu\n";
  return os.str();
}

std::string certify_report(const std::string& feeder_path, const std::string& p_csv_path,
                           const std::string& q_csv_path, double ipm_tol) {
  RadialNetworkd net;
  try {
    net = load_feeder(feeder_path);
  } catch (const std::invalid_argument& err) {
    throw ConfigError(err.what());
  }
  const int N = net.num_lines();
  const auto pv = read_csv_numbers(p_csv_path);
  const auto qv = read_csv_numbers(q_csv_path);
  if (static_cast<int>(pv.size()) != N || static_cast<int>(qv.size()) != N)
    throw ConfigError("injection files must hold exactly " + std::to_string(N) + " values");
  Vectord p = Eigen::Map<const Vectord>(pv.data(), N);
  Vectord q = Eigen::Map<const Vectord>(qv.data(), N);

  const auto maps = build_maps(net);
  IpmOptionsd opt;
  opt.tol = ipm_tol;
  const auto sol = solve_primal(maps, net, p, q, opt);

  json rep;
  rep["feeder"] = feeder_path;
  rep["status"] = to_string(sol.status);
  if (sol.status == PrimalStatus::optimal) {
    rep["loss_pu"] = sol.value;
    const auto cert = exactness_certificate(maps, net, p, sol.z, sol.dual);
    rep["exact_by_gap"] = cert.exact_by_gap;
    rep["max_cone_gap"] = cert.max_gap;
    rep["mu_all_positive"] = cert.mu_all_positive;
    rep["min_mu"] = cert.min_mu;
    rep["tol_cone"] = cert.tol_cone;
    rep["tol_mu"] = cert.tol_mu;
    json gaps = json::array();
    for (int n = 0; n < N; ++n) gaps.push_back(cert.gaps[n]);
    rep["cone_gaps"] = gaps;
    rep["duality_gap"] = sol.raw.gap;
  }
  const auto probe = strict_feasibility_probe(maps, net, p, q, opt);
  rep["strict_feasibility"] = {{"status", to_string(probe.status)},
                               {"min_cone_slack", probe.margin},
                               {"certified", probe.status == PrimalStatus::optimal && probe.margin > 0}};
  return rep.dump(2);
}

}  // namespace voltvar
