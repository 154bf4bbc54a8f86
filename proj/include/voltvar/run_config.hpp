#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "voltvar/sim.hpp"

namespace voltvar {

/// Raised for configuration and file problems; the CLI maps it to exit 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string feeder_path;
  std::string mode{"gaussian"};  // gaussian | trace

  // Gaussian scenario parameters.
  double noise_sigma{0.3};
  int horizon{120};
  double interval_seconds{30};
  int delay_intervals{1};
  std::uint64_t seed{1};

  // Trace mode.
  std::string trace_path;

  std::vector<std::string> controllers{"stochastic", "deterministic", "ideal"};

  // Step-size schedule; nonpositive D/L select the box default and the
  // running-max estimate.
  std::string schedule_kind{"decaying"};
  double D{-1};
  double L{-1};
  double beta{1};
  int schedule_T{-1};
  // Fixed step-size override: eta_t = eta for all t.
  double eta_override{-1};

  // Prices.
  double c0_tilde{6.6};
  double support_price_ratio{1.0 / 80.0};

  int realizations{1};
  std::string output_dir{"."};
  bool save_realizations{false};
  int threads{0};

  double ipm_tol{1e-8};
  int ipm_max_iter{100};
};

RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);

struct RunOutput {
  int warnings{0};
  std::string costs_csv_path;
  std::string summary_json_path;
};

/// Executes a configured experiment and writes costs.csv and summary.json
/// under the configured output directory. Throws ConfigError for bad
/// configuration or unreadable files.
RunOutput run(const RunConfig& cfg);

/// Network invariants report for `voltvar validate`.
std::string validate_feeder_report(const std::string& feeder_path);

/// One-shot exactness and strict-feasibility report for `voltvar certify`.
std::string certify_report(const std::string& feeder_path, const std::string& p_csv_path,
                           const std::string& q_csv_path, double ipm_tol = 1e-8);

/// The fixed costs.csv header for a controller selection.
std::string costs_csv_header(const ControllerSelection& sel);

}  // namespace voltvar
