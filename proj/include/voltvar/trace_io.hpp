#pragma once

#include <string>

#include "voltvar/network.hpp"
#include "voltvar/trace.hpp"

namespace voltvar {

/// Reads a trace CSV with header `timestamp,bus,kind,value_pu`,
/// kind in {pg, pc, qc}, timestamps ISO-8601 (UTC) or integer seconds at a
/// fixed cadence. Cells without a sample keep the feeder's static values.
TraceDatad load_trace_csv(const std::string& path, const RadialNetworkd& net);

TraceDatad parse_trace_csv(const std::string& csv_text, const RadialNetworkd& net);

}  // namespace voltvar
