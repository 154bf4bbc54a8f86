#pragma once

#include <string>

#include "voltvar/network.hpp"

namespace voltvar {

/// Parses a feeder description from JSON text. Schema:
///   { "v0": number, "base_kva": number,
///     "buses": [{ "id", "parent", "kind", "p_c", "q_c", "p_g", "q_g_max",
///                 "v_min", "v_max" }],
///     "lines": [{ "child", "r", "x" }] }
/// All powers per-unit, voltages squared. Omitted v_min/v_max default to
/// 0.9025/1.1025; q_g_min is always -q_g_max.
RadialNetworkd parse_feeder(const std::string& json_text);

RadialNetworkd load_feeder(const std::string& path);

std::string serialize_feeder(const RadialNetworkd& net);

void save_feeder(const RadialNetworkd& net, const std::string& path);

}  // namespace voltvar
