#include "voltvar/trace_io.hpp"

#include <algorithm>
#include <cctype>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <vector>

namespace voltvar {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

// ISO-8601 "YYYY-MM-DDTHH:MM:SS[Z]" (treated as UTC) or plain integer seconds.
long long parse_timestamp(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty()) throw std::invalid_argument("trace: empty timestamp");
  if (s.find_first_not_of("0123456789-") == std::string::npos && s.find('-') == std::string::npos)
    return std::stoll(s);
  std::tm tm{};
  std::istringstream ss(s);
  ss >> std::get_time(&tm, "%Y-%m-%dT%H:%M:%S");
  if (ss.fail()) throw std::invalid_argument("trace: cannot parse timestamp \"" + s + "\"");
  return static_cast<long long>(timegm(&tm));
}

}  // namespace

TraceDatad parse_trace_csv(const std::string& csv_text, const RadialNetworkd& net) {
  const int N = net.num_lines();
  std::istringstream in(csv_text);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("trace: empty file");
  {
    std::string header = trim(line);
    if (header != "timestamp,bus,kind,value_pu")
      throw std::invalid_argument("trace: expected header timestamp,bus,kind,value_pu, got \"" + header + "\"");
  }

  struct Sample {
    int bus;
    int kind;  // 0 pg, 1 pc, 2 qc
    double value;
  };
  std::map<long long, std::vector<Sample>> by_time;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string row = trim(line);
    if (row.empty()) continue;
    std::istringstream ls(row);
    std::string ts, bus_s, kind_s, val_s;
    if (!std::getline(ls, ts, ',') || !std::getline(ls, bus_s, ',') || !std::getline(ls, kind_s, ',') ||
        !std::getline(ls, val_s, ','))
      throw std::invalid_argument("trace: malformed row at line " + std::to_string(lineno));
    Sample smp;
    smp.bus = std::stoi(trim(bus_s));
    if (smp.bus < 1 || smp.bus > N)
      throw std::invalid_argument("trace: bus " + std::to_string(smp.bus) + " out of range at line " +
                                  std::to_string(lineno));
    const std::string kind = trim(kind_s);
    if (kind == "pg")
      smp.kind = 0;
    else if (kind == "pc")
      smp.kind = 1;
    else if (kind == "qc")
      smp.kind = 2;
    else
      throw std::invalid_argument("trace: unknown kind \"" + kind + "\" at line " + std::to_string(lineno));
    smp.value = std::stod(trim(val_s));
    by_time[parse_timestamp(ts)].push_back(smp);
  }
  if (by_time.empty()) throw std::invalid_argument("trace: no samples");

  // Fixed cadence across consecutive timestamps.
  std::vector<long long> times;
  times.reserve(by_time.size());
  for (const auto& kv : by_time) times.push_back(kv.first);
  long long cadence = times.size() > 1 ? times[1] - times[0] : 0;
  for (size_t i = 2; i < times.size(); ++i) {
    if (times[i] - times[i - 1] != cadence)
      throw std::invalid_argument("trace: non-uniform cadence between samples " + std::to_string(i - 1) +
                                  " and " + std::to_string(i));
  }
  if (times.size() > 1 && cadence <= 0) throw std::invalid_argument("trace: non-increasing timestamps");

  TraceDatad trace;
  trace.cadence_seconds = times.size() > 1 ? static_cast<double>(cadence) : 60.0;
  const int S = static_cast<int>(times.size());
  trace.pg.resize(S, N);
  trace.pc.resize(S, N);
  trace.qc.resize(S, N);
  for (int n = 1; n <= N; ++n) {
    trace.pg.col(n - 1).setConstant(net.buses[n].p_g);
    trace.pc.col(n - 1).setConstant(net.buses[n].p_c);
    trace.qc.col(n - 1).setConstant(net.buses[n].q_c);
  }
  for (int i = 0; i < S; ++i) {
    for (const auto& smp : by_time[times[static_cast<size_t>(i)]]) {
      if (smp.kind == 0)
        trace.pg(i, smp.bus - 1) = smp.value;
      else if (smp.kind == 1)
        trace.pc(i, smp.bus - 1) = smp.value;
      else
        trace.qc(i, smp.bus - 1) = smp.value;
    }
  }
  trace.validate(N);
  return trace;
}

TraceDatad load_trace_csv(const std::string& path, const RadialNetworkd& net) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open trace file \"" + path + "\"");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_trace_csv(ss.str(), net);
}

}  // namespace voltvar
