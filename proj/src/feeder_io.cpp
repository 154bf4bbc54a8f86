#include "voltvar/feeder_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace voltvar {

using nlohmann::json;

RadialNetworkd parse_feeder(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& err) {
    throw std::invalid_argument(std::string("feeder JSON parse error: ") + err.what());
  }

  std::vector<Bus<double>> buses;
  for (const auto& jb : j.at("buses")) {
    Bus<double> b;
    b.id = jb.at("id").get<int>();
    b.parent = jb.contains("parent") && !jb["parent"].is_null() ? jb["parent"].get<int>() : -1;
    b.kind = bus_kind_from_string(jb.value("kind", b.id == 0 ? std::string("substation") : std::string("load")));
    b.p_c = jb.value("p_c", 0.0);
    b.q_c = jb.value("q_c", 0.0);
    b.p_g = jb.value("p_g", 0.0);
    b.q_g_max = jb.value("q_g_max", 0.0);
    b.q_g_min = -b.q_g_max;
    buses.push_back(b);
  }

  std::vector<Line<double>> lines;
  for (const auto& jl : j.at("lines")) {
    Line<double> l;
    l.child = jl.at("child").get<int>();
    l.r = jl.at("r").get<double>();
    l.x = jl.at("x").get<double>();
    lines.push_back(l);
  }

  const int N = static_cast<int>(buses.size()) - 1;
  Vectord v_min = Vectord::Constant(std::max(N, 0), kDefaultVminSq);
  Vectord v_max = Vectord::Constant(std::max(N, 0), kDefaultVmaxSq);
  for (const auto& jb : j.at("buses")) {
    const int id = jb.at("id").get<int>();
    if (id < 1 || id > N) continue;
    if (jb.contains("v_min")) v_min[id - 1] = jb["v_min"].get<double>();
    if (jb.contains("v_max")) v_max[id - 1] = jb["v_max"].get<double>();
  }

  const double v0 = j.value("v0", 1.0);
  const double base_kva = j.value("base_kva", 1000.0);
  return build_network(std::move(buses), std::move(lines), v0, v_min, v_max, base_kva);
}

RadialNetworkd load_feeder(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open feeder file \"" + path + "\"");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_feeder(ss.str());
}

std::string serialize_feeder(const RadialNetworkd& net) {
  json j;
  j["v0"] = net.v0;
  j["base_kva"] = net.base_kva;
  j["buses"] = json::array();
  for (const auto& b : net.buses) {
    json jb;
    jb["id"] = b.id;
    if (b.parent >= 0)
      jb["parent"] = b.parent;
    else
      jb["parent"] = nullptr;
    jb["kind"] = to_string(b.kind);
    jb["p_c"] = b.p_c;
    jb["q_c"] = b.q_c;
    jb["p_g"] = b.p_g;
    jb["q_g_max"] = b.q_g_max;
    if (b.id >= 1) {
      jb["v_min"] = net.v_min[b.id - 1];
      jb["v_max"] = net.v_max[b.id - 1];
    }
    j["buses"].push_back(jb);
  }
  j["lines"] = json::array();
  for (const auto& l : net.lines) {
    j["lines"].push_back({{"child", l.child}, {"r", l.r}, {"x", l.x}});
  }
  return j.dump(2);
}

void save_feeder(const RadialNetworkd& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write feeder file \"" + path + "\"");
  out << serialize_feeder(net) << "\n";
}

}  // namespace voltvar
