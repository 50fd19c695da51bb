#ifndef AAP_REPORT_HPP
#define AAP_REPORT_HPP

#include "accel.hpp"

#include <json.hpp>

#include <cstdio>
#include <sstream>
#include <string>

namespace aap {

using nlohmann::json;

inline json to_json(const AccelConfig& c) {
  return {{"arch", to_string(c.arch)},   {"n_pe", c.n_pe},
          {"n_mul", c.n_mul},            {"n_par", c.n_par},
          {"n_group", c.n_group},        {"assign", to_string(c.assignment)},
          {"sync", to_string(c.sync)}};
}

inline AccelConfig config_from_json(const json& j) {
  AccelConfig c;
  c.arch = parse_arch(j.at("arch").get<std::string>());
  c.n_pe = j.at("n_pe").get<std::size_t>();
  c.n_mul = j.at("n_mul").get<std::size_t>();
  c.n_par = j.value("n_par", c.n_par);
  c.n_group = j.value("n_group", c.n_group);
  c.assignment = parse_assignment(j.value("assign", std::string("interleaved")));
  c.sync = parse_sync(j.value("sync", std::string("perfetch")));
  return c;
}

inline json to_json(const LayerReport& r) {
  return {{"name", r.name},       {"n_nonzero", r.n_nonzero}, {"n_padding", r.n_padding},
          {"n_mac", r.n_mac},     {"n_cycle", r.n_cycle},     {"utilization", r.utilization}};
}

inline LayerReport layer_report_from_json(const json& j) {
  LayerReport r;
  r.name = j.at("name").get<std::string>();
  r.n_nonzero = j.at("n_nonzero").get<std::uint64_t>();
  r.n_padding = j.value("n_padding", std::uint64_t{0});
  r.n_mac = j.value("n_mac", r.n_nonzero);
  r.n_cycle = j.at("n_cycle").get<std::uint64_t>();
  return r;
}

inline json to_json(const SimReport& r) {
  json layers = json::array();
  for (const auto& l : r.layers)
    layers.push_back(to_json(l));
  return {{"config", to_json(r.config)}, {"layers", layers}, {"total", to_json(r.total)}};
}

/// Reads a report. Utilization is always recomputed from the counts, and a
/// missing "total" is summed from the layers, so hand-written aggregate
/// reports (one layer row) are accepted.
inline SimReport report_from_json(const json& j) {
  SimReport r;
  r.config = config_from_json(j.at("config"));
  for (const auto& l : j.at("layers"))
    r.layers.push_back(layer_report_from_json(l));
  detail::finish_report(r);
  if (j.contains("total")) {
    LayerReport t = layer_report_from_json(j.at("total"));
    t.utilization = utilization(t, r.config);
    r.total = t;
  }
  return r;
}

inline std::string percent(double fraction, int digits = 2) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f%%", digits, fraction * 100.0);
  return buf;
}

inline std::string to_text(const SimReport& r) {
  std::ostringstream os;
  char line[256];
  os << "arch=" << to_string(r.config.arch) << " n_pe=" << r.config.n_pe << " n_mul=" << r.config.n_mul
     << " n_par=" << r.config.n_par << " n_group=" << r.config.n_group << " assign=" << to_string(r.config.assignment)
     << " sync=" << to_string(r.config.sync) << "\n";
  std::snprintf(line, sizeof line, "%-12s %14s %12s %16s %14s %12s\n", "layer", "n_nonzero", "n_padding", "n_mac",
                "n_cycle", "utilization");
  os << line;
  auto row = [&](const LayerReport& l) {
    std::snprintf(line, sizeof line, "%-12s %14llu %12llu %16llu %14llu %12s\n", l.name.c_str(),
                  static_cast<unsigned long long>(l.n_nonzero), static_cast<unsigned long long>(l.n_padding),
                  static_cast<unsigned long long>(l.n_mac), static_cast<unsigned long long>(l.n_cycle),
                  percent(l.utilization).c_str());
    os << line;
  };
  for (const auto& l : r.layers)
    row(l);
  row(r.total);
  return os.str();
}

inline std::string csv_header() {
  return "layer,arch,n_pe,n_mul,n_par,n_group,assign,sync,n_nonzero,n_padding,n_mac,n_cycle,utilization\n";
}

inline std::string to_csv_rows(const SimReport& r) {
  std::ostringstream os;
  os.precision(17);
  for (const auto& l : r.layers)
    os << l.name << ',' << to_string(r.config.arch) << ',' << r.config.n_pe << ',' << r.config.n_mul << ','
       << r.config.n_par << ',' << r.config.n_group << ',' << to_string(r.config.assignment) << ','
       << to_string(r.config.sync) << ',' << l.n_nonzero << ',' << l.n_padding << ',' << l.n_mac << ','
       << l.n_cycle << ',' << l.utilization << '\n';
  return os.str();
}

inline json to_json(const Comparison& c) {
  json rows = json::array();
  for (const auto& r : c.rows)
    rows.push_back({{"label", r.label},
                    {"n_cycle", r.n_cycle},
                    {"cycle_ratio", r.cycle_ratio},
                    {"cycle_delta_pct", r.cycle_delta_pct},
                    {"utilization", r.utilization},
                    {"utilization_delta_pp", r.utilization_delta_pp},
                    {"padding_ratio", r.padding_ratio}});
  return {{"baseline", c.rows.empty() ? "" : c.rows.front().label}, {"rows", rows}};
}

inline std::string to_text(const Comparison& c) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-20s %14s %10s %12s %12s %10s\n", "report", "n_cycle", "cycles", "utilization",
                "util delta", "padding");
  os << line;
  for (const auto& r : c.rows) {
    std::snprintf(line, sizeof line, "%-20s %14llu %+9.1f%% %12s %+9.1fpp %10s\n", r.label.c_str(),
                  static_cast<unsigned long long>(r.n_cycle), r.cycle_delta_pct, percent(r.utilization, 1).c_str(),
                  r.utilization_delta_pp, percent(r.padding_ratio, 1).c_str());
    os << line;
  }
  return os.str();
}

} // namespace aap

#endif
