#pragma once

// Report output: plot-ready long-format CSV, JSON lines, and the run manifest.

#include <cmath>
#include <ostream>
#include <string>
#include <string_view>

#include "json.hpp"
#include "rwre/envspec.hpp"
#include "rwre/experiments.hpp"

namespace rwre {

inline constexpr std::string_view kVersion = "0.1.0";

namespace detail {

inline std::string point_label(const GridPoint& p) {
  std::string s;
  for (const auto& [k, v] : p) {
    if (!s.empty()) s += ';';
    s += k + '=' + format_double(v);
  }
  return s;
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

// JSON has no inf/nan
inline nlohmann::json number(double x) {
  if (std::isfinite(x)) return x;
  return std::isnan(x) ? nlohmann::json("nan") : nlohmann::json(x > 0 ? "inf" : "-inf");
}

}  // namespace detail

inline void write_csv_header(std::ostream& os) {
  os << "experiment,spec,point,quantity,value,std_error,samples,predicted\n";
}

inline void write_csv(const ExperimentReport& r, std::ostream& os, bool header = true) {
  if (header) write_csv_header(os);
  for (const auto& m : r.rows) {
    os << detail::csv_field(r.id) << ',' << detail::csv_field(r.spec) << ','
       << detail::csv_field(detail::point_label(m.point)) << ',' << detail::csv_field(m.quantity) << ','
       << format_double(m.value) << ',' << format_double(m.std_error) << ',' << m.samples << ','
       << (m.predicted ? 1 : 0) << '\n';
  }
  for (const auto& v : r.verdicts) {
    os << detail::csv_field(r.id) << ',' << detail::csv_field(r.spec) << ",," << detail::csv_field("verdict:" + v.rule)
       << ',' << (v.pass ? 1 : 0) << ",0,0,0\n";
  }
}

inline nlohmann::json to_json(const Measurement& m) {
  nlohmann::json point = nlohmann::json::object();
  for (const auto& [k, v] : m.point) point[k] = detail::number(v);
  return {{"type", "measurement"}, {"point", point},          {"quantity", m.quantity},
          {"value", detail::number(m.value)},  {"std_error", detail::number(m.std_error)},
          {"samples", m.samples},   {"predicted", m.predicted}};
}

inline void write_jsonl(const ExperimentReport& r, std::ostream& os) {
  for (const auto& m : r.rows) {
    auto j = to_json(m);
    j["experiment"] = r.id;
    j["spec"] = r.spec;
    os << j.dump() << '\n';
  }
  for (const auto& v : r.verdicts)
    os << nlohmann::json{{"type", "verdict"}, {"experiment", r.id}, {"rule", v.rule}, {"pass", v.pass},
                         {"detail", v.detail}}
              .dump()
       << '\n';
}

/// Summary block for the manifest: counts, verdicts and notes.
inline nlohmann::json report_summary(const ExperimentReport& r) {
  nlohmann::json verdicts = nlohmann::json::array();
  for (const auto& v : r.verdicts) verdicts.push_back({{"rule", v.rule}, {"pass", v.pass}, {"detail", v.detail}});
  return {{"experiment", r.id}, {"spec", r.spec},           {"seed", r.seed},
          {"runs", r.runs},     {"censored", r.censored},   {"survival_resamples", r.resamples},
          {"verdicts", verdicts}, {"notes", r.notes}};
}

inline nlohmann::json spec_json(const EnvironmentSpec& spec) {
  const auto an = analyze(spec);
  return {{"config", serialize(spec)},
          {"analytics",
           {{"psi0", an.psi0},
            {"sigma2", an.sigma2},
            {"gamma_tilde", detail::number(an.gamma_tilde)},
            {"cramer_radius", detail::number(an.radius)},
            {"lambda_coeffs", an.lambda_coeffs},
            {"alpha", detail::number(spec.alpha())},
            {"alpha_surrogate", spec.alpha_is_surrogate()},
            {"lattice", spec.lattice}}}};
}

}  // namespace rwre
