#include "retcap/report.hpp"

#include <charconv>
#include <cmath>
#include <ostream>

namespace retcap {

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  // Shortest round-trip digits; plain notation for moderate magnitudes.
  char buf[400];
  const double ax = std::fabs(x);
  const auto fmt = ax == 0.0 || (ax >= 1e-5 && ax < 1e16) ? std::chars_format::fixed
                                                           : std::chars_format::scientific;
  const auto r = std::to_chars(buf, buf + sizeof buf, x, fmt);
  return std::string(buf, r.ptr);
}

void write_csv(std::ostream& os, const Table& t, const Metadata& meta) {
  for (const auto& [k, v] : meta) os << "# " << k << '=' << v << '\n';
  for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << t.columns[i];
  os << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << format_double(row[i]);
    os << '\n';
  }
}

nlohmann::json params_json(const ModelParams& p) {
  return {{"mu", p.mu}, {"sigma", p.sigma}, {"lambda", p.lambda}, {"delta", p.delta},
          {"c", p.c},   {"R", p.R},         {"K", p.K},           {"alpha", p.alpha},
          {"L", p.L},   {"W0", p.W0}};
}

Metadata params_metadata(const ModelParams& p) {
  return {{"mu", format_double(p.mu)},       {"sigma", format_double(p.sigma)},
          {"lambda", format_double(p.lambda)}, {"delta", format_double(p.delta)},
          {"c", format_double(p.c)},           {"R", format_double(p.R)},
          {"K", format_double(p.K)},           {"alpha", format_double(p.alpha)},
          {"L", format_double(p.L)},           {"W0", format_double(p.W0)}};
}

}  // namespace retcap
