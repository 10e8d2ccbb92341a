#include "retcap/model.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>

#include "retcap/errors.hpp"

namespace retcap {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

}  // namespace

void ModelParams::validate() const {
  require(std::isfinite(mu) && mu >= 0.0, "mu must be finite and >= 0");
  require(std::isfinite(sigma) && sigma > 0.0, "sigma must be > 0");
  require(std::isfinite(lambda) && lambda > 0.0, "lambda must be > 0");
  require(std::isfinite(delta) && delta >= 0.0, "delta must be >= 0");
  require(std::isfinite(c) && c >= 0.0, "c must be >= 0");
  require(R > 0.0 && R < 1.0, "R must lie in (0, 1)");
  require(std::isfinite(K) && K >= 0.0, "K must be >= 0");
  require(alpha >= 0.0 && alpha < 1.0, "alpha must lie in [0, 1)");
  require(std::isfinite(L) && L > 0.0, "L must be > 0");
  require(std::isfinite(W0) && W0 > 0.0, "W0 must be > 0");
}

DerivedConstants derive_constants(const ModelParams& p) {
  p.validate();
  DerivedConstants d{};
  const double s2 = p.sigma * p.sigma;
  const double disc_rate = p.lambda + p.delta;
  d.kappa = p.mu * p.mu / (2.0 * s2);
  d.rho = (1.0 - p.R) * d.kappa / p.R;
  // beta2 has no cancellation; beta1 follows from the product of the roots.
  const double root = std::sqrt(p.mu * p.mu + 2.0 * disc_rate * s2);
  d.beta2 = -(p.mu + root) / (s2 * p.L);
  d.beta1 = 2.0 * disc_rate / (p.L * (p.mu + root));
  d.merton_fraction = p.mu / (p.R * s2);
  d.w_L = p.mu > 0.0 ? p.L * p.R * s2 / p.mu : std::numeric_limits<double>::infinity();
  d.assumption_a_slack = disc_rate - (d.rho - p.c * (1.0 - p.R));
  return d;
}

AssumptionCheck check_assumption_a(const ModelParams& p) {
  const double slack = derive_constants(p).assumption_a_slack;
  return {slack > 0.0, slack};
}

double crra_utility(double W, double R) {
  if (!(R > 0.0 && R < 1.0)) throw ValidationError("crra_utility: R must lie in (0, 1)");
  if (!(W >= 0.0)) throw ValidationError("crra_utility: W must be >= 0");
  return std::pow(W, 1.0 - R) / (1.0 - R);
}

double j_multiplier(const ModelParams& p) {
  const double e = 1.0 - p.R;
  return p.lambda * p.K * std::pow(1.0 - p.alpha, e) + std::pow(p.c, e);
}

double j_from_v(double v, const ModelParams& p) { return j_multiplier(p) * v; }

bool set_param(ModelParams& p, std::string_view key, double value) {
  if (key == "mu") p.mu = value;
  else if (key == "sigma") p.sigma = value;
  else if (key == "lambda") p.lambda = value;
  else if (key == "delta") p.delta = value;
  else if (key == "c") p.c = value;
  else if (key == "R") p.R = value;
  else if (key == "K") p.K = value;
  else if (key == "alpha") p.alpha = value;
  else if (key == "L") p.L = value;
  else if (key == "W0") p.W0 = value;
  else return false;
  return true;
}

ModelParams parse_params(std::istream& in, ModelParams base) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv = line;
    if (const auto hash = sv.find('#'); hash != std::string_view::npos) sv = sv.substr(0, hash);
    sv = trim(sv);
    if (sv.empty()) continue;
    const auto eq = sv.find('=');
    if (eq == std::string_view::npos)
      throw ValidationError("params line " + std::to_string(lineno) + ": expected key=value");
    const auto key = trim(sv.substr(0, eq));
    const auto text = trim(sv.substr(eq + 1));
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size())
      throw ValidationError("params line " + std::to_string(lineno) + ": bad number '" +
                            std::string(text) + "'");
    if (!set_param(base, key, value))
      throw ValidationError("params line " + std::to_string(lineno) + ": unknown key '" +
                            std::string(key) + "'");
  }
  return base;
}

ModelParams load_params(const std::string& path, ModelParams base) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open params file: " + path);
  return parse_params(in, base);
}

ModelParams reference_params() {
  ModelParams p;
  p.delta = kReferenceDelta;
  return p;
}

}  // namespace retcap
