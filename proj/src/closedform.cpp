#include "retcap/closedform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "retcap/errors.hpp"

namespace retcap {

double ClosedFormSolution::value(double W, double R) const {
  return coefficient_a * crra_utility(W, R);
}

double ClosedFormSolution::d1(double W, double R) const {
  return coefficient_a * std::pow(W, -R);
}

double ClosedFormSolution::d2(double W, double R) const {
  return -R * coefficient_a * std::pow(W, -R - 1.0);
}

double ClosedFormSolution::truncated_value(double W, double R, double T) const {
  return value(W, R) * -std::expm1(-T / coefficient_a);
}

ClosedFormSolution merton_value(const ModelParams& p) {
  const auto d = derive_constants(p);
  if (d.assumption_a_slack <= 0.0)
    throw ValidationError("merton_value: Assumption A fails (slack " +
                          std::to_string(d.assumption_a_slack) + ")");
  return {StrategyKind::merton, 1.0 / d.assumption_a_slack, d.merton_fraction, 0.0};
}

ClosedFormSolution all_safety_solution(const ModelParams& p) {
  p.validate();
  const double denom = p.lambda + p.delta + p.c * (1.0 - p.R);
  return {StrategyKind::all_safety, 1.0 / denom, 0.0, 0.0};
}

double all_safety_value(double W, const ModelParams& p) {
  return all_safety_solution(p).value(W, p.R);
}

double all_safety_objective(double W, const ModelParams& p) {
  return j_from_v(all_safety_value(W, p), p);
}

ClosedFormSolution leverage_value(const ModelParams& p, double b) {
  const auto d = derive_constants(p);
  if (!(b >= 0.0) || !std::isfinite(b))
    throw ValidationError("leverage_value: b must be finite and >= 0");
  if (b >= d.merton_fraction) return merton_value(p);
  const double denom = p.lambda + p.delta +
                       (1.0 - p.R) * (0.5 * p.sigma * p.sigma * b * b * p.R - p.mu * b + p.c);
  if (!(denom > 0.0)) throw ValidationError("leverage_value: non-positive denominator");
  return {StrategyKind::leverage, 1.0 / denom, b, b};
}

double closed_form_hjb_residual(const ClosedFormSolution& sol, const ModelParams& p, double W) {
  const double v = sol.value(W, p.R);
  const double v1 = sol.d1(W, p.R);
  const double v2 = sol.d2(W, p.R);
  const double s2 = p.sigma * p.sigma;
  double cap = 0.0;
  switch (sol.kind) {
    case StrategyKind::merton: cap = std::numeric_limits<double>::infinity(); break;
    case StrategyKind::leverage: cap = sol.b * W; break;
    case StrategyKind::all_safety: cap = 0.0; break;
  }
  const double x = std::clamp(p.mu * v1 / (s2 * -v2), 0.0, cap);
  const double rhs =
      0.5 * s2 * x * x * v2 + p.mu * x * v1 - p.c * W * v1 + crra_utility(W, p.R);
  const double lhs = (p.lambda + p.delta) * v;
  return std::fabs(lhs - rhs) / std::fabs(lhs);
}

}  // namespace retcap
