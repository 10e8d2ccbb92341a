#pragma once

#include "retcap/model.hpp"

namespace retcap {

enum class StrategyKind { merton, all_safety, leverage };

/// A value function of the form V(W) = a u(W) with policy X = slope * W.
/// Values are in V-normalization (unit utility multiplier); use `j_from_v`
/// for the retiree's objective.
struct ClosedFormSolution {
  StrategyKind kind;
  double coefficient_a;
  double policy_slope;
  double b;  // leverage cap; zero for the other kinds

  double value(double W, double R) const;
  double d1(double W, double R) const;
  double d2(double W, double R) const;
  /// a u(W) (1 - exp(-T/a)): the expectation of the discounted utility
  /// integral truncated at horizon T.
  double truncated_value(double W, double R, double T) const;
};

/// Unconstrained benchmark: a = 1 / (lambda + delta - rho + c(1-R)), X = mu/(R sigma^2) W.
ClosedFormSolution merton_value(const ModelParams& p);

/// X == 0: a = 1 / (lambda + delta + c(1-R)).
ClosedFormSolution all_safety_solution(const ModelParams& p);
double all_safety_value(double W, const ModelParams& p);
/// Same strategy in J-normalization, including bequest and withdrawal utility.
double all_safety_objective(double W, const ModelParams& p);

/// Optimal policy under X <= b W. The closed form holds for
/// 0 <= b < mu/(R sigma^2); larger caps do not bind and return `merton_value`.
ClosedFormSolution leverage_value(const ModelParams& p, double b);

/// Relative residual of the max-form HJB at wealth W, maximizing over the
/// strategy's own admissible set: X >= 0 (merton), X <= b W (leverage),
/// X = 0 (all-safety).
double closed_form_hjb_residual(const ClosedFormSolution& sol, const ModelParams& p, double W);

}  // namespace retcap
