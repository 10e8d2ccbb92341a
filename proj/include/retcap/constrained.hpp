#pragma once

#include "retcap/model.hpp"

namespace retcap {

/// A value and its first two wealth derivatives.
struct ValueDerivs {
  double value;
  double d1;
  double d2;
};

/// Coefficients of V(W) = c1 e^{beta1 W} + c_star e^{beta2 W} + V0(W) on the
/// binding region, built from a candidate free boundary.
struct ConstrainedCoefficients {
  double c1;
  double c_star;
  double g_star;        // V'(W*+)^{-1/R}
  double w_star_input;  // the candidate W* these were built from
};

/// Particular solution of (lambda+delta) V = u + mu L V' + 1/2 sigma^2 L^2 V''
/// with V0(0) = 0, in incomplete-gamma form. Zero withdrawal rate only.
ValueDerivs v0(double W, const ModelParams& p);

/// c1 = 2 beta1^{R-2} Gamma(2-R) / ((beta1-beta2)(1-R) sigma^2 L^2).
double constrained_c1(const ModelParams& p);

/// Chooses c_star so that the unconstrained demand -(mu/sigma^2) V'/V''
/// equals L at W*, then g* from V'(W*+) = g*^{-R}. Throws SolverError when
/// V'(W*+) is not positive: such a candidate cannot be a free boundary.
ConstrainedCoefficients coefficients_for(double w_star, const ModelParams& p);

/// Binding-region value. The c1 term and the e^{beta1 W} part of V0 are
/// combined into an upper incomplete gamma, so the evaluation stays
/// accurate for beta1 W in the hundreds.
ValueDerivs v_constrained(double W, const ConstrainedCoefficients& coef, const ModelParams& p);

/// Envelope constants bounding V'(W) W^R between `lower` and `upper` for any
/// admissible capacity: lower = sup_k, upper = inf_beta of the concavity
/// bounds obtained from the all-safety and Merton value functions.
struct DerivativeEnvelope {
  double lower;
  double upper;
  double k_at_sup;
  double beta_at_inf;
};
DerivativeEnvelope derivative_envelope(const ModelParams& p);

}  // namespace retcap
