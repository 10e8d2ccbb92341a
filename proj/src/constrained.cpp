#include "retcap/constrained.hpp"

#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <string>

#include "retcap/closedform.hpp"
#include "retcap/errors.hpp"
#include "retcap/specfun.hpp"

namespace retcap {

namespace {

struct Kernel {
  double beta1;
  double beta2;
  double k;  // 2 / ((beta1 - beta2)(1-R) sigma^2 L^2)
  double s;  // 2 - R
};

Kernel make_kernel(const ModelParams& p) {
  if (p.c != 0.0)
    throw ValidationError("constrained-region closed form requires c = 0");
  const auto d = derive_constants(p);
  const double k =
      2.0 / ((d.beta1 - d.beta2) * (1.0 - p.R) * p.sigma * p.sigma * p.L * p.L);
  return {d.beta1, d.beta2, k, 2.0 - p.R};
}

// e^{beta1 W} int_W^inf x^{1-R} e^{-beta1 x} dx
double upper_tail(const Kernel& kn, double W) {
  return std::pow(kn.beta1, -kn.s) * specfun::scaled_upper_incomplete_gamma(kn.s, kn.beta1 * W);
}

// c1 e^{beta1 W} + V0(W) with its derivatives: the part of the binding-region
// value that does not depend on W*.
ValueDerivs fixed_part(const Kernel& kn, double W, double R) {
  const double j1 = upper_tail(kn, W);
  const double i2 = specfun::damped_gamma_integral(kn.s, kn.beta2, W);
  const double w1r = std::pow(W, 1.0 - R);
  return {kn.k * (j1 + i2), kn.k * (kn.beta1 * j1 + kn.beta2 * i2),
          kn.k * (kn.beta1 * kn.beta1 * j1 + kn.beta2 * kn.beta2 * i2 +
                  (kn.beta2 - kn.beta1) * w1r)};
}

}  // namespace

ValueDerivs v0(double W, const ModelParams& p) {
  const Kernel kn = make_kernel(p);
  if (!(W >= 0.0)) throw ValidationError("v0: W must be >= 0");
  if (W == 0.0) {
    // V0'' has a W^{1-R} factor and the integrals vanish; all three are zero.
    return {0.0, 0.0, 0.0};
  }
  const double i1 = specfun::damped_gamma_integral(kn.s, kn.beta1, W);
  const double i2 = specfun::damped_gamma_integral(kn.s, kn.beta2, W);
  const double w1r = std::pow(W, 1.0 - p.R);
  return {kn.k * (i2 - i1), kn.k * (kn.beta2 * i2 - kn.beta1 * i1),
          kn.k * (kn.beta2 * kn.beta2 * i2 - kn.beta1 * kn.beta1 * i1 +
                  (kn.beta2 - kn.beta1) * w1r)};
}

double constrained_c1(const ModelParams& p) {
  const Kernel kn = make_kernel(p);
  return kn.k * std::pow(kn.beta1, p.R - 2.0) * specfun::gamma_fn(kn.s);
}

ConstrainedCoefficients coefficients_for(double w_star, const ModelParams& p) {
  const Kernel kn = make_kernel(p);
  if (!(w_star > 0.0) || !std::isfinite(w_star))
    throw ValidationError("coefficients_for: W* must be finite and > 0");
  const double s2 = p.sigma * p.sigma;
  const auto a = fixed_part(kn, w_star, p.R);
  const double e2 = std::exp(kn.beta2 * w_star);
  // mu V' + sigma^2 L V'' = 0 at W*+ pins c_star.
  const double c_star = -(p.mu * a.d1 + s2 * p.L * a.d2) /
                        (kn.beta2 * (p.mu + s2 * p.L * kn.beta2) * e2);
  const double marginal = a.d1 + c_star * kn.beta2 * e2;
  if (!(marginal > 0.0) || !std::isfinite(marginal))
    throw SolverError("coefficients_for: non-positive marginal utility V'(W*+) = " +
                      std::to_string(marginal) + " at W* = " + std::to_string(w_star));
  return {constrained_c1(p), c_star, std::pow(marginal, -1.0 / p.R), w_star};
}

ValueDerivs v_constrained(double W, const ConstrainedCoefficients& coef, const ModelParams& p) {
  const Kernel kn = make_kernel(p);
  if (!(W > 0.0)) throw ValidationError("v_constrained: W must be > 0");
  const auto a = fixed_part(kn, W, p.R);
  // c_star e^{beta2 W} written relative to W* so large W* does not overflow.
  const double h = coef.c_star * std::exp(kn.beta2 * coef.w_star_input) *
                   std::exp(kn.beta2 * (W - coef.w_star_input));
  return {a.value + h, a.d1 + kn.beta2 * h, a.d2 + kn.beta2 * kn.beta2 * h};
}

DerivativeEnvelope derivative_envelope(const ModelParams& p) {
  const double a0 = all_safety_solution(p).coefficient_a;
  const double a_inf = merton_value(p).coefficient_a;
  const double e = 1.0 - p.R;
  constexpr int bits = 50;
  constexpr double k_max = 1.0e3;

  DerivativeEnvelope env{0.0, 0.0, 0.0, 0.0};

  // The sup bracket is zero until a0 (k+1)^{1-R} exceeds a_inf.
  const double k_min = std::pow(a_inf / a0, 1.0 / e) - 1.0;
  if (k_min < k_max) {
    auto neg = [&](double logk) {
      const double k = std::exp(logk);
      const double br = a0 * std::pow(k + 1.0, e) - a_inf;
      return -(br > 0.0 ? br : 0.0) / (k * e);
    };
    const double lo = std::log(std::max(k_min, 1e-12));
    const auto [x, f] = boost::math::tools::brent_find_minima(neg, lo, std::log(k_max), bits);
    env.lower = -f;
    env.k_at_sup = std::exp(x);
  }

  auto up = [&](double b) {
    const double br = a_inf - a0 * std::pow(1.0 - b, e);
    return (br > 0.0 ? br : 0.0) / (b * e);
  };
  const auto [x, f] = boost::math::tools::brent_find_minima(up, 1e-12, 1.0 - 1e-12, bits);
  env.upper = f;
  env.beta_at_inf = x;
  return env;
}

}  // namespace retcap
