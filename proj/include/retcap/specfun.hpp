#pragma once

// Gamma and incomplete-gamma family used by the constrained-region closed form.
//
// Conventions:
//   gamma(s, x) = int_0^x t^{s-1} e^{-t} dt      (lower)
//   Gamma(s, x) = int_x^inf t^{s-1} e^{-t} dt    (upper)
//   M(1, s+1, z) = 1 + z/(s+1) + z^2/((s+1)(s+2)) + ...

namespace retcap::specfun {

/// Below this argument the lower incomplete gamma uses its power series;
/// above it, Gamma(s) minus the continued-fraction upper tail.
inline constexpr double kSeriesSwitch = 30.0;
/// Beyond this |z| the negative-argument series is evaluated through
/// Poisson weights centred on their mode instead of term by term from k = 0.
inline constexpr double kPoissonSwitch = 30.0;
/// Beyond this |z| the same expectation uses its asymptotic series in 1/|z|.
inline constexpr double kAsymptoticSwitch = 1.0e4;
inline constexpr int kMaxTerms = 10000;
inline constexpr double kSeriesTol = 1e-16;

enum class GammaMethod { series, continued_fraction, poisson_weighted };

struct GammaEval {
  double s;
  double x;
  double value;
  GammaMethod method_used;
};

/// Gamma(s) for s > 0.
double gamma_fn(double s);

/// gamma(s, x) for s > 0, x >= 0. Negative arguments have no real value for
/// non-integer s; use `truncated_gamma_integral` for those.
GammaEval lower_incomplete_gamma_eval(double s, double x);
double lower_incomplete_gamma(double s, double x);

/// Gamma(s, x) for s > 0, x >= 0.
double upper_incomplete_gamma(double s, double x);

/// e^x Gamma(s, x), finite for large x where Gamma(s, x) underflows.
double scaled_upper_incomplete_gamma(double s, double x);

/// Kummer's M(1, s+1, z) by direct summation.
double kummer_m_1(double s, double z);

/// int_0^W x^{s-1} e^{-beta x} dx for any real beta, s > 0, W >= 0.
double truncated_gamma_integral(double s, double beta, double W);

/// e^{beta W} int_0^W x^{s-1} e^{-beta x} dx = int_0^W (W-t)^{s-1} e^{beta t} dt.
/// For beta < 0 this stays O(W^{s-1}/|beta|) however large |beta W| gets.
double damped_gamma_integral(double s, double beta, double W);

}  // namespace retcap::specfun
