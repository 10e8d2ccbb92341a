#pragma once

#include <iosfwd>
#include <string>
#include <string_view>

namespace retcap {

/// Market, preference, mortality and constraint parameters.
///
/// All rates are per year and wealth is in dollars. The riskless rate is
/// fixed at zero, so `mu` is both the expected return and the risk premium.
/// `lambda` is the mortality *rate*: the lifetime is exponential with mean
/// 1/lambda and survival probability exp(-lambda t).
struct ModelParams {
  double mu = 0.1;
  double sigma = 0.3;
  double lambda = 0.07;
  double delta = 0.0;
  double c = 0.0;
  double R = 0.5;
  double K = 0.0;
  double alpha = 0.0;
  double L = 700000.0;
  double W0 = 1.0e6;

  /// Throws ValidationError when a field is outside its domain.
  void validate() const;

  bool operator==(const ModelParams&) const = default;
};

struct DerivedConstants {
  double kappa;            // mu^2 / (2 sigma^2)
  double rho;              // (1-R) kappa / R
  double beta1;            // positive root of 1/2 s^2 L^2 b^2 + L mu b - (lambda+delta)
  double beta2;            // negative root
  double merton_fraction;  // mu / (R sigma^2)
  double w_L;              // wealth at which the Merton demand equals L
  double assumption_a_slack;
};

DerivedConstants derive_constants(const ModelParams& p);

struct AssumptionCheck {
  bool holds;
  double slack;
};

/// lambda + delta > rho - c (1-R); the unconstrained problem is finite iff this holds.
AssumptionCheck check_assumption_a(const ModelParams& p);

/// W^{1-R} / (1-R), restricted to 0 < R < 1 and W >= 0.
double crra_utility(double W, double R);

/// lambda K (1-alpha)^{1-R} + c^{1-R}: the factor mapping the unit-utility
/// value V onto the retiree's objective J.
double j_multiplier(const ModelParams& p);
double j_from_v(double v, const ModelParams& p);

/// Flat `key = value` parameter files. Blank lines and `#` comments are
/// ignored; unknown keys are errors.
ModelParams parse_params(std::istream& in, ModelParams base = {});
ModelParams load_params(const std::string& path, ModelParams base = {});

/// Sets one named field (`mu`, `sigma`, `lambda`, `delta`, `c`, `R`, `K`,
/// `alpha`, `L`, `W0`). Returns false when the key is not a parameter.
bool set_param(ModelParams& p, std::string_view key, double value);

/// Subjective discount rate at which the reference parameters give the
/// target threshold W* = 492,235 (found by a scan over [0, 0.03]; at
/// delta = 0 the threshold is about 1.5% higher).
inline constexpr double kReferenceDelta = 0.0064082;

/// Reference parameters with delta calibrated so that the free boundary
/// lands on the target threshold.
ModelParams reference_params();

}  // namespace retcap
