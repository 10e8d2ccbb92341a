#include "retcap/specfun.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "retcap/errors.hpp"

namespace retcap::specfun {

namespace {

constexpr double kTiny = 1e-300;

void require_shape(double s, const char* who) {
  if (!(s > 0.0) || !std::isfinite(s))
    throw ValidationError(std::string(who) + ": shape parameter must be > 0");
}

[[noreturn]] void no_convergence(const char* who, double s, double x) {
  throw ConvergenceError(std::string(who) + ": no convergence within " +
                         std::to_string(kMaxTerms) + " terms (s=" + std::to_string(s) +
                         ", x=" + std::to_string(x) + ")");
}

// sum_k x^k / (s (s+1) ... (s+k)); all terms positive for x >= 0.
double lower_series_sum(double s, double x) {
  double term = 1.0 / s;
  double sum = term;
  for (int k = 1; k < kMaxTerms; ++k) {
    term *= x / (s + k);
    sum += term;
    if (term <= kSeriesTol * sum) return sum;
  }
  no_convergence("lower_incomplete_gamma", s, x);
}

// Modified Lentz evaluation of the continued fraction for Gamma(s, x) e^x x^{-s}.
double upper_fraction(double s, double x) {
  double b = x + 1.0 - s;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxTerms; ++i) {
    const double an = -i * (i - s);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) <= kSeriesTol) return h;
  }
  no_convergence("upper_incomplete_gamma", s, x);
}

bool use_series(double s, double x) { return x <= kSeriesSwitch || x < s + 1.0; }

double lower_by_series(double s, double x) {
  if (x == 0.0) return 0.0;
  return std::exp(s * std::log(x) - x) * lower_series_sum(s, x);
}

// e^{-a} sum_k a^k / (k! (s+k)) for a >= 0: the expectation of 1/(s+K) with K ~ Poisson(a).
double poisson_mean_inverse(double s, double a) {
  if (a == 0.0) return 1.0 / s;
  if (a <= kPoissonSwitch) {
    double w = std::exp(-a);
    double sum = w / s;
    for (int k = 1; k < kMaxTerms; ++k) {
      w *= a / k;
      const double t = w / (s + k);
      sum += t;
      if (k > a && t <= kSeriesTol * sum) return sum;
    }
    no_convergence("damped_gamma_integral", s, -a);
  }
  if (a > kAsymptoticSwitch) {
    // E 1/(s+K) = (1/a) int_0^a (1-u/a)^{s-1} e^{-u} du; expanding the power
    // gives (1/a) sum_j (1-s)(2-s)...(j-s) / a^j up to an O(e^{-a}) remainder.
    double term = 1.0;
    double sum = 1.0;
    for (int j = 1; j < kMaxTerms; ++j) {
      const double next = term * (j - s) / a;
      if (std::fabs(next) >= std::fabs(term)) break;  // asymptotic: stop at the smallest term
      term = next;
      sum += term;
      if (std::fabs(term) <= kSeriesTol * std::fabs(sum)) return sum / a;
    }
    no_convergence("damped_gamma_integral", s, -a);
  }
  const double mode = std::floor(a);
  const double w_mode = std::exp(-a + mode * std::log(a) - std::lgamma(mode + 1.0));
  double sum = w_mode / (s + mode);
  double w = w_mode;
  int terms = 0;
  for (double k = mode; terms < kMaxTerms; ++terms) {
    w *= a / (k + 1.0);
    k += 1.0;
    const double t = w / (s + k);
    sum += t;
    if (t <= kSeriesTol * sum) break;
  }
  w = w_mode;
  for (double k = mode; k > 0.0 && terms < kMaxTerms; ++terms) {
    w *= k / a;
    k -= 1.0;
    const double t = w / (s + k);
    sum += t;
    if (t <= kSeriesTol * sum) break;
  }
  if (terms >= kMaxTerms) no_convergence("damped_gamma_integral", s, -a);
  return sum;
}

}  // namespace

double gamma_fn(double s) {
  require_shape(s, "gamma_fn");
  return std::tgamma(s);
}

GammaEval lower_incomplete_gamma_eval(double s, double x) {
  require_shape(s, "lower_incomplete_gamma");
  if (!(x >= 0.0))
    throw ValidationError("lower_incomplete_gamma: x must be >= 0 (see truncated_gamma_integral)");
  if (std::isinf(x)) return {s, x, std::tgamma(s), GammaMethod::continued_fraction};
  if (use_series(s, x)) return {s, x, lower_by_series(s, x), GammaMethod::series};
  const double tail = std::exp(s * std::log(x) - x) * upper_fraction(s, x);
  return {s, x, std::tgamma(s) - tail, GammaMethod::continued_fraction};
}

double lower_incomplete_gamma(double s, double x) {
  return lower_incomplete_gamma_eval(s, x).value;
}

double upper_incomplete_gamma(double s, double x) {
  require_shape(s, "upper_incomplete_gamma");
  if (!(x >= 0.0)) throw ValidationError("upper_incomplete_gamma: x must be >= 0");
  if (x < s + 1.0) return std::tgamma(s) - lower_by_series(s, x);
  return std::exp(s * std::log(x) - x) * upper_fraction(s, x);
}

double scaled_upper_incomplete_gamma(double s, double x) {
  require_shape(s, "scaled_upper_incomplete_gamma");
  if (!(x >= 0.0)) throw ValidationError("scaled_upper_incomplete_gamma: x must be >= 0");
  if (x < s + 1.0) return std::exp(x) * (std::tgamma(s) - lower_by_series(s, x));
  return std::exp(s * std::log(x)) * upper_fraction(s, x);
}

double kummer_m_1(double s, double z) {
  const double b = s + 1.0;
  if (b <= 0.0 && b == std::floor(b))
    throw ValidationError("kummer_m_1: s+1 must not be a non-positive integer");
  double term = 1.0;
  double sum = 1.0;
  if (z == 0.0) return sum;
  for (int k = 0; k < kMaxTerms; ++k) {
    term *= z / (b + k);
    sum += term;
    if (std::fabs(term) <= kSeriesTol * std::fabs(sum) && k + 1 > std::fabs(z)) return sum;
  }
  no_convergence("kummer_m_1", s, z);
}

double truncated_gamma_integral(double s, double beta, double W) {
  require_shape(s, "truncated_gamma_integral");
  if (!(W >= 0.0)) throw ValidationError("truncated_gamma_integral: W must be >= 0");
  if (W == 0.0) return 0.0;
  if (beta > 0.0) return std::pow(beta, -s) * lower_incomplete_gamma(s, beta * W);
  if (beta == 0.0) return std::pow(W, s) / s;
  const double a = -beta * W;
  return std::pow(W, s) * std::exp(a) * poisson_mean_inverse(s, a);
}

double damped_gamma_integral(double s, double beta, double W) {
  require_shape(s, "damped_gamma_integral");
  if (!(W >= 0.0)) throw ValidationError("damped_gamma_integral: W must be >= 0");
  if (W == 0.0) return 0.0;
  if (beta >= 0.0) return std::exp(beta * W) * truncated_gamma_integral(s, beta, W);
  return std::pow(W, s) * poisson_mean_inverse(s, -beta * W);
}

}  // namespace retcap::specfun
