#pragma once

// Dormand-Prince 5(4) with embedded error control. Integrates in either
// direction; an observer sees every accepted step and may stop the run.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>

#include "retcap/errors.hpp"

namespace retcap::ode {

struct Options {
  double rtol = 1e-10;
  double atol = 1e-12;
  double h_init = 0.0;  // 0 picks a starting step from the tolerances
  double h_max = std::numeric_limits<double>::infinity();
  double h_min = 1e-13;  // relative to max(1, |t|)
  long max_steps = 2'000'000;
};

struct Report {
  long accepted = 0;
  long rejected = 0;
  double t_final = 0.0;
  bool stopped = false;  // the observer asked to stop before t1
};

template <std::size_t N>
using State = std::array<double, N>;

namespace detail {

template <std::size_t N>
State<N> axpy(const State<N>& y, double h, std::initializer_list<std::pair<double, const State<N>*>> terms) {
  State<N> out = y;
  for (const auto& [coef, k] : terms)
    for (std::size_t i = 0; i < N; ++i) out[i] += h * coef * (*k)[i];
  return out;
}

}  // namespace detail

/// Integrates y' = f(t, y) from t0 to t1. `f(t, y)` returns the derivative;
/// `obs(t, y, dydt)` is called at t0 and after each accepted step and
/// returns false to stop.
template <std::size_t N, class Rhs, class Observer>
Report integrate(Rhs&& f, double t0, State<N> y, double t1, const Options& opt, Observer&& obs) {
  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                   a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                   a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                   b6 = 11.0 / 84;
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                   e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  Report rep;
  const double dir = t1 >= t0 ? 1.0 : -1.0;
  double t = t0;
  State<N> k1 = f(t, y);
  rep.t_final = t;
  if (!obs(t, y, k1)) {
    rep.stopped = true;
    return rep;
  }
  if (t0 == t1) return rep;

  double h = opt.h_init;
  if (h <= 0.0) {
    double scale = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const double sc = opt.atol + opt.rtol * std::fabs(y[i]);
      scale = std::max(scale, std::fabs(k1[i]) / sc);
    }
    h = scale > 0.0 ? 0.01 * std::pow(1.0 / scale, 0.2) : 1e-3;
    h = std::min(h, 0.01 * std::fabs(t1 - t0));
  }
  h = std::min({h, opt.h_max, std::fabs(t1 - t0)});

  while (dir * (t1 - t) > 0.0) {
    if (rep.accepted + rep.rejected >= opt.max_steps)
      throw SolverError("ode::integrate: step budget exhausted at t = " + std::to_string(t));
    const double hmin = opt.h_min * std::max(1.0, std::fabs(t));
    if (h < hmin)
      throw SolverError("ode::integrate: step size underflow at t = " + std::to_string(t));
    const bool last = h >= std::fabs(t1 - t);
    const double hs = last ? (t1 - t) : dir * h;

    using detail::axpy;
    const State<N> k2 = f(t + c2 * hs, axpy<N>(y, hs, {{a21, &k1}}));
    const State<N> k3 = f(t + c3 * hs, axpy<N>(y, hs, {{a31, &k1}, {a32, &k2}}));
    const State<N> k4 = f(t + c4 * hs, axpy<N>(y, hs, {{a41, &k1}, {a42, &k2}, {a43, &k3}}));
    const State<N> k5 =
        f(t + c5 * hs, axpy<N>(y, hs, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}));
    const State<N> k6 = f(t + hs, axpy<N>(y, hs, {{a61, &k1}, {a62, &k2}, {a63, &k3},
                                                  {a64, &k4}, {a65, &k5}}));
    const State<N> y_new =
        axpy<N>(y, hs, {{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
    const State<N> k7 = f(t + hs, y_new);

    double err = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const double ei = hs * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] +
                              e7 * k7[i]);
      const double sc = opt.atol + opt.rtol * std::max(std::fabs(y[i]), std::fabs(y_new[i]));
      err += (ei / sc) * (ei / sc);
    }
    err = std::sqrt(err / N);

    if (!std::isfinite(err)) {
      ++rep.rejected;
      h *= 0.2;
      continue;
    }
    const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
    if (err <= 1.0) {
      ++rep.accepted;
      t = last ? t1 : t + hs;
      y = y_new;
      k1 = k7;
      rep.t_final = t;
      if (!obs(t, y, k1)) {
        rep.stopped = true;
        return rep;
      }
      h = std::min(std::fabs(hs) * factor, opt.h_max);
    } else {
      ++rep.rejected;
      h = std::fabs(hs) * std::min(1.0, factor);
    }
  }
  return rep;
}

}  // namespace retcap::ode
