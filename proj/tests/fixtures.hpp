#pragma once

// Solutions shared across test cases; each is solved once per process.

#include <cmath>

#include "retcap/freeboundary.hpp"
#include "retcap/model.hpp"

namespace fixtures {

inline retcap::ModelParams base_params() { return retcap::ModelParams{}; }

inline const retcap::FreeBoundarySolution& base_solution() {
  static const retcap::FreeBoundarySolution fb = retcap::solve_free_boundary(base_params());
  return fb;
}

inline const retcap::FreeBoundarySolution& reference_solution() {
  static const retcap::FreeBoundarySolution fb =
      retcap::solve_free_boundary(retcap::reference_params());
  return fb;
}

inline const retcap::FreeBoundarySolution& low_capacity_solution() {
  static const retcap::FreeBoundarySolution fb = [] {
    auto p = base_params();
    p.L = 350000.0;
    return retcap::solve_free_boundary(p);
  }();
  return fb;
}

inline double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace fixtures
