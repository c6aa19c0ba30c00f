#pragma once

#include <cmath>

#include "qvar/errors.hpp"

namespace qvar {

/// Bisection for a sign change of f on [lo, hi]. Stops when the bracket is
/// narrower than abs_tol or after max_iter halvings.
template <typename F>
double bisect(F&& f, double lo, double hi, double abs_tol, int max_iter = 200) {
  double flo = f(lo);
  double fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0.0) == (fhi > 0.0)) {
    throw BracketError("bisect: no sign change on bracket");
  }
  for (int i = 0; i < max_iter && hi - lo > abs_tol; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace qvar
