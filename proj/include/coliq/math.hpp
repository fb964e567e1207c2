#ifndef COLIQ_MATH_HPP
#define COLIQ_MATH_HPP

#include <cmath>

namespace coliq {

/// (1 - e^{-x}) / x, continuous at 0. Stable for small |x| via expm1.
inline double expm1_ratio(double x) {
    if (x == 0.0) return 1.0;
    return -std::expm1(-x) / x;
}

/// Integral of e^{-k s} over [0, s]: (1 - e^{-k s}) / k, with the k -> 0 limit s.
inline double int_exp_decay(double k, double s) {
    return s * expm1_ratio(k * s);
}

}  // namespace coliq

#endif
