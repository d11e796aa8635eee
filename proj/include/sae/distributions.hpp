#ifndef SAE_DISTRIBUTIONS_HPP
#define SAE_DISTRIBUTIONS_HPP

#include <cmath>
#include <limits>

#include "sae/error.hpp"

namespace sae {

template <class Scalar>
Scalar normal_pdf(Scalar x) {
  const Scalar inv_sqrt_2pi = Scalar(0.3989422804014326779399461);
  return inv_sqrt_2pi * std::exp(Scalar(-0.5) * x * x);
}

template <class Scalar>
Scalar normal_cdf(Scalar x) {
  return Scalar(0.5) * std::erfc(-x / std::sqrt(Scalar(2)));
}

namespace detail {

// Regularized lower incomplete gamma P(a,x) by power series.
template <class Scalar>
Scalar gamma_p_series(Scalar a, Scalar x) {
  Scalar ap = a;
  Scalar sum = Scalar(1) / a;
  Scalar term = sum;
  for (int i = 0; i < 500; ++i) {
    ap += Scalar(1);
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * std::numeric_limits<Scalar>::epsilon())
      break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Regularized upper incomplete gamma Q(a,x) by Lentz continued fraction.
template <class Scalar>
Scalar gamma_q_cf(Scalar a, Scalar x) {
  const Scalar tiny = std::numeric_limits<Scalar>::min() / std::numeric_limits<Scalar>::epsilon();
  Scalar b = x + Scalar(1) - a;
  Scalar c = Scalar(1) / tiny;
  Scalar d = Scalar(1) / b;
  Scalar h = d;
  for (int i = 1; i <= 500; ++i) {
    Scalar an = -Scalar(i) * (Scalar(i) - a);
    b += Scalar(2);
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = Scalar(1) / d;
    Scalar del = d * c;
    h *= del;
    if (std::abs(del - Scalar(1)) < std::numeric_limits<Scalar>::epsilon()) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace detail

// Q(a,x) = 1 - P(a,x), the normalized upper incomplete gamma function.
template <class Scalar>
Scalar regularized_gamma_q(Scalar a, Scalar x) {
  if (!(a > Scalar(0)) || x < Scalar(0))
    fail_input("invalid-config", "regularized_gamma_q requires a > 0 and x >= 0");
  if (x == Scalar(0)) return Scalar(1);
  if (x < a + Scalar(1)) return Scalar(1) - detail::gamma_p_series(a, x);
  return detail::gamma_q_cf(a, x);
}

// Survival function of the chi-squared distribution with df degrees of freedom.
template <class Scalar>
Scalar chi_squared_sf(Scalar x, Scalar df) {
  if (x <= Scalar(0)) return Scalar(1);
  return regularized_gamma_q(df / Scalar(2), x / Scalar(2));
}

// CDF of chi-squared, convenience for distribution checks.
template <class Scalar>
Scalar chi_squared_cdf(Scalar x, Scalar df) {
  return Scalar(1) - chi_squared_sf(x, df);
}

}  // namespace sae

#endif
