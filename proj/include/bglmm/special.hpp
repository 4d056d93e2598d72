#pragma once

#include <cmath>
#include <limits>
#include <numbers>

namespace bglmm {

template <typename Scalar>
Scalar digamma(Scalar x) {
  using std::floor;
  using std::log;
  using std::tan;
  if (x <= 0 && floor(x) == x) return std::numeric_limits<Scalar>::quiet_NaN();
  if (x < 0) return digamma(Scalar(1) - x) - std::numbers::pi_v<Scalar> / tan(std::numbers::pi_v<Scalar> * x);
  Scalar acc = 0;
  while (x < 6) {
    acc -= 1 / x;
    x += 1;
  }
  const Scalar f = 1 / (x * x);
  const Scalar series =
      f * (Scalar(-1) / 12 +
           f * (Scalar(1) / 120 +
                f * (Scalar(-1) / 252 +
                     f * (Scalar(1) / 240 + f * (Scalar(-1) / 132 + f * (Scalar(691) / 32760 + f * (Scalar(-1) / 12)))))));
  return acc + log(x) - Scalar(0.5) / x + series;
}

template <typename Scalar>
Scalar normal_cdf(Scalar x) {
  return Scalar(0.5) * std::erfc(-x / std::numbers::sqrt2_v<Scalar>);
}

template <typename Scalar>
Scalar normal_pdf(Scalar x) {
  return std::exp(Scalar(-0.5) * x * x) / std::sqrt(2 * std::numbers::pi_v<Scalar>);
}

/// Inverse of the standard normal CDF: rational approximation followed by one
/// Halley step against erfc, giving close to full double precision.
template <typename Scalar>
Scalar normal_quantile(Scalar p) {
  if (!(p > 0)) return p == 0 ? -std::numeric_limits<Scalar>::infinity() : std::numeric_limits<Scalar>::quiet_NaN();
  if (!(p < 1)) return p == 1 ? std::numeric_limits<Scalar>::infinity() : std::numeric_limits<Scalar>::quiet_NaN();
  static constexpr Scalar a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr Scalar b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01, -1.328068155288572e+01};
  static constexpr Scalar c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00};
  static constexpr Scalar d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr Scalar p_low = 0.02425;
  Scalar x;
  if (p < p_low) {
    const Scalar q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= 1 - p_low) {
    const Scalar q = p - Scalar(0.5);
    const Scalar r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const Scalar q = std::sqrt(-2 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  const Scalar e = normal_cdf(x) - p;
  const Scalar u = e * std::sqrt(2 * std::numbers::pi_v<Scalar>) * std::exp(x * x / 2);
  return x - u / (1 + x * u / 2);
}

template <typename Scalar>
Scalar log_sum_exp(Scalar a, Scalar b) {
  if (a == -std::numeric_limits<Scalar>::infinity()) return b;
  if (b == -std::numeric_limits<Scalar>::infinity()) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

}  // namespace bglmm
