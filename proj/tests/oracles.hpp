#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace testsupport {

// P(Bin(n, p) >= k) summed term by term in log space.
inline double binomial_upper_tail(std::size_t k, std::size_t n, double p) {
  if (k == 0) return 1.0;
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  const double lp = std::log(p), lq = std::log1p(-p);
  const double lnf = std::lgamma(double(n) + 1.0);
  std::vector<double> terms;
  double mx = -INFINITY;
  for (std::size_t j = k; j <= n; ++j) {
    const double t = lnf - std::lgamma(double(j) + 1.0) - std::lgamma(double(n - j) + 1.0) + double(j) * lp +
                     double(n - j) * lq;
    terms.push_back(t);
    mx = std::max(mx, t);
  }
  double s = 0.0;
  for (double t : terms) s += std::exp(t - mx);
  return std::exp(mx) * s;
}

// Lower confidence bound by bisection on the exact tail: the p at which
// P(Bin(n, p) >= k) = alpha.
inline double exact_lower_bound(std::size_t k, std::size_t n, double alpha) {
  if (k == 0) return 0.0;
  double lo = 0.0, hi = double(k) / double(n);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (binomial_upper_tail(k, n, mid) < alpha)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Standard-normal quantile by bisection on the exact CDF.
inline double exact_normal_quantile(double p) {
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace testsupport
