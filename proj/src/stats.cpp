#include "synthabsa/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "synthabsa/errors.hpp"

namespace synthabsa {

Interval wilson_interval(std::size_t k, std::size_t n, double z) {
  if (n == 0) throw ArgumentError("wilson_interval needs n > 0");
  if (k > n) throw ArgumentError("wilson_interval: k exceeds n");
  const double nn = static_cast<double>(n);
  const double phat = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (phat + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(phat * (1.0 - phat) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

namespace {

double log_binom_pmf(std::size_t i, std::size_t n, double p) {
  const double ni = static_cast<double>(n), ii = static_cast<double>(i);
  double lp = std::lgamma(ni + 1.0) - std::lgamma(ii + 1.0) - std::lgamma(ni - ii + 1.0);
  if (i > 0) lp += ii * std::log(p);
  if (i < n) lp += (ni - ii) * std::log1p(-p);
  return lp;
}

}  // namespace

double binomial_two_sided_p(std::size_t k, std::size_t n, double p) {
  if (k > n) throw ArgumentError("binomial_two_sided_p: k exceeds n");
  if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError("binomial_two_sided_p: p outside [0, 1]");
  if (p == 0.0) return k == 0 ? 1.0 : 0.0;
  if (p == 1.0) return k == n ? 1.0 : 0.0;

  // Same relative tolerance as R's binom.test, so symmetric tails tie exactly.
  constexpr double kRelErr = 1.0 + 1e-7;
  const double d = log_binom_pmf(k, n, p);
  double total = 0.0;
  for (std::size_t i = 0; i <= n; ++i) {
    const double li = log_binom_pmf(i, n, p);
    if (li <= d + std::log(kRelErr)) total += std::exp(li);
  }
  return std::min(1.0, total);
}

double binary_entropy_mean(std::span<const double> q) {
  if (q.empty()) throw ArgumentError("binary_entropy_mean of an empty sequence");
  double sum = 0.0;
  for (double v : q) {
    if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("confidence outside [0, 1]");
    if (v > 0.0) sum -= v * std::log(v);
    if (v < 1.0) sum -= (1.0 - v) * std::log1p(-v);
  }
  return sum / static_cast<double>(q.size());
}

double chance_confusion(double accuracy) {
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw ArgumentError("accuracy outside [0, 1]");
  return 100.0 * (1.0 - std::abs(accuracy - 0.5) / 0.5);
}

double sample_mean(std::span<const double> xs) {
  if (xs.empty()) throw ArgumentError("mean of an empty sequence");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_std(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = sample_mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace synthabsa
