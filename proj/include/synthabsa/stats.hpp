#pragma once

// Small-sample statistics for judge accuracy and seed sweeps.

#include <cstddef>
#include <span>

namespace synthabsa {

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Wilson score interval for k successes in n trials (z = 1.96 by default).
/// Throws ArgumentError if n == 0 or k > n.
Interval wilson_interval(std::size_t k, std::size_t n, double z = 1.959963984540054);

/// Two-sided exact binomial test: sum of P(X = i) over all i whose point
/// probability does not exceed P(X = k) (with a small relative tolerance).
double binomial_two_sided_p(std::size_t k, std::size_t n, double p = 0.5);

/// Mean binary entropy in nats; 0 ln 0 = 0. Throws ArgumentError for values
/// outside [0, 1] or an empty input.
double binary_entropy_mean(std::span<const double> q);

/// 100 * (1 - |accuracy - 0.5| / 0.5): 100 when the judge is at chance, 0
/// when it discriminates perfectly (or perfectly inverted).
double chance_confusion(double accuracy);

double sample_mean(std::span<const double> xs);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double sample_std(std::span<const double> xs);

}  // namespace synthabsa
