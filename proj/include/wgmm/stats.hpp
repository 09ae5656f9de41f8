#pragma once

#include <span>
#include <vector>

namespace wgmm {

double mean(std::span<const double> x);
/// Variance with /n centering.
double variance(std::span<const double> x);
double skewness(std::span<const double> x);

/// Type-7 (linear interpolation) empirical quantile, p in [0, 1].
double quantile_type7(std::span<const double> x, double p);
/// Type-7 quantile of exp(log_values) returned on the log scale; avoids
/// overflow when the values span many orders of magnitude.
double log_quantile_type7(std::span<const double> log_values, double p);

double log_sum_exp(std::span<const double> x);

double normal_cdf(double x);
/// Kolmogorov-Smirnov distance between the sample and N(mu, sd^2).
double ks_normal(std::span<const double> x, double mu, double sd);
/// Two-sample Kolmogorov-Smirnov distance.
double ks_two_sample(std::span<const double> a, std::span<const double> b);

}  // namespace wgmm
