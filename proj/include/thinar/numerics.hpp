#pragma once

#include <cstdint>

namespace thinar::numerics {

inline constexpr double kProbClampLo = 1e-12;
inline constexpr double kProbClampHi = 1.0 - 1e-12;

/// A probability that has been forced into the open interval used by
/// quantile inversion. `clamped` records whether the input had to move.
struct InteriorProbability {
  double value;
  bool clamped;
};

InteriorProbability clamp_interior(double p);

double std_normal_cdf(double x);
double std_normal_quantile(double p);
double std_normal_logpdf(double x);

/// log of the Poisson pmf, via the saddle-point (Loader) expansion so that
/// very large rates keep full relative precision.
double poisson_logpmf(std::int64_t k, double lambda);
double poisson_pmf(std::int64_t k, double lambda);
double poisson_cdf(std::int64_t k, double lambda);

/// Smallest n with poisson_cdf(n, lambda) >= p.
std::int64_t poisson_quantile(double p, double lambda);

double binomial_logpmf(std::int64_t k, std::int64_t n, double p);

double normal_logpdf(double x, double mean, double sd);

double logistic(double x);
double logit(double p);
/// log(1 + exp(x)) without overflow.
double log1p_exp(double x);

}  // namespace thinar::numerics
