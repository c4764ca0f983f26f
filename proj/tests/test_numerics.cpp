#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "doctest.h"
#include "thinar/error.hpp"
#include "thinar/numerics.hpp"
#include "thinar/rng.hpp"

using namespace thinar;
using namespace thinar::numerics;

namespace {

// Maclaurin series of erf in long double; accurate for |x| <= 3.
long double erf_series(long double x) {
  long double term = x;
  long double sum = x;
  for (int n = 1; n < 200; ++n) {
    term *= -x * x / n;
    const long double add = term / (2 * n + 1);
    sum += add;
    if (std::fabs(add) < 1e-30L) break;
  }
  return sum * 2.0L / std::sqrt(3.14159265358979323846264338327950288L);
}

long double phi_oracle(long double x) { return 0.5L * (1.0L + erf_series(x / std::sqrt(2.0L))); }

// Poisson CDF by direct pmf summation in long double.
long double poisson_cdf_oracle(std::int64_t k, long double lambda) {
  long double pmf = std::exp(-lambda);
  long double cdf = pmf;
  for (std::int64_t j = 1; j <= k; ++j) {
    pmf *= lambda / static_cast<long double>(j);
    cdf += pmf;
  }
  return cdf;
}

// Smallest n with summed CDF >= p; pmf computed in log space so large rates work.
std::int64_t poisson_quantile_oracle(double p, double lambda) {
  long double cdf = 0.0L;
  for (std::int64_t n = 0;; ++n) {
    cdf += std::exp(static_cast<long double>(n) * std::log(static_cast<long double>(lambda)) - lambda -
                    std::lgamma(static_cast<long double>(n) + 1.0L));
    if (cdf >= p) return n;
  }
}

}  // namespace

TEST_SUITE("numerics") {
  TEST_CASE("standard normal cdf") {
    CHECK(std_normal_cdf(0.0) == 0.5);
    CHECK(std::abs(std_normal_cdf(2.3) + std_normal_cdf(-2.3) - 1.0) <= 1e-14);
    CHECK(std::abs(std_normal_cdf(1.6448536269514722) - 0.95) <= 1e-10);
    for (double x = -3.0; x <= 3.0; x += 0.125) {
      CHECK(std::abs(std_normal_cdf(x) - static_cast<double>(phi_oracle(x))) <= 1e-12);
    }
    CHECK_THROWS_AS(std_normal_cdf(std::numeric_limits<double>::infinity()), DomainError);
    CHECK_THROWS_AS(std_normal_cdf(std::nan("")), DomainError);
  }

  TEST_CASE("standard normal cdf is monotone and symmetric on a dense grid") {
    double prev = 0.0;
    double worst = 0.0;
    for (int k = -40000; k <= 40000; ++k) {
      const double x = k * 1e-3;
      const double v = std_normal_cdf(x);
      CHECK_MESSAGE(v >= prev, "x = " << x);
      prev = v;
      worst = std::max(worst, std::abs(v + std_normal_cdf(-x) - 1.0));
    }
    CHECK(worst <= 1e-14);
  }

  TEST_CASE("standard normal quantile") {
    CHECK(std::abs(std_normal_quantile(0.5)) <= 1e-15);
    CHECK(std::abs(std_normal_quantile(std_normal_cdf(1.2)) - 1.2) <= 1e-9);
    // Bisection on the cdf.
    double lo = 0.0, hi = 5.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (std_normal_cdf(mid) < 0.975 ? lo : hi) = mid;
    }
    CHECK(std::abs(std_normal_quantile(0.975) - 1.959964) <= 1e-6);
    CHECK(std::abs(std_normal_quantile(0.975) - lo) <= 1e-9);
    for (double p : {1e-10, 1e-5, 0.01, 0.3, 0.7, 0.99, 1.0 - 1e-10}) {
      CHECK(std::abs(std_normal_cdf(std_normal_quantile(p)) - p) <= 1e-10 * std::max(1.0, p / (1.0 - p)));
    }
    CHECK_THROWS_AS(std_normal_quantile(0.0), DomainError);
    CHECK_THROWS_AS(std_normal_quantile(1.0), DomainError);
  }

  TEST_CASE("poisson cdf") {
    CHECK(std::abs(poisson_cdf(0, 1.0) - std::exp(-1.0)) <= 1e-15);
    CHECK(std::abs(poisson_cdf(10, 10.0) - 0.583040) <= 1e-6);
    for (double lambda : {0.1, 1.0, 4.5, 10.0, 37.0}) {
      for (std::int64_t k = 0; k <= 3 * static_cast<std::int64_t>(lambda) + 5; ++k) {
        const double want = static_cast<double>(poisson_cdf_oracle(k, lambda));
        CHECK(std::abs(poisson_cdf(k, lambda) - want) <= 1e-12 * want);
      }
    }
    for (double lambda : {1.0, 10.0, 100.0, 1e4}) {
      const auto k = static_cast<std::int64_t>(lambda + 20.0 * std::sqrt(lambda));
      CHECK(poisson_cdf(k, lambda) >= 1.0 - 1e-9);
    }
    double prev = 0.0;
    for (std::int64_t k = 0; k < 200; ++k) {
      const double v = poisson_cdf(k, 80.0);
      CHECK(v >= prev);
      prev = v;
    }
    CHECK_THROWS_AS(poisson_cdf(3, 0.0), DomainError);
    CHECK_THROWS_AS(poisson_cdf(3, -1.0), DomainError);
  }

  TEST_CASE("poisson quantile examples") {
    CHECK(poisson_quantile(0.5, 10.0) == 10);
    CHECK(poisson_quantile(std::exp(-3.0), 3.0) == 0);
    CHECK(poisson_quantile(0.5 * std::exp(-3.0), 3.0) == 0);
    CHECK(poisson_quantile(0.2, 5.0) <= poisson_quantile(0.9, 5.0));
    CHECK_THROWS_AS(poisson_quantile(0.0, 5.0), DomainError);
    CHECK_THROWS_AS(poisson_quantile(1.0, 5.0), DomainError);
    CHECK_THROWS_AS(poisson_quantile(0.5, 0.0), DomainError);
  }

  TEST_CASE("poisson quantile brackets p for random inputs") {
    Rng rng(42, 0);
    for (int k = 0; k < 10000; ++k) {
      const double p = rng.uniform();
      const double lambda = std::exp(-2.0 + 12.0 * rng.uniform());
      const std::int64_t q = poisson_quantile(p, lambda);
      CHECK(poisson_cdf(q, lambda) >= p);
      if (q > 0) CHECK(poisson_cdf(q - 1, lambda) < p);
    }
  }

  TEST_CASE("poisson quantile agrees with a summation oracle") {
    Rng rng(7, 1);
    for (double lambda : {0.1, 1.0, 10.0, 1e4}) {
      for (int k = 0; k < 1000; ++k) {
        const double p = rng.uniform();
        CHECK_MESSAGE(poisson_quantile(p, lambda) == poisson_quantile_oracle(p, lambda),
                      "p = " << p << " lambda = " << lambda);
      }
    }
  }

  TEST_CASE("poisson quantile is monotone in lambda") {
    std::int64_t prev = 0;
    for (double lambda = 0.5; lambda < 200.0; lambda *= 1.1) {
      const std::int64_t q = poisson_quantile(0.3, lambda);
      CHECK(q >= prev);
      prev = q;
    }
  }

  TEST_CASE("interior clamp records movement") {
    const auto a = clamp_interior(0.0);
    CHECK(a.value == kProbClampLo);
    CHECK(a.clamped);
    const auto b = clamp_interior(1.0);
    CHECK(b.value == kProbClampHi);
    CHECK(b.clamped);
    const auto c = clamp_interior(0.25);
    CHECK(c.value == 0.25);
    CHECK_FALSE(c.clamped);
  }

  TEST_CASE("log pmfs") {
    CHECK(std::abs(poisson_logpmf(3, 2.0) - (3.0 * std::log(2.0) - 2.0 - std::log(6.0))) <= 1e-14);
    // Large rate against lgamma in long double.
    const long double lam = 1e6L;
    const long double want = 1e6L * std::log(lam) - lam - std::lgamma(1e6L + 1.0L);
    CHECK(std::abs(poisson_logpmf(1000000, 1e6) - static_cast<double>(want)) <= 1e-9);
    CHECK(std::abs(binomial_logpmf(2, 5, 0.3) - std::log(10.0 * 0.09 * 0.343)) <= 1e-14);
    CHECK(binomial_logpmf(6, 5, 0.3) == -std::numeric_limits<double>::infinity());
    CHECK(binomial_logpmf(5, 5, 1.0) == 0.0);
    CHECK(std::abs(normal_logpdf(1.0, 0.0, 2.0) - (-0.5 * std::log(2.0 * M_PI) - std::log(2.0) - 0.125)) <= 1e-15);
  }

  TEST_CASE("logistic helpers") {
    CHECK(logistic(0.0) == 0.5);
    CHECK(std::abs(logit(logistic(1.7)) - 1.7) <= 1e-12);
    CHECK(log1p_exp(800.0) == 800.0);
    CHECK(std::abs(log1p_exp(0.0) - std::log(2.0)) <= 1e-15);
    CHECK(log1p_exp(-800.0) >= 0.0);
  }
}
