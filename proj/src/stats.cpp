#include "thinar/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "thinar/error.hpp"

namespace thinar::stats {

double quantile_type7_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw ValidationError("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double quantile_type7(std::span<const double> values, double p) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return quantile_type7_sorted(sorted, p);
}

std::int64_t quantile_inverse_ecdf(std::span<const std::int64_t> values, double p) {
  if (values.empty()) throw ValidationError("quantile of empty sample");
  std::vector<std::int64_t> sorted(values.begin(), values.end());
  const auto n = static_cast<double>(sorted.size());
  // ceil(n p) with a guard against representation error in n p.
  auto rank = static_cast<std::size_t>(std::ceil(n * p - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1), sorted.end());
  return sorted[rank - 1];
}

double mean(std::span<const double> values) {
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw DomainError("gamma_q: need a > 0 and x >= 0");
  if (x == 0.0) return 1.0;
  const double log_front = a * std::log(x) - x - std::lgamma(a);
  if (x < a + 1.0) {
    // Series for P(a, x).
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 10000; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return 1.0 - sum * std::exp(log_front);
  }
  // Lentz continued fraction for Q(a, x).
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(log_front) * h;
}

double chi_squared_sf(double stat, double df) { return gamma_q(0.5 * df, 0.5 * std::max(stat, 0.0)); }

ChiSquaredTest chi_squared_from_bins(std::span<const double> observed, std::span<const double> expected) {
  if (observed.size() != expected.size() || observed.size() < 2) {
    throw ValidationError("chi-squared test needs at least two matching bins");
  }
  ChiSquaredTest t;
  for (std::size_t k = 0; k < observed.size(); ++k) {
    const double d = observed[k] - expected[k];
    t.statistic += d * d / expected[k];
  }
  t.df = static_cast<double>(observed.size() - 1);
  t.p_value = chi_squared_sf(t.statistic, t.df);
  return t;
}

}  // namespace thinar::stats
