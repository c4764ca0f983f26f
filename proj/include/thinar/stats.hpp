#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace thinar::stats {

/// Hyndman-Fan type 7 quantile (linear interpolation) of unsorted data.
double quantile_type7(std::span<const double> values, double p);
/// Same, on data already sorted ascending.
double quantile_type7_sorted(std::span<const double> sorted, double p);

/// Smallest value v with empirical cdf(v) >= p; always a value attained by
/// the data. p = 0.5 gives the lower median.
std::int64_t quantile_inverse_ecdf(std::span<const std::int64_t> values, double p);

double mean(std::span<const double> values);

/// Regularised upper incomplete gamma Q(a, x).
double gamma_q(double a, double x);
double chi_squared_sf(double stat, double df);

struct ChiSquaredTest {
  double statistic = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};

/// Pearson goodness of fit of integer draws against a pmf on {0, 1, ...}.
/// Adjacent support points are pooled from each tail inward until every
/// bin expects at least `min_expected` draws.
template <typename Pmf>
ChiSquaredTest chi_squared_gof(std::span<const std::int64_t> draws, Pmf&& pmf, double min_expected = 5.0);

ChiSquaredTest chi_squared_from_bins(std::span<const double> observed, std::span<const double> expected);

}  // namespace thinar::stats

#include <algorithm>
#include <map>

namespace thinar::stats {

template <typename Pmf>
ChiSquaredTest chi_squared_gof(std::span<const std::int64_t> draws, Pmf&& pmf, double min_expected) {
  const double n = static_cast<double>(draws.size());
  std::map<std::int64_t, double> counts;
  for (auto v : draws) counts[v] += 1.0;
  // Support window carrying all but a negligible tail mass.
  const std::int64_t hi = counts.empty() ? 0 : counts.rbegin()->first;
  std::vector<double> probs;
  double mass = 0.0;
  for (std::int64_t k = 0; k <= hi || mass < 1.0 - 1e-12; ++k) {
    probs.push_back(pmf(k));
    mass += probs.back();
    if (k > hi && probs.back() * n < 1e-9) break;
  }
  std::vector<double> obs(probs.size(), 0.0), exp(probs.size());
  for (std::size_t k = 0; k < probs.size(); ++k) exp[k] = probs[k] * n;
  exp.back() += (1.0 - mass) * n;
  const auto last = static_cast<std::int64_t>(probs.size()) - 1;
  for (const auto& [v, c] : counts) obs[static_cast<std::size_t>(std::clamp<std::int64_t>(v, 0, last))] += c;
  // Pool bins: walk left to right accumulating until the bin is large enough.
  std::vector<double> bo, be;
  double o = 0.0, e = 0.0;
  for (std::size_t k = 0; k < exp.size(); ++k) {
    o += obs[k];
    e += exp[k];
    if (e >= min_expected) {
      bo.push_back(o);
      be.push_back(e);
      o = e = 0.0;
    }
  }
  if (e > 0.0 || o > 0.0) {
    if (be.empty()) {
      bo.push_back(o);
      be.push_back(e);
    } else {
      bo.back() += o;
      be.back() += e;
    }
  }
  return chi_squared_from_bins(bo, be);
}

}  // namespace thinar::stats
