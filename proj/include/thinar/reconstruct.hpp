#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "thinar/mcmc.hpp"
#include "thinar/model_spec.hpp"
#include "thinar/series.hpp"

namespace thinar {

/// Integer count draws on an (S x T) grid; draw d, cell (i, t) at
/// values[d * S * T + i * T + t].
struct CountDraws {
  std::size_t strata = 0;
  std::size_t t_len = 0;
  std::vector<std::int64_t> values;
  /// Draws dropped because a rate was not positive.
  std::size_t excluded = 0;

  std::size_t cells() const { return strata * t_len; }
  std::size_t n_draws() const { return cells() == 0 ? 0 : values.size() / cells(); }
};

/// X = F^{-1}(Phi(z*)) per draw and cell, with F the Poisson(lambda) cdf, or
/// the negative binomial with mean lambda and size psi[d] when psi is given.
/// zstar and lambda are (n_draws x cells) row-major. Draws with any
/// lambda <= 0 (or non-finite) are excluded and counted.
CountDraws reconstruct_counts(std::span<const double> zstar, std::span<const double> lambda, std::size_t strata,
                              std::size_t t_len, std::span<const double> psi = {});

/// Reconstructed counts from approximate-model draws (columns "zstar[i,t]"
/// and "lambda[i,t]", plus "psi" for negative binomial counts). Known x_1
/// values fill t = 1.
CountDraws counts_from_approx_draws(const DrawStore& store, const ModelSpec& spec);
/// Latent counts "x[i,t]" stored by the exact engine.
CountDraws counts_from_exact_draws(const DrawStore& store, std::size_t strata, std::size_t t_len);

struct ReconstructionSummary {
  std::size_t strata = 0;
  std::size_t t_len = 0;
  double level = 0.9;
  std::vector<std::int64_t> median;
  std::vector<std::int64_t> lo;
  std::vector<std::int64_t> hi;
};

/// Lower median and equal-tailed bounds, each a value attained by the draws.
ReconstructionSummary summarize_counts(const CountDraws& draws, double level);

/// Percentage of (cell, statistic) pairs with equal integers over median, lo
/// and hi. The first `skip_leading` time points of each stratum are left out
/// (e.g. a known x_1).
double perfect_match_rate(const ReconstructionSummary& a, const ReconstructionSummary& b,
                          std::size_t skip_leading = 0);

void write_reconstruction_csv(const ReconstructionSummary& s, std::ostream& out);

/// Real-valued draws on an (S x T) grid, same layout as CountDraws.
struct PrevalenceDraws {
  std::size_t strata = 0;
  std::size_t t_len = 0;
  std::vector<double> values;

  std::size_t cells() const { return strata * t_len; }
  std::size_t n_draws() const { return cells() == 0 ? 0 : values.size() / cells(); }
};

/// P_t = sum_{k < window} X_{t-k} / population, with partial windows at the
/// start. `population` has one entry or one per stratum.
PrevalenceDraws prevalence_rollup(const CountDraws& draws, std::size_t window, std::span<const double> population);

struct IntervalRow {
  std::size_t stratum = 0;  // 1-based
  std::size_t t = 0;        // 1-based
  double median = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

std::vector<IntervalRow> summarize_prevalence(const PrevalenceDraws& draws, double level);
/// CSV `stratum,t,median,lo,hi`.
void write_interval_csv(const std::vector<IntervalRow>& rows, std::ostream& out);

struct SmoothedPrevalence {
  DrawStore draws;  // "sigma_xi[i]" and "xi[i,d]" with d the survey day
  std::vector<IntervalRow> summary;
};

/// Random-walk smoother on logit prevalence per stratum:
///   P_k ~ Bin(R_k, xi_k), logit xi_1 ~ N(0, 5),
///   logit xi_k ~ N(logit xi_{k-1}, sigma), sigma ~ Exp(0.01),
/// over the survey rows of each stratum in day order. Sampled by HMC in a
/// non-centred form.
SmoothedPrevalence smooth_prevalence(const std::vector<SurveyRow>& rows, const ChainConfig& config,
                                     double level = 0.95);

}  // namespace thinar
