#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "thinar/params.hpp"

namespace thinar {

/// Probability limits of (phi, nu) estimated by a Poisson autoregression
/// that ignores binomial thinning.
struct NaiveLimit {
  double phi_lim = 0.0;
  double nu_lim = 0.0;
  double tau_tilde = 1.0;
};

NaiveLimit naive_limits(const ThinnedArParams& params);

/// d phi_lim / d pi and d nu_lim / d pi.
struct NaiveDerivatives {
  double phi_prime = 0.0;
  double nu_prime = 0.0;
};

NaiveDerivatives derivative_formulas(const ThinnedArParams& params);

/// The threshold curve sqrt(1 - 1/((1-pi) + 1/pi)) as printed for the
/// over-estimation bound. See PropBounds for how it relates to the exact
/// over-estimation region.
double printed_prop1_threshold(double pi);

/// The quadratic whose sign governs the sign of d nu_lim / d pi, with
/// a = pi / (1 - phi^2):
///   (1-phi) a^2 + (2 - 2pi - 2phi + phi pi) a + c (1-pi)^2,
/// where c = 1 for the main-text form and c = 4 for the appendix form.
double nu_prime_quadratic(double pi, double phi, double constant);

struct PropBounds {
  double prop1_threshold = 0.0;
  /// nu_lim > nu, from the exact condition phi^2 + pi phi > 1 (pi < 1).
  bool overestimates_nu = false;
  /// phi < prop1_threshold, the bound as printed.
  bool printed_bound_overestimates = false;
  /// d nu_lim / d pi < 0, from q_main < 0.
  bool nu_prime_negative = false;
  double q_main = 0.0;
  double q_appendix = 0.0;
  /// Verdicts of the printed inequalities, which read "nu' < 0 iff q > 0".
  bool printed_main_claims_negative = false;
  bool printed_appendix_claims_negative = false;
  /// Closed form disagrees with the sign of derivative_formulas().nu_prime.
  bool consistency_warning = false;
};

PropBounds prop_bounds(double pi, double phi);

struct NaiveFit {
  double nu_hat = 0.0;
  double phi_hat = 0.0;
  double loglik = 0.0;
  bool converged = false;
  bool at_boundary = false;
  int iterations = 0;
  /// Standard errors from the observed information (natural scale).
  double se_nu = 0.0;
  double se_phi = 0.0;
};

struct NaiveInit {
  double nu;
  double phi;
};

/// Conditional Poisson autoregression MLE, y_t ~ Poisson(nu + phi y_{t-1}),
/// by Newton iterations on (log nu, log phi) with step halving.
NaiveFit naive_pois_ar_mle(std::span<const std::int64_t> y, std::optional<NaiveInit> init = std::nullopt,
                           int max_iter = 200);

}  // namespace thinar
