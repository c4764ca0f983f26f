#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "thinar/design.hpp"
#include "thinar/links.hpp"
#include "thinar/model_spec.hpp"
#include "thinar/rng.hpp"
#include "thinar/series.hpp"
#include "thinar/transform.hpp"

namespace thinar {

/// Derived quantities at one constrained point. Cells use row i * t_len + t0.
/// At a known t = 1 the latent value is the known count and lambda / zstar
/// are NaN.
struct ApproxFields {
  std::size_t strata = 0;
  std::size_t t_len = 0;
  std::vector<double> z;
  std::vector<double> lambda;
  std::vector<double> zstar;
  LinkValues links;
  bool valid = true;  // false when any Z fell at or below z_floor
};

/// Normal-normal approximate posterior of the general thinned model:
///   Z_it ~ N(lambda_it, sd(lambda_it)),  Y_it ~ N(pi_it Z_it, sqrt(pi_it (1 - pi_it) Z_it))
/// with optional binomial prevalence-survey terms on rolling sums of Z.
class ApproxModel {
 public:
  ApproxModel(ModelSpec spec, const ObservedSeries& data, std::vector<SurveyRow> survey = {});

  const ModelSpec& spec() const { return spec_; }
  const Design& design() const { return design_; }
  const ParameterLayout& layout() const { return layout_; }
  std::size_t dim() const { return layout_.unconstrained_size(); }
  const std::vector<double>& known_x1() const { return x1_; }

  /// Log posterior density in unconstrained space, including log-Jacobians.
  /// Fills `grad` (same size as u) when non-empty. Returns -inf in the
  /// rejection region; never throws for finite u.
  double log_density(std::span<const double> u, std::span<double> grad) const;

  ApproxFields fields(std::span<const double> c) const;

  /// Unconstrained starting point: prior medians for link constants, zero
  /// coefficients, latent states set so Z_it = max(y_it / pi_it, 1), all
  /// shifted by uniform(-jitter, jitter) noise on the non-latent coordinates.
  std::vector<double> initial_point(Rng& rng, double jitter = 0.5) const;

 private:
  struct Work;
  double latent_pass(std::span<const double> c, Work& w) const;

  ModelSpec spec_;
  Design design_;
  ParameterLayout layout_;
  std::vector<double> y_;
  std::vector<double> x1_;
  std::vector<SurveyRow> survey_;
};

double log_posterior_approx(const ApproxModel& model, std::span<const double> u, std::span<double> grad);

/// Resolve strata / t_len against the data and check alignment. Throws
/// ValidationError on mismatch.
ModelSpec align_spec(ModelSpec spec, const ObservedSeries& data);

}  // namespace thinar
