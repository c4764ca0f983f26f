#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "thinar/rng.hpp"

namespace thinar {

class ApproxModel;
class ExactModel;

enum class SamplerKind { rwm, hmc };

struct ChainConfig {
  std::size_t n_chains = 4;
  std::size_t n_iter = 2000;  // includes warmup
  std::size_t n_warmup = 1000;
  std::size_t thin = 1;
  std::uint64_t seed = 1;
  SamplerKind sampler = SamplerKind::hmc;
  std::optional<double> target_accept;  // default 0.8 for hmc, 0.44 for rwm
  int n_leapfrog = 32;                  // jittered by +-20% per transition
  double init_jitter = 0.5;

  double accept_target() const;
  void validate() const;
};

/// Post-warmup, post-thinning draws in constrained space. Chain c holds a
/// row-major (n_draws x names.size()) matrix.
struct DrawStore {
  std::vector<std::string> names;
  std::vector<std::vector<double>> chains;
  std::vector<double> accept_rate;  // mean acceptance statistic after warmup
  std::vector<double> step_size;    // hmc step size after warmup (NaN for rwm)

  std::size_t n_chains() const { return chains.size(); }
  std::size_t n_params() const { return names.size(); }
  std::size_t n_draws() const { return chains.empty() || names.empty() ? 0 : chains[0].size() / names.size(); }
  std::optional<std::size_t> find(const std::string& name) const;
  std::size_t column(const std::string& name) const;
  /// Draws of one parameter, one vector per chain.
  std::vector<std::vector<double>> per_chain(std::size_t column) const;
  std::vector<double> pooled(std::size_t column) const;
  double at(std::size_t chain, std::size_t draw, std::size_t column) const {
    return chains[chain][draw * names.size() + column];
  }
};

using LogDensityFn = std::function<double(std::span<const double>, std::span<double>)>;

/// Sampling target in unconstrained space.
struct TargetModel {
  std::size_t dim = 0;
  /// Fills the gradient when the span is non-empty.
  LogDensityFn log_density;
  /// Names of the values returned by to_constrained.
  std::vector<std::string> names;
  /// Identity when unset.
  std::function<std::vector<double>(std::span<const double>)> to_constrained;
  /// Standard normal jitter around zero when unset.
  std::function<std::vector<double>(Rng&)> initial_point;
};

/// Leapfrog HMC with dual-averaged step size and a diagonal inverse metric
/// estimated in windows during warmup.
class HmcKernel {
 public:
  HmcKernel(std::size_t dim, double target_accept, int n_leapfrog, std::size_t n_warmup);

  /// One transition from (q, logp, grad); all three are updated in place.
  /// Returns the acceptance statistic.
  double transition(std::vector<double>& q, double& logp, std::vector<double>& grad, const LogDensityFn& f, Rng& rng);
  /// Initial step size by repeated doubling / halving.
  void init_step_size(const std::vector<double>& q, double logp, const std::vector<double>& grad,
                      const LogDensityFn& f, Rng& rng);
  /// Call once per warmup iteration (0-based) after the transition.
  void adapt(std::size_t iter, const std::vector<double>& q, double accept_stat);

  /// True once after each metric update; the caller then re-initialises
  /// the step size.
  bool take_metric_update() { return std::exchange(metric_updated_, false); }
  double step_size() const { return eps_; }
  const std::vector<double>& inv_metric() const { return inv_metric_; }
  std::size_t divergences() const { return divergences_; }

 private:
  void restart_dual_averaging();

  std::size_t dim_;
  double target_;
  int n_leapfrog_;
  std::size_t n_warmup_;
  double eps_ = 0.1;
  std::vector<double> inv_metric_;
  // dual averaging
  double mu_ = 0.0, h_bar_ = 0.0, log_eps_bar_ = 0.0;
  std::size_t da_count_ = 0;
  // metric windows
  std::size_t init_buffer_ = 75, term_buffer_ = 50, window_size_ = 25, window_end_ = 0;
  std::size_t window_count_ = 0;
  std::vector<double> w_mean_, w_m2_;
  std::size_t divergences_ = 0;
  bool metric_updated_ = false;
};

/// Componentwise Gaussian random-walk Metropolis with Robbins-Monro scale
/// adaptation per coordinate.
class RwmKernel {
 public:
  RwmKernel(std::size_t dim, double target_accept);
  /// Sweep over all coordinates; returns the mean acceptance over the sweep.
  double transition(std::vector<double>& q, double& logp, const LogDensityFn& f, Rng& rng, bool adapt,
                    std::size_t iter);
  const std::vector<double>& scales() const { return log_scale_; }

 private:
  double target_;
  std::vector<double> log_scale_;
};

/// Run independent chains (in parallel, stream = chain index). Throws
/// NumericalError when no finite starting point is found in 100 attempts.
DrawStore run_chains(const TargetModel& target, const ChainConfig& config);

/// Target for the approximate model; constrained output adds the
/// conditional rates "lambda[i,t]" and, for the centred form, "zstar[i,t]".
TargetModel make_approx_target(const ApproxModel& model);

/// Exact model: each iteration is one parameter update given the latent
/// counts followed by one latent sweep per stratum. Stores the constrained
/// parameters and the counts "x[i,t]".
DrawStore run_exact_mcmc(const ExactModel& model, const ChainConfig& config);

// ---- diagnostics ----------------------------------------------------------

/// Split R-hat (no rank normalisation). +inf when the within-chain variance is 0.
double split_rhat(const std::vector<std::vector<double>>& chains);
/// Multi-chain ESS with Geyer's initial positive sequence; NaN for a constant column.
double effective_sample_size(const std::vector<std::vector<double>>& chains);
/// Monte Carlo standard error of the p-quantile of the pooled draws.
double mcse_quantile(const std::vector<std::vector<double>>& chains, double p);

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0, q05 = 0.0, q50 = 0.0, q95 = 0.0, q975 = 0.0;
  double ess = 0.0;
  double rhat = 0.0;
  double mcse_median = 0.0;
};

std::vector<ParameterSummary> summarize(const DrawStore& store);
void write_summary_csv(const std::vector<ParameterSummary>& rows, std::ostream& out);

// ---- draws IO -------------------------------------------------------------

/// Long CSV: chain,iter,parameter,value (1-based chain and iter).
void write_draws_csv(const DrawStore& store, std::ostream& out);
DrawStore read_draws_csv(std::istream& in);
/// Binary layout: magic "THINDRAW", u32 version, u32 chains, u32 params,
/// names as (u32 length, bytes), then per chain u64 draws, f64 accept rate,
/// f64 step size and the row-major f64 matrix; little-endian.
void write_draws_binary(const DrawStore& store, const std::string& path);
DrawStore read_draws_binary(const std::string& path);

}  // namespace thinar
