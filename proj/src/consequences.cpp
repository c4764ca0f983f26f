#include "thinar/consequences.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "thinar/error.hpp"
#include "thinar/moments.hpp"

namespace thinar {

namespace {

void require_limit_domain(const ThinnedArParams& p) {
  if (!(p.nu > 0.0)) throw DomainError("nu must be positive");
  if (!(p.pi > 0.0 && p.pi <= 1.0)) throw DomainError("pi must lie in (0, 1]");
  if (!(p.phi >= 0.0)) throw DomainError("phi must be nonnegative");
  if (p.phi >= 1.0) throw DomainError("phi >= 1: naive limits require a stationary process");
}

}  // namespace

NaiveLimit naive_limits(const ThinnedArParams& params) {
  require_limit_domain(params);
  const auto latent = stationary_latent_moments(params.nu, params.phi);
  const auto observed = observed_moments_from_latent(latent, params.phi, params.pi);
  NaiveLimit out;
  out.tau_tilde = 1.0 - (1.0 - params.pi) * observed.mean / observed.variance;
  out.phi_lim = out.tau_tilde * params.phi;
  out.nu_lim = (1.0 - out.phi_lim) * params.pi * params.nu / (1.0 - params.phi);
  return out;
}

NaiveDerivatives derivative_formulas(const ThinnedArParams& params) {
  require_limit_domain(params);
  const auto latent = stationary_latent_moments(params.nu, params.phi);
  const double mu = latent.mean;
  const double s2 = latent.variance;
  const double pi = params.pi;
  const double denom = pi * s2 + (1.0 - pi) * mu;
  NaiveDerivatives d;
  d.phi_prime = params.phi * mu * s2 / (denom * denom);
  // nu_lim = (1 - phi(pi)) pi mu, differentiated in pi.
  const double phi_of_pi = naive_limits(params).phi_lim;
  d.nu_prime = mu - phi_of_pi * mu - d.phi_prime * pi * mu;
  return d;
}

double printed_prop1_threshold(double pi) {
  if (!(pi > 0.0 && pi <= 1.0)) throw DomainError("pi must lie in (0, 1]");
  return std::sqrt(std::max(0.0, 1.0 - 1.0 / ((1.0 - pi) + 1.0 / pi)));
}

double nu_prime_quadratic(double pi, double phi, double constant) {
  const double a = pi / (1.0 - phi * phi);
  return (1.0 - phi) * a * a + (2.0 - 2.0 * pi - 2.0 * phi + phi * pi) * a + constant * (1.0 - pi) * (1.0 - pi);
}

PropBounds prop_bounds(double pi, double phi) {
  if (!(pi > 0.0 && pi <= 1.0)) throw DomainError("pi must lie in (0, 1]");
  if (!(phi > 0.0 && phi < 1.0)) throw DomainError("phi must lie in (0, 1)");
  PropBounds b;
  b.prop1_threshold = printed_prop1_threshold(pi);
  b.printed_bound_overestimates = phi < b.prop1_threshold;
  // nu_lim > nu  <=>  (1 - pi)(phi^2 + pi phi - 1) > 0.
  b.overestimates_nu = pi < 1.0 && phi * phi + pi * phi > 1.0;

  b.q_main = nu_prime_quadratic(pi, phi, 1.0);
  b.q_appendix = nu_prime_quadratic(pi, phi, 4.0);
  b.printed_main_claims_negative = b.q_main > 0.0;
  b.printed_appendix_claims_negative = b.q_appendix > 0.0;
  // nu'/mu = 1 - x/y - x/y^2 with x = phi a, y = a + 1 - pi, so
  // nu' < 0  <=>  y^2 - x y - x < 0  <=>  q_main < 0.
  b.nu_prime_negative = b.q_main < 0.0;

  const double nu_prime = derivative_formulas({1.0, phi, pi}).nu_prime;
  b.consistency_warning = (nu_prime < 0.0) != b.nu_prime_negative;
  return b;
}

NaiveFit naive_pois_ar_mle(std::span<const std::int64_t> y, std::optional<NaiveInit> init, int max_iter) {
  if (y.size() < 3) throw ValidationError("naive_pois_ar_mle: need at least 3 observations");
  for (auto v : y) {
    if (v < 0) throw ValidationError("naive_pois_ar_mle: negative count");
  }
  constexpr double kLogLower = -30.0;
  constexpr double kGradTol = 1e-8;
  constexpr double kStepTol = 1e-10;
  // Estimates below exp(kLogBoundary) are reported as boundary fits.
  const double kLogBoundary = std::log(1e-8);

  NaiveInit start{1.0, 0.5};
  if (init) {
    start = *init;
  } else {
    double mean = 0.0;
    for (auto v : y) mean += static_cast<double>(v);
    mean /= static_cast<double>(y.size());
    double acf1 = 0.5;
    try {
      acf1 = sample_moments(y).acf1;
    } catch (const NumericalError&) {
    }
    start.phi = std::clamp(acf1, 0.05, 0.95);
    start.nu = std::max(mean * (1.0 - start.phi), 0.1);
  }
  if (!(start.nu > 0.0 && start.phi > 0.0)) throw DomainError("naive_pois_ar_mle: initial values must be positive");

  // Sufficient pieces of the conditional likelihood over t = 2..T.
  const std::size_t n = y.size() - 1;
  auto evaluate = [&](double a, double b, double* g, double* h) {
    const double nu = std::exp(a);
    const double phi = std::exp(b);
    double ll = 0.0, d_nu = 0.0, d_phi = 0.0, h_nn = 0.0, h_np = 0.0, h_pp = 0.0;
    for (std::size_t t = 1; t < y.size(); ++t) {
      const double prev = static_cast<double>(y[t - 1]);
      const double obs = static_cast<double>(y[t]);
      const double lam = nu + phi * prev;
      ll += (obs > 0.0 ? obs * std::log(lam) : 0.0) - lam - std::lgamma(obs + 1.0);
      const double r = obs / lam - 1.0;
      d_nu += r;
      d_phi += r * prev;
      if (h) {
        const double w = obs / (lam * lam);
        h_nn -= w;
        h_np -= w * prev;
        h_pp -= w * prev * prev;
      }
    }
    if (g) {
      g[0] = nu * d_nu;
      g[1] = phi * d_phi;
    }
    if (h) {
      h[0] = nu * d_nu + nu * nu * h_nn;
      h[1] = nu * phi * h_np;
      h[2] = phi * d_phi + phi * phi * h_pp;
    }
    return ll;
  };

  double a = std::log(start.nu);
  double b = std::log(start.phi);
  double g[2], h[3];
  double ll = evaluate(a, b, g, h);
  NaiveFit fit;
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    const bool a_pinned = a <= kLogLower && g[0] < 0.0;
    const bool b_pinned = b <= kLogLower && g[1] < 0.0;
    const double ga = a_pinned ? 0.0 : g[0];
    const double gb = b_pinned ? 0.0 : g[1];
    if (std::max(std::abs(ga), std::abs(gb)) < kGradTol) {
      fit.converged = true;
      break;
    }
    // Newton direction on the free coordinates; coordinatewise Newton or
    // scaled ascent when the Hessian is not negative definite.
    double da = 0.0, db = 0.0;
    bool newton = false;
    if (a_pinned || b_pinned) {
      if (!a_pinned) da = h[0] < 0.0 ? -ga / h[0] : ga / std::max(1.0, std::abs(ga));
      if (!b_pinned) db = h[2] < 0.0 ? -gb / h[2] : gb / std::max(1.0, std::abs(gb));
    } else {
      const double det = h[0] * h[2] - h[1] * h[1];
      if (h[0] < 0.0 && det > 0.0) {
        da = -(h[2] * ga - h[1] * gb) / det;
        db = -(-h[1] * ga + h[0] * gb) / det;
        newton = true;
      } else {
        da = h[0] < 0.0 ? -ga / h[0] : ga / std::max(1.0, std::abs(ga));
        db = h[2] < 0.0 ? -gb / h[2] : gb / std::max(1.0, std::abs(gb));
      }
    }
    const double max_step = 5.0;
    const double len = std::max(std::abs(da), std::abs(db));
    if (newton && len < kStepTol) {
      fit.converged = true;
      break;
    }
    if (len > max_step) {
      da *= max_step / len;
      db *= max_step / len;
    }
    double step = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 60; ++halving) {
      const double na = std::max(kLogLower, a + step * da);
      const double nb = std::max(kLogLower, b + step * db);
      double ng[2];
      const double nll = evaluate(na, nb, ng, nullptr);
      if (std::isfinite(nll) && nll >= ll) {
        improved = nll > ll || (na != a || nb != b);
        a = na;
        b = nb;
        break;
      }
      step *= 0.5;
    }
    const double prev_ll = ll;
    ll = evaluate(a, b, g, h);
    if (!improved || ll - prev_ll <= 1e-15 * std::abs(ll)) {
      // Stalled at machine precision; accept when the mean gradient is negligible.
      const double scale = static_cast<double>(n);
      const bool a_fix = a <= kLogLower && g[0] < 0.0;
      const bool b_fix = b <= kLogLower && g[1] < 0.0;
      const double ga2 = a_fix ? 0.0 : g[0];
      const double gb2 = b_fix ? 0.0 : g[1];
      fit.converged = std::max(std::abs(ga2), std::abs(gb2)) < kGradTol * scale || (newton && len < 1e-6);
      ++iter;
      break;
    }
  }
  fit.iterations = iter;
  fit.nu_hat = std::exp(a);
  fit.phi_hat = std::exp(b);
  fit.loglik = ll;
  fit.at_boundary = a <= kLogBoundary || b <= kLogBoundary;
  if (fit.at_boundary) fit.converged = false;

  // Observed information on the natural scale.
  double i_nn = 0.0, i_np = 0.0, i_pp = 0.0;
  for (std::size_t t = 1; t < y.size(); ++t) {
    const double prev = static_cast<double>(y[t - 1]);
    const double lam = fit.nu_hat + fit.phi_hat * prev;
    const double w = static_cast<double>(y[t]) / (lam * lam);
    i_nn += w;
    i_np += w * prev;
    i_pp += w * prev * prev;
  }
  const double det = i_nn * i_pp - i_np * i_np;
  if (det > 0.0) {
    fit.se_nu = std::sqrt(i_pp / det);
    fit.se_phi = std::sqrt(i_nn / det);
  } else {
    fit.se_nu = fit.se_phi = NAN;
  }
  return fit;
}

}  // namespace thinar
