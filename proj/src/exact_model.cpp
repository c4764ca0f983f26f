#include "thinar/exact_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "thinar/approx_model.hpp"
#include "thinar/error.hpp"
#include "thinar/links.hpp"
#include "thinar/moments.hpp"
#include "thinar/numerics.hpp"

namespace thinar {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double rate_at(const LatentTarget& tg, std::span<const std::int64_t> x, std::size_t t) {
  if (t == 0) return tg.lambda1;
  double s = 0.0;
  const std::size_t J = tg.theta.size();
  for (std::size_t j = 1; j <= std::min(J, t); ++j) s += tg.theta[j - 1] * static_cast<double>(x[t - j]);
  return tg.nu + tg.phi * s;
}

// Terms of the log joint that involve x_t.
double local_terms(const LatentTarget& tg, std::span<const std::int64_t> x, std::span<const std::int64_t> y,
                   std::size_t t) {
  double lp = numerics::binomial_logpmf(y[t], x[t], tg.pi);
  if (!std::isfinite(lp)) return kNegInf;
  if (t > 0 || !tg.x1_known) lp += numerics::poisson_logpmf(x[t], rate_at(tg, x, t));
  const std::size_t T = x.size();
  for (std::size_t j = 1; j <= tg.theta.size() && t + j < T; ++j) {
    lp += numerics::poisson_logpmf(x[t + j], rate_at(tg, x, t + j));
  }
  return lp;
}

}  // namespace

double log_joint_exact(const ThinnedArParams& params, std::span<const std::int64_t> x,
                       std::span<const std::int64_t> y) {
  params.validate();
  if (x.size() != y.size()) throw ValidationError("log_joint_exact: x and y differ in length");
  double lp = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double b = numerics::binomial_logpmf(y[t], x[t], params.pi);
    if (!std::isfinite(b)) return kNegInf;
    lp += b;
    if (t > 0) lp += numerics::poisson_logpmf(x[t], params.nu + params.phi * static_cast<double>(x[t - 1]));
  }
  return lp;
}

LatentUpdate update_latent_counts(std::span<std::int64_t> x, std::span<const std::int64_t> y,
                                  const LatentTarget& target, std::int64_t width, Rng& rng) {
  if (x.size() != y.size()) throw ValidationError("update_latent_counts: x and y differ in length");
  if (width < 1) throw ValidationError("update_latent_counts: width must be >= 1");
  LatentUpdate out;
  for (std::size_t t = target.x1_known ? 1 : 0; t < x.size(); ++t) {
    ++out.proposed;
    const std::int64_t step = rng.uniform_int(1, width);
    const std::int64_t proposal = rng.uniform() < 0.5 ? x[t] - step : x[t] + step;
    if (proposal < y[t]) continue;
    const std::int64_t current = x[t];
    const double before = local_terms(target, x, y, t);
    x[t] = proposal;
    const double after = local_terms(target, x, y, t);
    const double log_ratio = after - before;
    if (log_ratio >= 0.0 || std::log(rng.uniform()) < log_ratio) {
      ++out.accepted;
    } else {
      x[t] = current;
    }
  }
  return out;
}

LatentUpdate update_latent_counts(std::span<std::int64_t> x, std::span<const std::int64_t> y,
                                  const ThinnedArParams& params, std::int64_t width, Rng& rng) {
  params.validate();
  LatentTarget tg;
  tg.nu = params.nu;
  tg.phi = params.phi;
  tg.pi = params.pi;
  return update_latent_counts(x, y, tg, width, rng);
}

std::int64_t latent_proposal_width(double nu, double phi, std::span<const std::int64_t> x) {
  double var;
  if (phi < 1.0 && phi >= 0.0 && nu > 0.0) {
    var = stationary_latent_moments(nu, phi).variance;
  } else {
    double mean = 0.0;
    for (auto v : x) mean += static_cast<double>(v);
    mean /= static_cast<double>(std::max<std::size_t>(x.size(), 1));
    var = 0.0;
    for (auto v : x) var += (static_cast<double>(v) - mean) * (static_cast<double>(v) - mean);
    var /= static_cast<double>(std::max<std::size_t>(x.size(), 1));
  }
  const double w = std::round(std::sqrt(3.0 * var));
  if (!std::isfinite(w)) return 1;
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(w));
}

ExactModel::ExactModel(ModelSpec spec, const ObservedSeries& data) : spec_(align_spec(std::move(spec), data)) {
  for (LinkTarget target : {LinkTarget::nu, LinkTarget::phi, LinkTarget::pi}) {
    const LinkBlock& b = spec_.link(target);
    if (!b.present || !b.constant) {
      throw ValidationError(std::string("exact engine needs a constant ") + to_string(target) + " link");
    }
  }
  if (spec_.count_family != CountFamily::poisson) throw ValidationError("exact engine supports Poisson counts only");
  if (spec_.theta.estimated) throw ValidationError("exact engine needs fixed serial-interval weights");
  if (spec_.aux.present) throw ValidationError("exact engine does not take aux survey data");
  design_ = build_design(spec_, spec_.strata, spec_.t_len, data.covariates);
  layout_ = ParameterLayout::build(spec_, design_, false);
  y_ = data.y;
}

LatentTarget ExactModel::latent_target(std::span<const double> c, std::size_t stratum) const {
  LatentTarget tg;
  tg.nu = c[layout_.block(*layout_.link_constant(LinkTarget::nu)).con_offset];
  tg.phi = c[layout_.block(*layout_.link_constant(LinkTarget::phi)).con_offset];
  tg.pi = c[layout_.block(*layout_.link_constant(LinkTarget::pi)).con_offset];
  tg.theta = spec_.theta.fixed;
  tg.x1_known = spec_.x1.mode == X1Spec::Mode::known;
  if (!tg.x1_known) tg.lambda1 = c[layout_.block(*layout_.lambda1_block()).con_offset + stratum];
  return tg;
}

double ExactModel::log_density(std::span<const double> u, std::span<double> grad, std::span<const std::int64_t> x,
                               bool include_constants) const {
  const bool want = !grad.empty();
  if (want) std::fill(grad.begin(), grad.end(), 0.0);
  std::vector<double> c(layout_.constrained_size());
  double lp;
  try {
    lp = layout_.constrain(u, c);
  } catch (const DomainError&) {
    return kNegInf;
  }
  std::vector<double> gc(want ? c.size() : 0, 0.0);
  lp += log_prior_blocks(layout_, c, gc);
  if (!std::isfinite(lp)) return kNegInf;

  const std::size_t S = spec_.strata;
  const std::size_t T = spec_.t_len;
  const std::size_t nu_i = layout_.block(*layout_.link_constant(LinkTarget::nu)).con_offset;
  const std::size_t phi_i = layout_.block(*layout_.link_constant(LinkTarget::phi)).con_offset;
  const std::size_t pi_i = layout_.block(*layout_.link_constant(LinkTarget::pi)).con_offset;
  const double nu = c[nu_i];
  const double phi = c[phi_i];
  const double pi = c[pi_i];
  const std::vector<double>& theta = spec_.theta.fixed;
  const bool known = spec_.x1.mode == X1Spec::Mode::known;
  double g_nu = 0.0, g_phi = 0.0, g_pi = 0.0;
  for (std::size_t i = 0; i < S; ++i) {
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t r = i * T + t;
      if (y_[r] > x[r] || x[r] < 0) return kNegInf;
      if (include_constants) {
        lp += numerics::binomial_logpmf(y_[r], x[r], pi);
      } else {
        const double yr = static_cast<double>(y_[r]);
        const double miss = static_cast<double>(x[r] - y_[r]);
        if (yr > 0.0) lp += yr * std::log(pi);
        if (miss > 0.0) lp += miss * std::log1p(-pi);
      }
      if (want) {
        g_pi += static_cast<double>(y_[r]) / pi;
        if (x[r] > y_[r]) g_pi -= static_cast<double>(x[r] - y_[r]) / (1.0 - pi);
      }
      if (t == 0) {
        if (known) continue;
        const std::size_t l1 = layout_.block(*layout_.lambda1_block()).con_offset + i;
        lp += include_constants ? numerics::poisson_logpmf(x[r], c[l1])
                                : static_cast<double>(x[r]) * std::log(c[l1]) - c[l1];
        if (want) gc[l1] += static_cast<double>(x[r]) / c[l1] - 1.0;
        continue;
      }
      double s = 0.0;
      for (std::size_t j = 1; j <= std::min(theta.size(), t); ++j) s += theta[j - 1] * static_cast<double>(x[r - j]);
      const double lam = nu + phi * s;
      lp += include_constants ? numerics::poisson_logpmf(x[r], lam)
                              : (x[r] > 0 ? static_cast<double>(x[r]) * std::log(lam) : 0.0) - lam;
      if (want) {
        const double d = static_cast<double>(x[r]) / lam - 1.0;
        g_nu += d;
        g_phi += d * s;
      }
    }
  }
  if (!std::isfinite(lp)) return kNegInf;
  if (want) {
    gc[nu_i] += g_nu;
    gc[phi_i] += g_phi;
    gc[pi_i] += g_pi;
    layout_.backprop(u, c, gc, grad);
  }
  return lp;
}

std::vector<std::int64_t> ExactModel::initial_latent(std::span<const double> c) const {
  const double pi = c[layout_.block(*layout_.link_constant(LinkTarget::pi)).con_offset];
  const bool known = spec_.x1.mode == X1Spec::Mode::known;
  std::vector<std::int64_t> x(y_.size());
  for (std::size_t i = 0; i < spec_.strata; ++i) {
    for (std::size_t t = 0; t < spec_.t_len; ++t) {
      const std::size_t r = i * spec_.t_len + t;
      if (t == 0 && known) {
        x[r] = static_cast<std::int64_t>(std::llround(spec_.x1.known_values[i]));
        continue;
      }
      const auto scaled = static_cast<std::int64_t>(std::llround(static_cast<double>(y_[r]) / pi));
      x[r] = std::max(y_[r], scaled);
    }
  }
  return x;
}

std::vector<double> ExactModel::initial_point(Rng& rng, double jitter) const {
  std::vector<double> c(layout_.constrained_size());
  for (const auto& b : layout_.blocks()) {
    for (std::size_t k = 0; k < b.con_size; ++k) {
      c[b.con_offset + k] = b.role == BlockRole::lambda1
                                ? std::max(static_cast<double>(y_[k * spec_.t_len]), 1.0)
                                : b.prior.median();
    }
  }
  std::vector<double> u(layout_.unconstrained_size());
  layout_.unconstrain(c, u);
  for (double& v : u) v += jitter * (2.0 * rng.uniform() - 1.0);
  return u;
}

}  // namespace thinar
