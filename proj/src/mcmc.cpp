#include "thinar/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "thinar/approx_model.hpp"
#include "thinar/error.hpp"
#include "thinar/exact_model.hpp"
#include "thinar/parallel.hpp"
#include "thinar/transform.hpp"

namespace thinar {

namespace {

constexpr int kInitAttempts = 100;
// dual averaging constants
constexpr double kGamma = 0.05;
constexpr double kT0 = 10.0;
constexpr double kKappa = 0.75;
constexpr double kDivergence = 1000.0;

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

double ChainConfig::accept_target() const {
  if (target_accept) return *target_accept;
  return sampler == SamplerKind::hmc ? 0.8 : 0.44;
}

void ChainConfig::validate() const {
  if (n_chains < 1) throw ValidationError("chains must be >= 1");
  if (n_iter < 1) throw ValidationError("iterations must be >= 1");
  if (n_warmup >= n_iter) throw ValidationError("warmup must be smaller than the number of iterations");
  if (thin < 1) throw ValidationError("thin must be >= 1");
  const double a = accept_target();
  if (!(a > 0.0 && a < 1.0)) throw ValidationError("target acceptance must lie in (0, 1)");
  if (n_leapfrog < 1) throw ValidationError("leapfrog steps must be >= 1");
}

std::optional<std::size_t> DrawStore::find(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names.begin());
}

std::size_t DrawStore::column(const std::string& name) const {
  const auto c = find(name);
  if (!c) throw ValidationError("draws have no parameter '" + name + "'");
  return *c;
}

std::vector<std::vector<double>> DrawStore::per_chain(std::size_t column) const {
  std::vector<std::vector<double>> out(n_chains());
  const std::size_t n = n_draws();
  for (std::size_t c = 0; c < n_chains(); ++c) {
    out[c].resize(n);
    for (std::size_t d = 0; d < n; ++d) out[c][d] = at(c, d, column);
  }
  return out;
}

std::vector<double> DrawStore::pooled(std::size_t column) const {
  std::vector<double> out;
  out.reserve(n_chains() * n_draws());
  for (std::size_t c = 0; c < n_chains(); ++c) {
    for (std::size_t d = 0; d < n_draws(); ++d) out.push_back(at(c, d, column));
  }
  return out;
}

// ---- HMC -------------------------------------------------------------------

HmcKernel::HmcKernel(std::size_t dim, double target_accept, int n_leapfrog, std::size_t n_warmup)
    : dim_(dim), target_(target_accept), n_leapfrog_(n_leapfrog), n_warmup_(n_warmup), inv_metric_(dim, 1.0) {
  if (n_warmup_ < 20) {
    init_buffer_ = n_warmup_;
    term_buffer_ = 0;
    window_size_ = 0;
  } else if (init_buffer_ + term_buffer_ + window_size_ > n_warmup_) {
    init_buffer_ = static_cast<std::size_t>(0.15 * static_cast<double>(n_warmup_));
    term_buffer_ = static_cast<std::size_t>(0.1 * static_cast<double>(n_warmup_));
    window_size_ = n_warmup_ - init_buffer_ - term_buffer_;
  }
  window_end_ = init_buffer_ + window_size_ - 1;
  w_mean_.assign(dim_, 0.0);
  w_m2_.assign(dim_, 0.0);
  restart_dual_averaging();
}

void HmcKernel::restart_dual_averaging() {
  mu_ = std::log(10.0 * eps_);
  h_bar_ = 0.0;
  log_eps_bar_ = 0.0;
  da_count_ = 0;
}

double HmcKernel::transition(std::vector<double>& q, double& logp, std::vector<double>& grad, const LogDensityFn& f,
                             Rng& rng) {
  std::vector<double> p(dim_);
  double kinetic0 = 0.0;
  for (std::size_t k = 0; k < dim_; ++k) {
    p[k] = rng.normal() / std::sqrt(inv_metric_[k]);
    kinetic0 += 0.5 * inv_metric_[k] * p[k] * p[k];
  }
  const double h0 = -logp + kinetic0;
  const int steps = std::max(1, static_cast<int>(std::lround(n_leapfrog_ * (0.8 + 0.4 * rng.uniform()))));
  std::vector<double> q1 = q;
  std::vector<double> g1 = grad;
  double lp1 = logp;
  bool diverged = false;
  for (std::size_t k = 0; k < dim_; ++k) p[k] += 0.5 * eps_ * g1[k];
  for (int s = 0; s < steps; ++s) {
    for (std::size_t k = 0; k < dim_; ++k) q1[k] += eps_ * inv_metric_[k] * p[k];
    lp1 = f(q1, g1);
    if (!std::isfinite(lp1) || !all_finite(g1)) {
      diverged = true;
      break;
    }
    const double scale = s + 1 == steps ? 0.5 : 1.0;
    for (std::size_t k = 0; k < dim_; ++k) p[k] += scale * eps_ * g1[k];
  }
  double stat = 0.0;
  if (!diverged) {
    double kinetic1 = 0.0;
    for (std::size_t k = 0; k < dim_; ++k) kinetic1 += 0.5 * inv_metric_[k] * p[k] * p[k];
    const double h1 = -lp1 + kinetic1;
    if (!std::isfinite(h1) || h1 - h0 > kDivergence) {
      diverged = true;
    } else {
      stat = std::min(1.0, std::exp(h0 - h1));
    }
  }
  if (diverged) {
    ++divergences_;
    return 0.0;
  }
  if (rng.uniform() < stat) {
    q = std::move(q1);
    grad = std::move(g1);
    logp = lp1;
  }
  return stat;
}

void HmcKernel::init_step_size(const std::vector<double>& q, double logp, const std::vector<double>& grad,
                               const LogDensityFn& f, Rng& rng) {
  auto one_step = [&](double eps) {
    std::vector<double> p(dim_), q1 = q, g1 = grad;
    double kinetic0 = 0.0;
    for (std::size_t k = 0; k < dim_; ++k) {
      p[k] = rng.normal() / std::sqrt(inv_metric_[k]);
      kinetic0 += 0.5 * inv_metric_[k] * p[k] * p[k];
    }
    for (std::size_t k = 0; k < dim_; ++k) p[k] += 0.5 * eps * g1[k];
    for (std::size_t k = 0; k < dim_; ++k) q1[k] += eps * inv_metric_[k] * p[k];
    const double lp1 = f(q1, g1);
    if (!std::isfinite(lp1) || !all_finite(g1)) return -std::numeric_limits<double>::infinity();
    double kinetic1 = 0.0;
    for (std::size_t k = 0; k < dim_; ++k) {
      p[k] += 0.5 * eps * g1[k];
      kinetic1 += 0.5 * inv_metric_[k] * p[k] * p[k];
    }
    return (lp1 - kinetic1) - (logp - kinetic0);
  };
  double delta = one_step(eps_);
  const int direction = delta > std::log(0.8) ? 1 : -1;
  for (int it = 0; it < 100; ++it) {
    if (direction == 1) {
      if (!(delta > std::log(0.8))) break;
      eps_ *= 2.0;
    } else {
      if (delta > std::log(0.8)) break;
      eps_ *= 0.5;
    }
    if (eps_ > 1e7 || eps_ < 1e-10) break;
    delta = one_step(eps_);
  }
  if (direction == 1 && !(delta > std::log(0.8))) eps_ *= 0.5;
  restart_dual_averaging();
}

void HmcKernel::adapt(std::size_t iter, const std::vector<double>& q, double accept_stat) {
  ++da_count_;
  const double count = static_cast<double>(da_count_);
  const double eta = 1.0 / (count + kT0);
  h_bar_ = (1.0 - eta) * h_bar_ + eta * (target_ - accept_stat);
  const double log_eps = mu_ - std::sqrt(count) / kGamma * h_bar_;
  const double x_eta = std::pow(count, -kKappa);
  log_eps_bar_ = x_eta * log_eps + (1.0 - x_eta) * log_eps_bar_;
  eps_ = std::exp(log_eps);

  if (window_size_ > 0 && iter >= init_buffer_ && iter + term_buffer_ < n_warmup_) {
    ++window_count_;
    const double n = static_cast<double>(window_count_);
    for (std::size_t k = 0; k < dim_; ++k) {
      const double d = q[k] - w_mean_[k];
      w_mean_[k] += d / n;
      w_m2_[k] += d * (q[k] - w_mean_[k]);
    }
    if (iter == window_end_) {
      for (std::size_t k = 0; k < dim_; ++k) {
        const double var = window_count_ > 1 ? w_m2_[k] / (n - 1.0) : 1.0;
        inv_metric_[k] = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
      }
      window_count_ = 0;
      std::fill(w_mean_.begin(), w_mean_.end(), 0.0);
      std::fill(w_m2_.begin(), w_m2_.end(), 0.0);
      const std::size_t boundary = n_warmup_ - term_buffer_ - 1;
      window_size_ *= 2;
      std::size_t next = window_end_ + window_size_;
      if (next + 2 * window_size_ > boundary) next = boundary;
      if (window_end_ >= boundary) next = n_warmup_;  // no further windows
      window_end_ = next;
      metric_updated_ = true;
    }
  }
  if (iter + 1 == n_warmup_) eps_ = std::exp(log_eps_bar_);
}

// ---- RWM -------------------------------------------------------------------

RwmKernel::RwmKernel(std::size_t dim, double target_accept) : target_(target_accept), log_scale_(dim, 0.0) {}

double RwmKernel::transition(std::vector<double>& q, double& logp, const LogDensityFn& f, Rng& rng, bool adapt,
                             std::size_t iter) {
  double total = 0.0;
  const double rate = std::pow(static_cast<double>(iter) + 1.0, -0.6);
  for (std::size_t k = 0; k < q.size(); ++k) {
    const double old = q[k];
    q[k] = old + std::exp(log_scale_[k]) * rng.normal();
    const double lp = f(q, {});
    const double a = std::isfinite(lp) ? std::min(1.0, std::exp(lp - logp)) : 0.0;
    if (rng.uniform() < a) {
      logp = lp;
    } else {
      q[k] = old;
    }
    if (adapt) log_scale_[k] += (a - target_) * rate;
    total += a;
  }
  return q.empty() ? 1.0 : total / static_cast<double>(q.size());
}

// ---- drivers ---------------------------------------------------------------

namespace {

struct ChainResult {
  std::vector<double> draws;
  double accept = 0.0;
  double step = NAN;
};

std::vector<double> find_initial_point(const TargetModel& target, double& logp, std::vector<double>& grad,
                                       Rng& rng, bool need_grad) {
  for (int attempt = 0; attempt < kInitAttempts; ++attempt) {
    std::vector<double> u;
    if (target.initial_point) {
      u = target.initial_point(rng);
    } else {
      u.resize(target.dim);
      for (double& v : u) v = 2.0 * (2.0 * rng.uniform() - 1.0);
    }
    grad.assign(target.dim, 0.0);
    logp = target.log_density(u, need_grad ? std::span<double>(grad) : std::span<double>());
    if (std::isfinite(logp) && (!need_grad || all_finite(grad))) return u;
  }
  throw NumericalError("initialisation failed: no finite log density after 100 attempts");
}

}  // namespace

DrawStore run_chains(const TargetModel& target, const ChainConfig& config) {
  config.validate();
  if (target.dim == 0) throw ValidationError("target has no parameters");
  DrawStore store;
  if (!target.names.empty()) {
    store.names = target.names;
  } else {
    for (std::size_t k = 0; k < target.dim; ++k) store.names.push_back("u[" + std::to_string(k + 1) + "]");
  }
  auto constrain = [&](const std::vector<double>& u) {
    return target.to_constrained ? target.to_constrained(u) : u;
  };
  std::vector<ChainResult> results(config.n_chains);
  parallel_for(config.n_chains, [&](std::size_t chain) {
    Rng rng(config.seed, chain);
    const bool hmc = config.sampler == SamplerKind::hmc;
    double logp = 0.0;
    std::vector<double> grad;
    std::vector<double> u = find_initial_point(target, logp, grad, rng, hmc);
    ChainResult& res = results[chain];
    const std::size_t kept = (config.n_iter - config.n_warmup + config.thin - 1) / config.thin;
    res.draws.reserve(kept * store.names.size());
    double accept_sum = 0.0;
    if (hmc) {
      HmcKernel kernel(target.dim, config.accept_target(), config.n_leapfrog, config.n_warmup);
      kernel.init_step_size(u, logp, grad, target.log_density, rng);
      for (std::size_t it = 0; it < config.n_iter; ++it) {
        const double stat = kernel.transition(u, logp, grad, target.log_density, rng);
        if (it < config.n_warmup) {
          kernel.adapt(it, u, stat);
          if (kernel.take_metric_update()) kernel.init_step_size(u, logp, grad, target.log_density, rng);
          continue;
        }
        accept_sum += stat;
        if ((it - config.n_warmup) % config.thin == 0) {
          const auto c = constrain(u);
          res.draws.insert(res.draws.end(), c.begin(), c.end());
        }
      }
      res.step = kernel.step_size();
    } else {
      RwmKernel kernel(target.dim, config.accept_target());
      for (std::size_t it = 0; it < config.n_iter; ++it) {
        const bool warm = it < config.n_warmup;
        const double stat = kernel.transition(u, logp, target.log_density, rng, warm, it);
        if (warm) continue;
        accept_sum += stat;
        if ((it - config.n_warmup) % config.thin == 0) {
          const auto c = constrain(u);
          res.draws.insert(res.draws.end(), c.begin(), c.end());
        }
      }
    }
    res.accept = accept_sum / static_cast<double>(config.n_iter - config.n_warmup);
  });
  for (auto& r : results) {
    store.chains.push_back(std::move(r.draws));
    store.accept_rate.push_back(r.accept);
    store.step_size.push_back(r.step);
  }
  return store;
}

TargetModel make_approx_target(const ApproxModel& model) {
  TargetModel t;
  t.dim = model.dim();
  t.log_density = [&model](std::span<const double> u, std::span<double> g) { return model.log_density(u, g); };
  const ParameterLayout& layout = model.layout();
  t.names = layout.constrained_names();
  const std::size_t S = model.spec().strata;
  const std::size_t T = model.spec().t_len;
  const std::size_t first = layout.latent_first_t();
  const bool centred = model.spec().parametrization == Parametrization::centred;
  for (std::size_t i = 0; i < S; ++i) {
    for (std::size_t tt = first; tt < T; ++tt) {
      t.names.push_back("lambda[" + std::to_string(i + 1) + "," + std::to_string(tt + 1) + "]");
    }
  }
  if (centred) {
    for (std::size_t i = 0; i < S; ++i) {
      for (std::size_t tt = first; tt < T; ++tt) {
        t.names.push_back("zstar[" + std::to_string(i + 1) + "," + std::to_string(tt + 1) + "]");
      }
    }
  }
  t.to_constrained = [&model, S, T, first, centred](std::span<const double> u) {
    std::vector<double> c = transform_params(model.layout(), u).constrained;
    const ApproxFields f = model.fields(c);
    for (std::size_t i = 0; i < S; ++i) {
      for (std::size_t tt = first; tt < T; ++tt) c.push_back(f.lambda[i * T + tt]);
    }
    if (centred) {
      for (std::size_t i = 0; i < S; ++i) {
        for (std::size_t tt = first; tt < T; ++tt) c.push_back(f.zstar[i * T + tt]);
      }
    }
    return c;
  };
  t.initial_point = [&model](Rng& rng) { return model.initial_point(rng); };
  return t;
}

DrawStore run_exact_mcmc(const ExactModel& model, const ChainConfig& config) {
  config.validate();
  const ParameterLayout& layout = model.layout();
  const std::size_t S = model.strata();
  const std::size_t T = model.t_len();
  DrawStore store;
  store.names = layout.constrained_names();
  for (std::size_t i = 0; i < S; ++i) {
    for (std::size_t t = 0; t < T; ++t) {
      store.names.push_back("x[" + std::to_string(i + 1) + "," + std::to_string(t + 1) + "]");
    }
  }
  const std::size_t dim = model.dim();
  const std::vector<std::int64_t>& y = model.y();
  std::vector<ChainResult> results(config.n_chains);
  parallel_for(config.n_chains, [&](std::size_t chain) {
    Rng rng(config.seed, chain);
    const bool hmc = config.sampler == SamplerKind::hmc;
    std::vector<double> u;
    std::vector<std::int64_t> x;
    std::vector<double> grad(dim);
    double logp = -std::numeric_limits<double>::infinity();
    auto f = [&](std::span<const double> q, std::span<double> g) { return model.log_density(q, g, x, false); };
    for (int attempt = 0; attempt < kInitAttempts && !std::isfinite(logp); ++attempt) {
      u = model.initial_point(rng, attempt == 0 ? 0.0 : config.init_jitter);
      x = model.initial_latent(transform_params(layout, u).constrained);
      logp = f(u, grad);
    }
    if (!std::isfinite(logp)) throw NumericalError("initialisation failed: no finite log density after 100 attempts");

    auto widths_for = [&](const std::vector<double>& c) {
      std::vector<std::int64_t> w(S);
      for (std::size_t i = 0; i < S; ++i) {
        const LatentTarget tg = model.latent_target(c, i);
        w[i] = latent_proposal_width(tg.nu, tg.phi, std::span<const std::int64_t>(x).subspan(i * T, T));
      }
      return w;
    };
    std::vector<double> c = transform_params(layout, u).constrained;
    std::vector<std::int64_t> widths = widths_for(c);
    constexpr std::size_t kWidthWindow = 100;

    ChainResult& res = results[chain];
    double accept_sum = 0.0;
    HmcKernel hk(dim, config.accept_target(), config.n_leapfrog, config.n_warmup);
    RwmKernel rk(dim, config.accept_target());
    if (hmc) hk.init_step_size(u, logp, grad, f, rng);
    for (std::size_t it = 0; it < config.n_iter; ++it) {
      const bool warm = it < config.n_warmup;
      double stat;
      if (hmc) {
        stat = hk.transition(u, logp, grad, f, rng);
        if (warm) {
          hk.adapt(it, u, stat);
          if (hk.take_metric_update()) hk.init_step_size(u, logp, grad, f, rng);
        }
      } else {
        stat = rk.transition(u, logp, f, rng, warm, it);
      }
      c = transform_params(layout, u).constrained;
      for (std::size_t i = 0; i < S; ++i) {
        update_latent_counts(std::span<std::int64_t>(x).subspan(i * T, T), std::span<const std::int64_t>(y).subspan(i * T, T),
                             model.latent_target(c, i), widths[i], rng);
      }
      logp = f(u, hmc ? std::span<double>(grad) : std::span<double>());
      if (warm && (it + 1) % kWidthWindow == 0) widths = widths_for(c);
      if (warm) continue;
      accept_sum += stat;
      if ((it - config.n_warmup) % config.thin == 0) {
        res.draws.insert(res.draws.end(), c.begin(), c.end());
        for (auto v : x) res.draws.push_back(static_cast<double>(v));
      }
    }
    res.accept = accept_sum / static_cast<double>(config.n_iter - config.n_warmup);
    res.step = hmc ? hk.step_size() : NAN;
  });
  for (auto& r : results) {
    store.chains.push_back(std::move(r.draws));
    store.accept_rate.push_back(r.accept);
    store.step_size.push_back(r.step);
  }
  return store;
}

}  // namespace thinar
