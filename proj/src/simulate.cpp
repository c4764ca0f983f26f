#include "thinar/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>

#include "thinar/design.hpp"
#include "thinar/error.hpp"
#include "thinar/links.hpp"
#include "thinar/model_spec.hpp"
#include "thinar/rng.hpp"
#include "thinar/transform.hpp"

namespace thinar {

namespace {

std::int64_t start_value(double nu, double phi) {
  return static_cast<std::int64_t>(std::llround(phi < 1.0 ? nu / (1.0 - phi) : nu));
}

}  // namespace

SimOutput simulate_thinned_pois_ar(const ThinnedArParams& params, std::size_t t_len, std::size_t burn_in,
                                   std::uint64_t seed, std::uint64_t stream) {
  params.validate();
  if (t_len == 0) throw DomainError("simulate: t_len must be positive");
  Rng rng(seed, stream);
  SimOutput out;
  out.seed = seed;
  out.stationary = params.stationary();
  out.x.resize(t_len);
  out.y.resize(t_len);
  std::int64_t x = start_value(params.nu, params.phi);
  for (std::size_t b = 0; b < burn_in; ++b) x = rng.poisson(params.nu + params.phi * static_cast<double>(x));
  for (std::size_t t = 0; t < t_len; ++t) {
    x = rng.poisson(params.nu + params.phi * static_cast<double>(x));
    out.x[t] = x;
    out.y[t] = rng.binomial(x, params.pi);
  }
  return out;
}

std::vector<SimOutput> simulate_general(const ModelSpec& spec, const Design& design, const ParameterLayout& layout,
                                        const std::vector<double>& constrained, std::size_t burn_in,
                                        std::uint64_t seed) {
  spec.validate();
  const std::size_t S = design.strata;
  const std::size_t T = design.t_len;
  if (S == 0 || T == 0) throw DomainError("simulate: strata and t_len must be positive");
  if (constrained.size() != layout.constrained_size()) {
    throw ValidationError("simulate: expected " + std::to_string(layout.constrained_size()) + " parameter values");
  }
  const std::vector<double> theta = theta_values(spec, layout, constrained);
  double sum = 0.0;
  for (double w : theta) {
    if (!(w >= 0.0)) throw ValidationError("serial interval weights must be nonnegative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw ValidationError("serial interval weights must sum to 1");
  const LinkValues links = evaluate_links(spec, design, layout, constrained);
  const std::size_t J = theta.size();

  std::vector<SimOutput> out(S);
  for (std::size_t i = 0; i < S; ++i) {
    Rng rng(seed, i);
    SimOutput& o = out[i];
    o.seed = seed;
    o.x.resize(T);
    o.y.resize(T);
    const std::size_t r0 = i * T;
    for (std::size_t t = 0; t < T; ++t) {
      if (!(links.phi[r0 + t] < 1.0)) o.stationary = false;
    }
    std::int64_t init;
    if (spec.nu.present) {
      init = start_value(links.nu[r0], links.phi[r0]);
    } else if (spec.x1.mode == X1Spec::Mode::known && i < spec.x1.known_values.size()) {
      init = static_cast<std::int64_t>(std::llround(spec.x1.known_values[i]));
    } else {
      init = static_cast<std::int64_t>(std::llround(spec.x1.prior.mean));
    }
    init = std::max<std::int64_t>(init, 0);
    // history[0] is the most recent count.
    std::deque<std::int64_t> history(J, init);
    auto step = [&](std::size_t r) {
      double s = 0.0;
      for (std::size_t j = 0; j < J; ++j) s += theta[j] * static_cast<double>(history[j]);
      const double lam = links.nu[r] + links.phi[r] * s;
      const std::int64_t x = lam > 0.0 ? rng.poisson(lam) : 0;
      history.pop_back();
      history.push_front(x);
      return x;
    };
    for (std::size_t b = 0; b < burn_in; ++b) step(r0);
    // Without burn-in, t = 1 follows the model's own first-period definition.
    std::optional<std::int64_t> first;
    if (burn_in == 0 && layout.lambda1_block()) {
      first = rng.poisson(constrained[layout.block(*layout.lambda1_block()).con_offset + i]);
    } else if (burn_in == 0 && spec.x1.mode == X1Spec::Mode::known && i < spec.x1.known_values.size()) {
      first = std::llround(spec.x1.known_values[i]);
    }
    for (std::size_t t = 0; t < T; ++t) {
      std::int64_t x;
      if (t == 0 && first) {
        x = *first;
        std::fill(history.begin(), history.end(), x);
      } else {
        x = step(r0 + t);
      }
      o.x[t] = x;
      o.y[t] = rng.binomial(x, links.pi[r0 + t]);
    }
  }
  return out;
}

}  // namespace thinar
