#include "thinar/links.hpp"

#include <cmath>
#include <limits>

#include "thinar/numerics.hpp"

namespace thinar {

namespace {

// Linear predictor of one link at every cell.
std::vector<double> linear_predictor(const LinkBlock& link, const LinkDesign& ld, const std::vector<TermSlots>& slots,
                                     const ParameterLayout& layout, std::span<const double> c, std::size_t S,
                                     std::size_t T) {
  std::vector<double> eta(S * T, 0.0);
  for (std::size_t k = 0; k < link.terms.size(); ++k) {
    const LinkTerm& term = link.terms[k];
    const TermSlots& slot = slots[k];
    if (term.kind == TermKind::random_intercept) {
      const ParameterBlock& sb = layout.block(*slot.scale);
      const ParameterBlock& rb = layout.block(*slot.raw);
      for (std::size_t i = 0; i < S; ++i) {
        const double scale = c[sb.con_offset + (term.per_stratum ? i : 0)];
        for (std::size_t t = 0; t < T; ++t) {
          const std::size_t raw = rb.cols == 1 ? i : i * T + t;
          eta[i * T + t] += scale * c[rb.con_offset + raw];
        }
      }
      continue;
    }
    const TermDesign& td = ld.terms[k];
    const ParameterBlock& cb = layout.block(*slot.coef);
    for (std::size_t i = 0; i < S; ++i) {
      const std::size_t base = cb.con_offset + (term.per_stratum ? i * td.n_cols : 0);
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t r = i * T + t;
        double sum = 0.0;
        for (std::size_t col = 0; col < td.n_cols; ++col) sum += td.at(r, col) * c[base + col];
        eta[r] += sum;
      }
    }
  }
  return eta;
}

void backprop_predictor(const LinkBlock& link, const LinkDesign& ld, const std::vector<TermSlots>& slots,
                        const ParameterLayout& layout, std::span<const double> c, std::span<const double> g_eta,
                        std::size_t S, std::size_t T, std::span<double> g_c) {
  for (std::size_t k = 0; k < link.terms.size(); ++k) {
    const LinkTerm& term = link.terms[k];
    const TermSlots& slot = slots[k];
    if (term.kind == TermKind::random_intercept) {
      const ParameterBlock& sb = layout.block(*slot.scale);
      const ParameterBlock& rb = layout.block(*slot.raw);
      for (std::size_t i = 0; i < S; ++i) {
        const std::size_t s_idx = sb.con_offset + (term.per_stratum ? i : 0);
        for (std::size_t t = 0; t < T; ++t) {
          const std::size_t r_idx = rb.con_offset + (rb.cols == 1 ? i : i * T + t);
          const double g = g_eta[i * T + t];
          g_c[s_idx] += g * c[r_idx];
          g_c[r_idx] += g * c[s_idx];
        }
      }
      continue;
    }
    const TermDesign& td = ld.terms[k];
    const ParameterBlock& cb = layout.block(*slot.coef);
    for (std::size_t i = 0; i < S; ++i) {
      const std::size_t base = cb.con_offset + (term.per_stratum ? i * td.n_cols : 0);
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t r = i * T + t;
        const double g = g_eta[r];
        if (g == 0.0) continue;
        for (std::size_t col = 0; col < td.n_cols; ++col) g_c[base + col] += g * td.at(r, col);
      }
    }
  }
}

}  // namespace

LinkValues evaluate_links(const ModelSpec& spec, const Design& design, const ParameterLayout& layout,
                          std::span<const double> c) {
  const std::size_t S = design.strata;
  const std::size_t T = design.t_len;
  LinkValues out;
  for (LinkTarget target : {LinkTarget::nu, LinkTarget::phi, LinkTarget::pi}) {
    std::vector<double>& v = target == LinkTarget::nu ? out.nu : target == LinkTarget::phi ? out.phi : out.pi;
    const LinkBlock& link = spec.link(target);
    if (!link.present) {
      v.assign(S * T, 0.0);
      continue;
    }
    if (link.constant) {
      v.assign(S * T, c[layout.block(*layout.link_constant(target)).con_offset]);
      continue;
    }
    v = linear_predictor(link, design.link(target), layout.term_slots(target), layout, c, S, T);
    for (double& e : v) e = target == LinkTarget::pi ? numerics::logistic(e) : std::exp(e);
  }
  return out;
}

void backprop_links(const ModelSpec& spec, const Design& design, const ParameterLayout& layout,
                    std::span<const double> c, const LinkValues& values, std::span<const double> g_nu,
                    std::span<const double> g_phi, std::span<const double> g_pi, std::span<double> g_c) {
  const std::size_t S = design.strata;
  const std::size_t T = design.t_len;
  for (LinkTarget target : {LinkTarget::nu, LinkTarget::phi, LinkTarget::pi}) {
    const LinkBlock& link = spec.link(target);
    if (!link.present) continue;
    const std::vector<double>& v = target == LinkTarget::nu ? values.nu : target == LinkTarget::phi ? values.phi : values.pi;
    std::span<const double> g = target == LinkTarget::nu ? g_nu : target == LinkTarget::phi ? g_phi : g_pi;
    if (link.constant) {
      double sum = 0.0;
      for (double x : g) sum += x;
      g_c[layout.block(*layout.link_constant(target)).con_offset] += sum;
      continue;
    }
    std::vector<double> g_eta(S * T);
    for (std::size_t r = 0; r < S * T; ++r) {
      g_eta[r] = target == LinkTarget::pi ? g[r] * v[r] * (1.0 - v[r]) : g[r] * v[r];
    }
    backprop_predictor(link, design.link(target), layout.term_slots(target), layout, c, g_eta, S, T, g_c);
  }
}

std::vector<double> theta_values(const ModelSpec& spec, const ParameterLayout& layout, std::span<const double> c) {
  if (const auto b = layout.theta_block()) {
    const ParameterBlock& tb = layout.block(*b);
    return {c.begin() + static_cast<std::ptrdiff_t>(tb.con_offset),
            c.begin() + static_cast<std::ptrdiff_t>(tb.con_offset + tb.con_size)};
  }
  return spec.theta.fixed;
}

double log_prior_blocks(const ParameterLayout& layout, std::span<const double> c, std::span<double> g_c) {
  const bool want = !g_c.empty();
  double lp = 0.0;
  for (const auto& b : layout.blocks()) {
    switch (b.role) {
      case BlockRole::link_constant:
      case BlockRole::coefficients:
      case BlockRole::re_scale:
      case BlockRole::re_raw:
      case BlockRole::negbin_size:
      case BlockRole::lambda1:
        for (std::size_t k = 0; k < b.con_size; ++k) {
          const double x = c[b.con_offset + k];
          const double v = b.prior.log_density(x);
          if (!std::isfinite(v)) return -std::numeric_limits<double>::infinity();
          lp += v;
          if (want) g_c[b.con_offset + k] += b.prior.d_log_density(x);
        }
        break;
      case BlockRole::theta:
      case BlockRole::latent:
        break;
    }
  }
  return lp;
}

}  // namespace thinar
