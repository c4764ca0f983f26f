#include "thinar/transform.hpp"

#include <cmath>

#include "thinar/error.hpp"
#include "thinar/numerics.hpp"

namespace thinar {

std::string ParameterBlock::element_name(std::size_t k) const {
  const bool matrix = role == BlockRole::latent || role == BlockRole::lambda1;
  if (!matrix && con_size == 1 && rows == 1 && cols == 1) return name;
  if (!matrix && rows == 1) return name + "[" + std::to_string(k + 1 + col_label_offset) + "]";
  const std::size_t r = k / cols;
  const std::size_t c = k % cols;
  return name + "[" + std::to_string(r + 1) + "," + std::to_string(c + 1 + col_label_offset) + "]";
}

std::size_t ParameterLayout::add(ParameterBlock block) {
  block.unc_offset = unc_size_;
  block.con_offset = con_size_;
  unc_size_ += block.unc_size;
  con_size_ += block.con_size;
  blocks_.push_back(std::move(block));
  return blocks_.size() - 1;
}

ParameterLayout ParameterLayout::build(const ModelSpec& spec, const Design& design, bool with_latent) {
  ParameterLayout layout;
  const std::size_t S = design.strata;
  const std::size_t T = design.t_len;
  for (LinkTarget target : {LinkTarget::nu, LinkTarget::phi, LinkTarget::pi}) {
    const LinkBlock& link = spec.link(target);
    const int li = static_cast<int>(target);
    if (!link.present) continue;
    const std::string prefix = to_string(target);
    if (link.constant) {
      ParameterBlock b;
      b.name = prefix;
      b.role = BlockRole::link_constant;
      b.transform = link.constant_prior.family == PriorFamily::normal_unit ? Transform::unit : Transform::positive;
      b.unc_size = b.con_size = 1;
      b.prior = link.constant_prior;
      b.link = target;
      layout.link_constant_[li] = layout.add(std::move(b));
      continue;
    }
    const LinkDesign& ld = design.link(target);
    for (std::size_t k = 0; k < link.terms.size(); ++k) {
      const LinkTerm& term = link.terms[k];
      TermSlots slots;
      if (term.kind == TermKind::random_intercept) {
        ParameterBlock scale;
        scale.name = prefix + "." + term.name + ".scale";
        scale.role = BlockRole::re_scale;
        scale.transform = Transform::positive;
        scale.rows = term.per_stratum ? S : 1;
        scale.cols = 1;
        scale.unc_size = scale.con_size = scale.rows;
        scale.prior = term.scale_prior;
        scale.link = target;
        scale.term = k;
        slots.scale = layout.add(std::move(scale));

        ParameterBlock raw;
        raw.name = prefix + "." + term.name + ".raw";
        raw.role = BlockRole::re_raw;
        raw.rows = S;
        raw.cols = term.grouping == RandomGrouping::stratum ? 1 : T;
        raw.unc_size = raw.con_size = raw.rows * raw.cols;
        raw.prior = Prior::normal(0.0, 1.0);
        raw.link = target;
        raw.term = k;
        slots.raw = layout.add(std::move(raw));
      } else {
        ParameterBlock coef;
        coef.name = prefix + "." + term.name;
        coef.role = BlockRole::coefficients;
        coef.rows = term.per_stratum ? S : 1;
        coef.cols = ld.terms[k].n_cols;
        coef.unc_size = coef.con_size = coef.rows * coef.cols;
        coef.prior = term.prior;
        coef.link = target;
        coef.term = k;
        slots.coef = layout.add(std::move(coef));
      }
      layout.term_slots_[li].push_back(slots);
    }
  }
  if (spec.theta.estimated) {
    ParameterBlock b;
    b.name = "theta";
    b.role = BlockRole::theta;
    b.transform = Transform::simplex;
    b.unc_size = spec.theta.length - 1;
    b.con_size = spec.theta.length;
    b.cols = spec.theta.length;
    layout.theta_ = layout.add(std::move(b));
  }
  if (spec.count_family == CountFamily::negbin) {
    ParameterBlock b;
    b.name = "psi";
    b.role = BlockRole::negbin_size;
    b.transform = Transform::positive;
    b.unc_size = b.con_size = 1;
    b.prior = spec.negbin_size_prior;
    layout.negbin_ = layout.add(std::move(b));
  }
  if (spec.x1.mode == X1Spec::Mode::prior) {
    ParameterBlock b;
    b.name = "lambda1";
    b.role = BlockRole::lambda1;
    b.transform = Transform::positive;
    b.rows = S;
    b.cols = 1;
    b.unc_size = b.con_size = S;
    b.prior = spec.x1.prior;
    layout.lambda1_ = layout.add(std::move(b));
  }
  layout.latent_first_t_ = spec.x1.mode == X1Spec::Mode::known ? 1 : 0;
  const std::size_t n_lat = T - layout.latent_first_t_;
  if (with_latent && n_lat > 0) {
    ParameterBlock b;
    b.name = spec.parametrization == Parametrization::noncentred ? "zstar" : "z";
    b.role = BlockRole::latent;
    b.rows = S;
    b.cols = n_lat;
    b.col_label_offset = layout.latent_first_t_;
    b.unc_size = b.con_size = S * n_lat;
    layout.latent_ = layout.add(std::move(b));
  }
  return layout;
}

std::optional<std::size_t> ParameterLayout::find(const std::string& name) const {
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    if (blocks_[b].name == name) return b;
  }
  return std::nullopt;
}

const ParameterBlock& ParameterLayout::at(const std::string& name) const {
  const auto b = find(name);
  if (!b) throw ValidationError("no parameter block named '" + name + "'");
  return blocks_[*b];
}

double ParameterLayout::constrain(std::span<const double> u, std::span<double> c) const {
  if (u.size() != unc_size_ || c.size() != con_size_) throw ValidationError("constrain: size mismatch");
  double log_jac = 0.0;
  for (const auto& b : blocks_) {
    switch (b.transform) {
      case Transform::identity:
        for (std::size_t k = 0; k < b.unc_size; ++k) {
          const double v = u[b.unc_offset + k];
          if (!std::isfinite(v)) throw DomainError("constrain: non-finite parameter in " + b.name);
          c[b.con_offset + k] = v;
        }
        break;
      case Transform::positive:
        for (std::size_t k = 0; k < b.unc_size; ++k) {
          const double v = u[b.unc_offset + k];
          if (!std::isfinite(v)) throw DomainError("constrain: non-finite parameter in " + b.name);
          c[b.con_offset + k] = std::exp(v);
          log_jac += v;
        }
        break;
      case Transform::unit:
        for (std::size_t k = 0; k < b.unc_size; ++k) {
          const double v = u[b.unc_offset + k];
          if (!std::isfinite(v)) throw DomainError("constrain: non-finite parameter in " + b.name);
          c[b.con_offset + k] = numerics::logistic(v);
          // log(x (1 - x)) = -log1p(e^-v) - log1p(e^v)
          log_jac += -numerics::log1p_exp(-v) - numerics::log1p_exp(v);
        }
        break;
      case Transform::simplex: {
        const std::size_t J = b.con_size;
        double rem = 1.0;
        for (std::size_t k = 0; k + 1 < J; ++k) {
          const double v = u[b.unc_offset + k];
          if (!std::isfinite(v)) throw DomainError("constrain: non-finite parameter in " + b.name);
          const double shifted = v - std::log(static_cast<double>(J - 1 - k));
          const double z = numerics::logistic(shifted);
          log_jac += -numerics::log1p_exp(-shifted) - numerics::log1p_exp(shifted) + std::log(rem);
          c[b.con_offset + k] = rem * z;
          rem -= rem * z;
        }
        c[b.con_offset + J - 1] = rem;
        break;
      }
    }
  }
  return log_jac;
}

void ParameterLayout::unconstrain(std::span<const double> c, std::span<double> u) const {
  if (u.size() != unc_size_ || c.size() != con_size_) throw ValidationError("unconstrain: size mismatch");
  for (const auto& b : blocks_) {
    switch (b.transform) {
      case Transform::identity:
        for (std::size_t k = 0; k < b.unc_size; ++k) u[b.unc_offset + k] = c[b.con_offset + k];
        break;
      case Transform::positive:
        for (std::size_t k = 0; k < b.unc_size; ++k) {
          const double v = c[b.con_offset + k];
          if (!(v > 0.0)) throw DomainError("unconstrain: " + b.name + " must be positive");
          u[b.unc_offset + k] = std::log(v);
        }
        break;
      case Transform::unit:
        for (std::size_t k = 0; k < b.unc_size; ++k) {
          const double v = c[b.con_offset + k];
          if (!(v > 0.0 && v < 1.0)) throw DomainError("unconstrain: " + b.name + " must lie in (0, 1)");
          u[b.unc_offset + k] = numerics::logit(v);
        }
        break;
      case Transform::simplex: {
        const std::size_t J = b.con_size;
        double rem = 1.0;
        for (std::size_t k = 0; k + 1 < J; ++k) {
          const double x = c[b.con_offset + k];
          const double z = x / rem;
          if (!(z > 0.0 && z < 1.0)) throw DomainError("unconstrain: theta must lie in the open simplex");
          u[b.unc_offset + k] = numerics::logit(z) + std::log(static_cast<double>(J - 1 - k));
          rem -= x;
        }
        break;
      }
    }
  }
}

void ParameterLayout::backprop(std::span<const double> u, std::span<const double> c, std::span<const double> g_c,
                               std::span<double> g_u) const {
  for (const auto& b : blocks_) {
    switch (b.transform) {
      case Transform::identity:
        for (std::size_t k = 0; k < b.unc_size; ++k) g_u[b.unc_offset + k] += g_c[b.con_offset + k];
        break;
      case Transform::positive:
        for (std::size_t k = 0; k < b.unc_size; ++k) {
          g_u[b.unc_offset + k] += g_c[b.con_offset + k] * c[b.con_offset + k] + 1.0;
        }
        break;
      case Transform::unit:
        for (std::size_t k = 0; k < b.unc_size; ++k) {
          const double x = c[b.con_offset + k];
          g_u[b.unc_offset + k] += g_c[b.con_offset + k] * x * (1.0 - x) + (1.0 - 2.0 * x);
        }
        break;
      case Transform::simplex: {
        const std::size_t J = b.con_size;
        std::vector<double> z(J - 1), rem(J - 1);
        double r = 1.0;
        for (std::size_t k = 0; k + 1 < J; ++k) {
          rem[k] = r;
          z[k] = numerics::logistic(u[b.unc_offset + k] - std::log(static_cast<double>(J - 1 - k)));
          r -= r * z[k];
        }
        // suffix[m] = sum_{k > m} g_c[k] x_k
        double suffix = g_c[b.con_offset + J - 1] * c[b.con_offset + J - 1];
        for (std::size_t m = J - 1; m-- > 0;) {
          const double x_m = c[b.con_offset + m];
          g_u[b.unc_offset + m] += g_c[b.con_offset + m] * rem[m] * z[m] * (1.0 - z[m]) - z[m] * suffix;
          g_u[b.unc_offset + m] += (1.0 - 2.0 * z[m]) - z[m] * static_cast<double>(J - 2 - m);
          suffix += g_c[b.con_offset + m] * x_m;
        }
        break;
      }
    }
  }
}

std::vector<std::string> ParameterLayout::constrained_names() const {
  std::vector<std::string> names;
  names.reserve(con_size_);
  for (const auto& b : blocks_) {
    for (std::size_t k = 0; k < b.con_size; ++k) names.push_back(b.element_name(k));
  }
  return names;
}

TransformResult transform_params(const ParameterLayout& layout, std::span<const double> u) {
  TransformResult r;
  r.constrained.resize(layout.constrained_size());
  r.log_jacobian = layout.constrain(u, r.constrained);
  return r;
}

}  // namespace thinar
