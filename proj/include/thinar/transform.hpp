#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "thinar/design.hpp"
#include "thinar/model_spec.hpp"

namespace thinar {

enum class Transform {
  identity,
  positive,  // x = exp(u)
  unit,      // x = logistic(u)
  simplex,   // stick-breaking, J - 1 free values -> J weights
};

enum class BlockRole {
  link_constant,  // time-constant natural-scale nu / phi / pi
  coefficients,   // regression coefficients of one link term
  re_scale,       // random-intercept standard deviation
  re_raw,         // standardised random effects
  theta,          // serial-interval simplex
  negbin_size,    // negative-binomial size psi
  lambda1,        // initial rate per stratum when x_1 has a prior
  latent,         // z* (non-centred) or Z (centred) per stratum and time
};

/// A named slice of the parameter vector, present in both the unconstrained
/// and the constrained layouts. Elements are stored row-major over
/// (rows, cols); `col_label_offset` is added to 1-based column labels so
/// latent columns carry their time index.
struct ParameterBlock {
  std::string name;
  BlockRole role = BlockRole::coefficients;
  Transform transform = Transform::identity;
  std::size_t unc_offset = 0;
  std::size_t unc_size = 0;
  std::size_t con_offset = 0;
  std::size_t con_size = 0;
  std::size_t rows = 1;
  std::size_t cols = 1;
  std::size_t col_label_offset = 0;
  Prior prior;
  LinkTarget link = LinkTarget::nu;
  std::size_t term = 0;

  std::string element_name(std::size_t k) const;
};

/// Blocks making up one link term.
struct TermSlots {
  std::optional<std::size_t> coef;
  std::optional<std::size_t> scale;
  std::optional<std::size_t> raw;
};

/// Maps a ModelSpec onto a flat unconstrained vector and its constrained image.
class ParameterLayout {
 public:
  ParameterLayout() = default;
  /// `with_latent = false` omits the latent block (exact-model parameters).
  static ParameterLayout build(const ModelSpec& spec, const Design& design, bool with_latent = true);

  std::size_t unconstrained_size() const { return unc_size_; }
  std::size_t constrained_size() const { return con_size_; }
  const std::vector<ParameterBlock>& blocks() const { return blocks_; }
  const ParameterBlock& block(std::size_t b) const { return blocks_[b]; }
  std::optional<std::size_t> find(const std::string& name) const;
  const ParameterBlock& at(const std::string& name) const;

  std::optional<std::size_t> link_constant(LinkTarget t) const { return link_constant_[static_cast<int>(t)]; }
  const std::vector<TermSlots>& term_slots(LinkTarget t) const { return term_slots_[static_cast<int>(t)]; }
  std::optional<std::size_t> theta_block() const { return theta_; }
  std::optional<std::size_t> negbin_block() const { return negbin_; }
  std::optional<std::size_t> lambda1_block() const { return lambda1_; }
  std::optional<std::size_t> latent_block() const { return latent_; }
  /// First time index (0-based) carried by the latent block.
  std::size_t latent_first_t() const { return latent_first_t_; }

  /// Constrain u into c; returns log |d c / d u| (summed over blocks).
  /// Throws DomainError for non-finite input.
  double constrain(std::span<const double> u, std::span<double> c) const;
  void unconstrain(std::span<const double> c, std::span<double> u) const;
  /// Chain rule: g_u += (d c / d u)^T g_c + d logJ / d u.
  void backprop(std::span<const double> u, std::span<const double> c, std::span<const double> g_c,
                std::span<double> g_u) const;

  std::vector<std::string> constrained_names() const;

 private:
  std::size_t add(ParameterBlock block);

  std::vector<ParameterBlock> blocks_;
  std::size_t unc_size_ = 0;
  std::size_t con_size_ = 0;
  std::optional<std::size_t> link_constant_[3];
  std::vector<TermSlots> term_slots_[3];
  std::optional<std::size_t> theta_;
  std::optional<std::size_t> negbin_;
  std::optional<std::size_t> lambda1_;
  std::optional<std::size_t> latent_;
  std::size_t latent_first_t_ = 0;
};

/// Constrained parameters plus the log-Jacobian of the change of variables.
struct TransformResult {
  std::vector<double> constrained;
  double log_jacobian = 0.0;
};

TransformResult transform_params(const ParameterLayout& layout, std::span<const double> u);

}  // namespace thinar
