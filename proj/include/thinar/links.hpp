#pragma once

#include <span>
#include <vector>

#include "thinar/design.hpp"
#include "thinar/model_spec.hpp"
#include "thinar/transform.hpp"

namespace thinar {

/// Natural-scale nu, phi, pi at every (stratum, t) cell, row i * t_len + t0.
/// nu is all zeros when the spec has no nu link.
struct LinkValues {
  std::vector<double> nu;
  std::vector<double> phi;
  std::vector<double> pi;
};

LinkValues evaluate_links(const ModelSpec& spec, const Design& design, const ParameterLayout& layout,
                          std::span<const double> c);

/// Accumulate d/dc into g_c given per-cell gradients of the natural values.
void backprop_links(const ModelSpec& spec, const Design& design, const ParameterLayout& layout,
                    std::span<const double> c, const LinkValues& values, std::span<const double> g_nu,
                    std::span<const double> g_phi, std::span<const double> g_pi, std::span<double> g_c);

/// Serial-interval weights: the estimated simplex or the fixed spec values.
std::vector<double> theta_values(const ModelSpec& spec, const ParameterLayout& layout, std::span<const double> c);

/// Log prior of every non-latent constrained block (link constants,
/// coefficients, random-effect scales and raw effects, psi, lambda1).
/// Adds d/dc into g_c when it is non-empty.
double log_prior_blocks(const ParameterLayout& layout, std::span<const double> c, std::span<double> g_c);

}  // namespace thinar
