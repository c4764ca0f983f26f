#pragma once

namespace thinar {

/// (nu, phi, pi) of the binomially thinned Poisson autoregression
///   X_t | X_{t-1} ~ Poisson(nu + phi X_{t-1}),  Y_t | X_t ~ Binomial(X_t, pi).
struct ThinnedArParams {
  double nu = 1.0;
  double phi = 0.0;
  double pi = 1.0;

  /// Throws ValidationError unless nu > 0, phi >= 0 and 0 < pi <= 1.
  void validate() const;
  bool stationary() const { return phi < 1.0; }
};

}  // namespace thinar
