#include "thinar/params.hpp"

#include <cmath>

#include "thinar/error.hpp"

namespace thinar {

void ThinnedArParams::validate() const {
  if (!(nu > 0.0) || !std::isfinite(nu)) throw ValidationError("nu must be positive and finite");
  if (!(phi >= 0.0) || !std::isfinite(phi)) throw ValidationError("phi must be nonnegative and finite");
  if (!(pi > 0.0 && pi <= 1.0)) throw ValidationError("pi must lie in (0, 1]");
}

}  // namespace thinar
