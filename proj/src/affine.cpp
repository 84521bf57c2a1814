#include "magkey/affine.hpp"

#include <cmath>

#include "magkey/errors.hpp"

namespace magkey {

Vec3 AffineMap::apply(const Vec3& v) const {
  return Vec3(apply(0, v[0]), apply(1, v[1]), apply(2, v[2]));
}

bool AffineMap::is_identity() const { return *this == AffineMap{}; }

bool AffineMap::invertible() const {
  for (int i = 0; i < 3; ++i)
    if (!std::isfinite(gain[i]) || !std::isfinite(offset[i]) || std::abs(gain[i]) <= kMinAffineGain)
      return false;
  return true;
}

void AffineMap::validate() const {
  if (!invertible()) throw DomainError("affine map is not invertible");
}

AffineMap compose(const AffineMap& outer, const AffineMap& inner) {
  AffineMap out;
  for (int i = 0; i < 3; ++i) {
    out.gain[i] = outer.gain[i] * inner.gain[i];
    out.offset[i] = outer.gain[i] * inner.offset[i] + outer.offset[i];
  }
  return out;
}

}  // namespace magkey
