#pragma once

#include <array>

#include "magkey/types.hpp"

namespace magkey {

/// Per-axis linear map v_i -> gain_i * v_i + offset_i between two
/// offset-free reading spaces (factory device/magnet -> new one).
struct AffineMap {
  std::array<double, 3> gain{1.0, 1.0, 1.0};
  std::array<double, 3> offset{0.0, 0.0, 0.0};

  static AffineMap identity() { return {}; }

  double apply(int axis, double v) const { return gain[axis] * v + offset[axis]; }
  double invert(int axis, double v) const { return (v - offset[axis]) / gain[axis]; }
  Vec3 apply(const Vec3& v) const;

  bool is_identity() const;

  /// True when every gain is finite with |gain| > 1e-6 and offsets are finite.
  bool invertible() const;

  /// Throws DomainError when not invertible.
  void validate() const;

  bool operator==(const AffineMap&) const = default;
};

inline constexpr double kMinAffineGain = 1e-6;

/// (outer ∘ inner)(v) = outer(inner(v)).
AffineMap compose(const AffineMap& outer, const AffineMap& inner);

}  // namespace magkey
