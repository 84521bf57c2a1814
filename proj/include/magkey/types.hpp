#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace magkey {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Row-major index into a board grid: id = row * cols + col.
using CellId = int;

/// Every simulation and evaluation entry point takes its RNG explicitly.
using Rng = std::mt19937_64;

/// One magnetometer reading: time in seconds, field in µT (sensor frame).
struct MagSample {
  double t = 0.0;
  Vec3 b = Vec3::Zero();
};

using Trace = std::vector<MagSample>;

/// Subset of magnetometer axes used as input streams.
class Axes {
 public:
  constexpr Axes() = default;
  constexpr Axes(bool x, bool y, bool z) : mask_((x ? 1 : 0) | (y ? 2 : 0) | (z ? 4 : 0)) {}

  static constexpr Axes all() { return Axes(true, true, true); }
  static constexpr Axes xy() { return Axes(true, true, false); }

  /// Parses strings such as "xyz", "xy", "z". Throws DomainError on bad input.
  static Axes parse(const std::string& text);

  constexpr bool has(int axis) const { return (mask_ >> axis) & 1; }
  constexpr bool empty() const { return mask_ == 0; }
  constexpr int count() const { return (mask_ & 1) + ((mask_ >> 1) & 1) + ((mask_ >> 2) & 1); }
  std::string to_string() const;

  constexpr bool operator==(const Axes&) const = default;

 private:
  std::uint8_t mask_ = 7;
};

}  // namespace magkey
