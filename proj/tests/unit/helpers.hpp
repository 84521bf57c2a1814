#pragma once

#include <optional>

#include "magkey/evalharness.hpp"
#include "magkey/field_sim.hpp"

namespace magkey::test {

inline Trace constant_trace(const Vec3& b, int n, double rate_hz = 50.0) {
  Trace t;
  for (int i = 0; i < n; ++i) t.push_back({i / rate_hz, b});
  return t;
}

// Noise-free world so readings are exact.
inline Scenario quiet_scenario() {
  Scenario s;
  s.env.noise_sigma = 0.0;
  return s;
}

// Offset-free dipole reading at a board point in the sensor frame.
inline Vec3 clean_reading(const Scenario& s, const Vec2& pos) {
  return noiseless_reading(s.board, s.env, s.magnet, pos, 0.0) -
         noiseless_reading(s.board, s.env, s.magnet, std::nullopt, 0.0);
}

}  // namespace magkey::test
