#pragma once

#include <optional>
#include <string>
#include <vector>

#include "magkey/board.hpp"
#include "magkey/types.hpp"

namespace magkey {

/// Point-dipole magnet. Moment is in µT·cm³ so that moment / cm³ yields µT.
struct MagnetSpec {
  Vec3 moment = Vec3(4.33e6, 4.33e6, 4.33e6);
  int polarity = +1;
  std::string label = "ring";

  Vec3 effective_moment() const { return static_cast<double>(polarity) * moment; }
  void validate() const;
};

/// Everything between the magnet and the digitised reading:
///   B_p = S * R * (earth + background(t) + magnet) + H + noise
/// with R = Rx(roll) * Ry(pitch) * Rz(yaw).
struct EnvSpec {
  Vec3 earth_field = Vec3(22.0, -4.0, 41.0);
  Vec3 background_field = Vec3(3.0, 1.0, -2.0);
  Vec3 drift_amplitude = Vec3::Zero();
  double drift_period_s = 60.0;
  double noise_sigma = 0.5;
  Vec3 rotation = Vec3::Zero();  // roll, pitch, yaw in radians
  Vec3 hard_iron = Vec3::Zero();
  Mat3 soft_iron = Mat3::Identity();

  Vec3 background_at(double t) const;
  void validate() const;
};

Mat3 rotation_matrix(double roll, double pitch, double yaw);

/// Minimum magnet-to-sensor distance accepted by dipole_field (cm).
inline constexpr double kDipoleGuardCm = 0.5;

/// Field of the magnet at sensor_pos, board frame, µT.
Vec3 dipole_field(const MagnetSpec& magnet, const Vec3& magnet_pos, const Vec3& sensor_pos);

/// One waypoint of a magnet path. A missing position means the magnet is
/// absent (far from the board).
struct PathPoint {
  std::optional<Vec2> position;
  double dwell_s = 1.0;
};

struct SynthOptions {
  double rate_hz = 50.0;
  double transition_s = 0.5;
  double t0 = 0.0;
};

enum class MotionTruth { kStationary, kMoving };

/// Ground truth attached to each synthesized sample.
struct SampleTruth {
  MotionTruth state = MotionTruth::kStationary;
  int path_index = 0;  // waypoint being dwelt on, or being approached
  std::optional<Vec2> position;
};

struct LabeledTrace {
  Trace samples;
  std::vector<SampleTruth> truth;
};

/// Noise-free sensor-frame reading for a magnet position (nullopt = absent).
Vec3 noiseless_reading(const BoardSpec& board, const EnvSpec& env, const MagnetSpec& magnet,
                       const std::optional<Vec2>& position, double t);

/// Samples the path at rate_hz. Each waypoint is preceded by a linear
/// transition of transition_s from the previous one (except the first);
/// transitions to or from an absent magnet fade the dipole term linearly.
LabeledTrace synth_labeled_trace(const BoardSpec& board, const EnvSpec& env,
                                 const MagnetSpec& magnet, const std::vector<PathPoint>& path,
                                 const SynthOptions& options, Rng& rng);

Trace synth_trace(const BoardSpec& board, const EnvSpec& env, const MagnetSpec& magnet,
                  const std::vector<PathPoint>& path, const SynthOptions& options, Rng& rng);

}  // namespace magkey
