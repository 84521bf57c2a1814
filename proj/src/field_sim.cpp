#include "magkey/field_sim.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Geometry>
#include <Eigen/LU>

#include "magkey/errors.hpp"

namespace magkey {

void MagnetSpec::validate() const {
  if (!moment.allFinite()) throw DomainError("magnet moment must be finite");
  if (polarity != 1 && polarity != -1) throw DomainError("polarity must be +1 or -1");
}

Vec3 EnvSpec::background_at(double t) const {
  if (drift_amplitude.isZero()) return background_field;
  return background_field + drift_amplitude * std::sin(2.0 * std::numbers::pi * t / drift_period_s);
}

void EnvSpec::validate() const {
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw DomainError("noise_sigma must be >= 0");
  if (!earth_field.allFinite() || !background_field.allFinite() || !drift_amplitude.allFinite() ||
      !rotation.allFinite() || !hard_iron.allFinite() || !soft_iron.allFinite())
    throw DomainError("non-finite environment parameter");
  if (!drift_amplitude.isZero() && !(drift_period_s > 0.0)) throw DomainError("drift period must be > 0");
  if (std::abs(soft_iron.determinant()) < 1e-12) throw DomainError("soft_iron matrix is singular");
}

Mat3 rotation_matrix(double roll, double pitch, double yaw) {
  using Eigen::AngleAxisd;
  return (AngleAxisd(roll, Vec3::UnitX()) * AngleAxisd(pitch, Vec3::UnitY()) *
          AngleAxisd(yaw, Vec3::UnitZ()))
      .toRotationMatrix();
}

Vec3 dipole_field(const MagnetSpec& magnet, const Vec3& magnet_pos, const Vec3& sensor_pos) {
  const Vec3 r = sensor_pos - magnet_pos;
  const double d = r.norm();
  if (!(d >= kDipoleGuardCm)) throw DomainError("magnet closer than guard distance to sensor");
  const Vec3 m = magnet.effective_moment();
  const Vec3 u = r / d;
  return (3.0 * m.dot(u) * u - m) / (d * d * d);
}

namespace {

Vec3 reading(const BoardSpec& board, const EnvSpec& env, const MagnetSpec& magnet,
             const std::optional<Vec2>& pos, double presence, double t, const Mat3& sr) {
  Vec3 total = env.earth_field + env.background_at(t);
  if (pos && presence > 0.0)
    total += presence * dipole_field(magnet, board.magnet_point(*pos), board.sensor_pos);
  return sr * total + env.hard_iron;
}

Mat3 sensor_matrix(const EnvSpec& env) {
  return env.soft_iron * rotation_matrix(env.rotation.x(), env.rotation.y(), env.rotation.z());
}

}  // namespace

Vec3 noiseless_reading(const BoardSpec& board, const EnvSpec& env, const MagnetSpec& magnet,
                       const std::optional<Vec2>& position, double t) {
  return reading(board, env, magnet, position, 1.0, t, sensor_matrix(env));
}

LabeledTrace synth_labeled_trace(const BoardSpec& board, const EnvSpec& env,
                                 const MagnetSpec& magnet, const std::vector<PathPoint>& path,
                                 const SynthOptions& options, Rng& rng) {
  board.validate();
  env.validate();
  magnet.validate();
  if (!(options.rate_hz > 0.0)) throw DomainError("rate_hz must be > 0");
  if (!(options.transition_s >= 0.0)) throw DomainError("transition_s must be >= 0");
  for (const auto& p : path) {
    if (!(p.dwell_s > 0.0)) throw DomainError("dwell must be > 0");
    if (p.position && !board.contains(*p.position)) throw DomainError("path position outside board");
  }

  const Mat3 sr = sensor_matrix(env);
  std::normal_distribution<double> noise(0.0, 1.0);
  LabeledTrace out;
  const auto emit = [&](const std::optional<Vec2>& pos, double presence, SampleTruth truth) {
    const double t = options.t0 + static_cast<double>(out.samples.size()) / options.rate_hz;
    Vec3 b = reading(board, env, magnet, pos, presence, t, sr);
    if (env.noise_sigma > 0.0)
      for (int i = 0; i < 3; ++i) b[i] += env.noise_sigma * noise(rng);
    out.samples.push_back({t, b});
    out.truth.push_back(std::move(truth));
  };

  const int n_transition = static_cast<int>(std::lround(options.transition_s * options.rate_hz));
  for (std::size_t i = 0; i < path.size(); ++i) {
    const auto& to = path[i].position;
    if (i > 0) {
      const auto& from = path[i - 1].position;
      for (int j = 0; j < n_transition; ++j) {
        const double f = static_cast<double>(j + 1) / (n_transition + 1);
        std::optional<Vec2> pos;
        double presence = 1.0;
        if (from && to) {
          pos = (1.0 - f) * *from + f * *to;
        } else if (from) {
          pos = from;
          presence = 1.0 - f;
        } else if (to) {
          pos = to;
          presence = f;
        }
        emit(pos, presence, {MotionTruth::kMoving, static_cast<int>(i), pos});
      }
    }
    const int n_dwell = std::max(1, static_cast<int>(std::lround(path[i].dwell_s * options.rate_hz)));
    for (int j = 0; j < n_dwell; ++j) emit(to, 1.0, {MotionTruth::kStationary, static_cast<int>(i), to});
  }
  return out;
}

Trace synth_trace(const BoardSpec& board, const EnvSpec& env, const MagnetSpec& magnet,
                  const std::vector<PathPoint>& path, const SynthOptions& options, Rng& rng) {
  return synth_labeled_trace(board, env, magnet, path, options, rng).samples;
}

}  // namespace magkey
