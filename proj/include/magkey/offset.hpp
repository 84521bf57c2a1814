#pragma once

#include <span>

#include "magkey/types.hpp"

namespace magkey {

class Fingerprint;

/// Earth + background estimate from a magnet-absent interval.
struct SilenceStats {
  Vec3 mean = Vec3::Zero();
  Vec3 var = Vec3::Zero();
  std::size_t n_samples = 0;
};

inline constexpr std::size_t kMinSilenceSamples = 50;

SilenceStats estimate_silence(std::span<const MagSample> trace);

/// b -> b - stats.mean for every sample; timestamps untouched.
Trace remove_silence(std::span<const MagSample> trace, const SilenceStats& stats);

/// How far the mean of a fresh magnet-absent window has wandered from the
/// stored silence mean, in units of the standard error of that window mean
/// (max over axes). Sessions are not re-calibrated automatically; callers
/// decide what to do with the number.
double silence_drift_score(const SilenceStats& stats, std::span<const MagSample> absent_window);

enum class Polarity { kNormal, kFlipped };

const char* to_string(Polarity polarity);
Polarity parse_polarity(const std::string& text);

inline constexpr std::size_t kMinPolarityWindow = 5;
inline constexpr double kPolarityMinCosine = 0.2;

/// Compares the mean reading at a known reference cell with the stored
/// fingerprint center of that cell. Throws AmbiguousPolarityError when the
/// two directions are close to orthogonal.
Polarity detect_polarity(std::span<const MagSample> ref_window, const Fingerprint& fp,
                         CellId ref_cell);

/// Negates all three axes when flipped.
Trace apply_polarity(std::span<const MagSample> trace, Polarity polarity);

}  // namespace magkey
