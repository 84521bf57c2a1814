#include "magkey/offset.hpp"

#include <cmath>
#include <limits>

#include "magkey/errors.hpp"
#include "magkey/fingerprint.hpp"

namespace magkey {

SilenceStats estimate_silence(std::span<const MagSample> trace) {
  if (trace.size() < kMinSilenceSamples)
    throw InsufficientDataError("silence needs at least " + std::to_string(kMinSilenceSamples) +
                                " samples, got " + std::to_string(trace.size()));
  SilenceStats stats;
  stats.n_samples = trace.size();
  for (const auto& s : trace) stats.mean += s.b;
  stats.mean /= static_cast<double>(trace.size());
  for (const auto& s : trace) stats.var += (s.b - stats.mean).cwiseAbs2();
  stats.var /= static_cast<double>(trace.size() - 1);
  return stats;
}

Trace remove_silence(std::span<const MagSample> trace, const SilenceStats& stats) {
  Trace out(trace.begin(), trace.end());
  for (auto& s : out) s.b -= stats.mean;
  return out;
}

double silence_drift_score(const SilenceStats& stats, std::span<const MagSample> absent_window) {
  if (absent_window.empty()) throw InsufficientDataError("empty drift window");
  Vec3 mean = Vec3::Zero();
  for (const auto& s : absent_window) mean += s.b;
  mean /= static_cast<double>(absent_window.size());
  double score = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double se = std::sqrt(std::max(stats.var[i], 1e-12) / absent_window.size());
    score = std::max(score, std::abs(mean[i] - stats.mean[i]) / se);
  }
  return score;
}

const char* to_string(Polarity polarity) {
  return polarity == Polarity::kNormal ? "normal" : "flipped";
}

Polarity parse_polarity(const std::string& text) {
  if (text == "normal") return Polarity::kNormal;
  if (text == "flipped") return Polarity::kFlipped;
  throw FormatError("bad polarity '" + text + "'");
}

Polarity detect_polarity(std::span<const MagSample> ref_window, const Fingerprint& fp,
                         CellId ref_cell) {
  if (ref_window.size() < kMinPolarityWindow)
    throw InsufficientDataError("reference window needs at least " +
                                std::to_string(kMinPolarityWindow) + " samples");
  if (!fp.board().valid_cell(ref_cell)) throw DomainError("reference cell outside fingerprint grid");
  Vec3 mean = Vec3::Zero();
  for (const auto& s : ref_window) mean += s.b;
  mean /= static_cast<double>(ref_window.size());
  const Vec3 stored = fp.cell_center(ref_cell);
  const double denom = mean.norm() * stored.norm();
  const double cosine = denom > 0.0 ? mean.dot(stored) / denom : 0.0;
  if (!(std::abs(cosine) >= kPolarityMinCosine))
    throw AmbiguousPolarityError("reference reading nearly orthogonal to stored cell (cos " +
                                 std::to_string(cosine) + ")");
  return cosine > 0.0 ? Polarity::kNormal : Polarity::kFlipped;
}

Trace apply_polarity(std::span<const MagSample> trace, Polarity polarity) {
  Trace out(trace.begin(), trace.end());
  if (polarity == Polarity::kFlipped)
    for (auto& s : out) s.b = -s.b;
  return out;
}

}  // namespace magkey
