#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "magkey/affine.hpp"
#include "magkey/board.hpp"
#include "magkey/types.hpp"

namespace magkey {

/// Fixed-width histogram over one axis. Bin k covers
/// [(edges_offset + k) * width, (edges_offset + k + 1) * width).
struct AxisHistogram {
  std::int64_t edges_offset = 0;
  std::vector<std::uint32_t> counts;
  std::uint64_t total = 0;

  /// Normalised mass of bin index k (relative to edges_offset); 0 outside.
  double mass_at(std::int64_t bin) const;
  std::size_t populated_bins() const;
};

struct CellFingerprint {
  std::array<AxisHistogram, 3> axes;
  /// Reference reading (supplied, or the per-axis median of the training
  /// readings), in the untransformed space.
  Vec3 center = Vec3::Zero();
};

struct FingerprintMeta {
  std::string magnet_label;
  std::string device_label;
  std::string build_timestamp;
  bool regenerated = false;
};

/// Probability floor for readings that land in empty bins.
inline constexpr double kLikelihoodFloor = 1e-6;
inline constexpr std::size_t kMinTrainingSamples = 100;

struct FingerprintOptions {
  double bin_width = 1.0;
  FingerprintMeta meta;
  // Reference reading per cell; cells without one use the per-axis median
  // of their trace.
  std::map<CellId, Vec3> centers;
};

/// Per-cell, per-axis histograms of offset-free readings: the likelihood
/// model P(s_i | cell). Immutable once built; regeneration produces a new
/// object whose histograms are viewed through an affine transform.
class Fingerprint {
 public:
  Fingerprint(BoardSpec board, double bin_width, std::vector<CellFingerprint> cells,
              AffineMap transform, FingerprintMeta meta);

  const BoardSpec& board() const { return board_; }
  double bin_width() const { return bin_width_; }
  int cell_count() const { return static_cast<int>(cells_.size()); }
  const CellFingerprint& cell(CellId id) const { return cells_.at(static_cast<std::size_t>(id)); }
  const std::vector<CellFingerprint>& cells() const { return cells_; }
  const AffineMap& transform() const { return transform_; }
  const FingerprintMeta& meta() const { return meta_; }

  /// Cell center in the current (possibly regenerated) reading space.
  Vec3 cell_center(CellId id) const;

  /// Histogram mass of the bin containing value on the given axis; 0 when
  /// the value falls outside every populated bin.
  double probability(CellId id, int axis, double value) const;

  /// Lower/upper edge of histogram bin `bin` of `axis` in the current space
  /// (ordered so lower <= upper even for negative gains).
  std::pair<double, double> bin_edges(int axis, std::int64_t bin) const;

 private:
  friend Fingerprint regenerate(const Fingerprint& fp, const AffineMap& map);

  BoardSpec board_;
  double bin_width_;
  std::vector<CellFingerprint> cells_;
  AffineMap transform_;
  FingerprintMeta meta_;
};

Fingerprint build_fingerprint(const std::map<CellId, Trace>& per_cell_traces,
                              const BoardSpec& board, const FingerprintOptions& options = {});

/// Sum over the selected axes and window samples of log max(P(s_ij | cell), floor).
double cell_log_likelihood(std::span<const MagSample> window, const Fingerprint& fp, CellId cell,
                           Axes axes = Axes::all());

}  // namespace magkey
