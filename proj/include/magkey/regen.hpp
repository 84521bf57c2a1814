#pragma once

#include <array>
#include <span>

#include "magkey/affine.hpp"
#include "magkey/fingerprint.hpp"

namespace magkey {

/// Offset-free samples collected at a known cell during first-use setup.
struct AnchorWindow {
  CellId cell = 0;
  Trace samples;
};

enum class AffineFitMode {
  /// Two equations per axis from the anchor window means.
  kMeans,
  /// Least squares of sorted observed samples against factory histogram
  /// quantiles at matching ranks, pooled over both anchors.
  kQuantileLeastSquares,
};

struct AffineFitOptions {
  AffineFitMode mode = AffineFitMode::kMeans;
  /// Minimum factory center separation between anchors on each axis (µT).
  double min_separation = 1.0;
};

/// Fits observed = gain * factory + offset per axis. Throws
/// IllConditionedAnchorsError naming the axis whose factory centers are too
/// close, DomainError for invalid/duplicate cells.
AffineMap fit_affine(const std::array<AnchorWindow, 2>& anchors, const Fingerprint& fp,
                     const AffineFitOptions& options = {});

/// Factory fingerprint viewed through `map`: every bin edge e becomes
/// gain*e + offset, masses unchanged, centers transformed the same way.
Fingerprint regenerate(const Fingerprint& fp, const AffineMap& map);

/// Nearest and farthest cells from the sensor.
std::array<CellId, 2> default_anchor_cells(const BoardSpec& board);

}  // namespace magkey
