#pragma once

#include <span>
#include <utility>
#include <vector>

#include "magkey/board.hpp"
#include "magkey/fingerprint.hpp"
#include "magkey/types.hpp"

namespace magkey {

/// Posterior over cells under a uniform prior.
struct Posterior {
  std::vector<double> log_score;
  std::vector<double> prob;
  /// Cells by descending probability; ties by ascending cell id.
  std::vector<CellId> ranking;

  CellId argmax() const { return ranking.front(); }
};

Posterior posterior(std::span<const MagSample> window, const Fingerprint& fp,
                    Axes axes = Axes::all());

enum class EstimateMode { kDiscrete, kContinuous };

const char* to_string(EstimateMode mode);

struct Estimate {
  EstimateMode mode = EstimateMode::kDiscrete;
  CellId cell = 0;                  // top-ranked cell
  Vec2 position = Vec2::Zero();     // board frame, cm
  int k = 1;
  int m = 0;
  std::vector<std::pair<CellId, double>> top;  // top-k cells with probabilities
  BoardSpec board;
  double t_start = 0.0;
  double t_end = 0.0;
};

/// k == 1: argmax cell centroid. k > 1: probability-weighted mean of the
/// top-k centroids (not necessarily a cell centroid).
Estimate estimate_key_cell(std::span<const MagSample> window, const Fingerprint& fp, int k = 1,
                           Axes axes = Axes::all());

/// True when the window's mean field is under half the weakest stored cell
/// center, i.e. the magnet is off the board.
bool magnet_absent(std::span<const MagSample> window, const Fingerprint& fp);

Estimate estimate_from_posterior(const Posterior& post, const Fingerprint& fp, int k, int m);

}  // namespace magkey
