#include "magkey/regen.hpp"

#include <algorithm>
#include <cmath>

#include "magkey/errors.hpp"

namespace magkey {

namespace {

constexpr std::size_t kMinAnchorSamples = 50;

// Inverse CDF of a histogram (linear within bins), in the fingerprint's
// current reading space.
double histogram_quantile(const Fingerprint& fp, CellId cell, int axis, double q) {
  const AxisHistogram& h = fp.cell(cell).axes[static_cast<std::size_t>(axis)];
  const double target = q * static_cast<double>(h.total);
  double acc = 0.0;
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    const double c = h.counts[k];
    if (c > 0 && acc + c >= target) {
      const double frac = (target - acc) / c;
      const double u = (static_cast<double>(h.edges_offset + static_cast<std::int64_t>(k)) + frac) * fp.bin_width();
      return fp.transform().apply(axis, u);
    }
    acc += c;
  }
  const double u = static_cast<double>(h.edges_offset + static_cast<std::int64_t>(h.counts.size())) * fp.bin_width();
  return fp.transform().apply(axis, u);
}

}  // namespace

AffineMap fit_affine(const std::array<AnchorWindow, 2>& anchors, const Fingerprint& fp,
                     const AffineFitOptions& options) {
  for (const auto& w : anchors) {
    if (!fp.board().valid_cell(w.cell)) throw DomainError("anchor cell outside fingerprint grid");
    if (w.samples.size() < kMinAnchorSamples)
      throw InsufficientDataError("anchor window needs at least " + std::to_string(kMinAnchorSamples) + " samples");
  }
  if (anchors[0].cell == anchors[1].cell) throw DomainError("anchor cells must be distinct");

  AffineMap map;
  for (int a = 0; a < 3; ++a) {
    const double f0 = fp.cell_center(anchors[0].cell)[a];
    const double f1 = fp.cell_center(anchors[1].cell)[a];
    if (!(std::abs(f0 - f1) >= options.min_separation))
      throw IllConditionedAnchorsError(a, std::string("anchor cells too close on axis ") + "xyz"[a] + " (" +
                                              std::to_string(std::abs(f0 - f1)) + " µT apart)");
    if (options.mode == AffineFitMode::kMeans) {
      double o[2];
      for (int i = 0; i < 2; ++i) {
        double sum = 0.0;
        for (const auto& s : anchors[static_cast<std::size_t>(i)].samples) sum += s.b[a];
        o[i] = sum / static_cast<double>(anchors[static_cast<std::size_t>(i)].samples.size());
      }
      map.gain[a] = (o[0] - o[1]) / (f0 - f1);
      map.offset[a] = o[0] - map.gain[a] * f0;
    } else {
      double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
      for (const auto& w : anchors) {
        std::vector<double> obs;
        obs.reserve(w.samples.size());
        for (const auto& s : w.samples) obs.push_back(s.b[a]);
        std::sort(obs.begin(), obs.end());
        for (std::size_t j = 0; j < obs.size(); ++j) {
          const double q = (static_cast<double>(j) + 0.5) / static_cast<double>(obs.size());
          const double f = histogram_quantile(fp, w.cell, a, q);
          sx += f;
          sy += obs[j];
          sxx += f * f;
          sxy += f * obs[j];
          n += 1;
        }
      }
      const double det = n * sxx - sx * sx;
      if (!(std::abs(det) > 0.0)) throw IllConditionedAnchorsError(a, "degenerate quantile fit");
      map.gain[a] = (n * sxy - sx * sy) / det;
      map.offset[a] = (sy - map.gain[a] * sx) / n;
    }
  }
  if (!map.invertible()) throw IllConditionedAnchorsError(0, "fitted map is not invertible");
  return map;
}

Fingerprint regenerate(const Fingerprint& fp, const AffineMap& map) {
  map.validate();
  FingerprintMeta meta = fp.meta_;
  meta.regenerated = true;
  return Fingerprint(fp.board_, fp.bin_width_, fp.cells_, compose(map, fp.transform_), meta);
}

std::array<CellId, 2> default_anchor_cells(const BoardSpec& board) {
  board.validate();
  CellId nearest = 0, farthest = 0;
  double dmin = INFINITY, dmax = -1.0;
  for (CellId c = 0; c < board.cell_count(); ++c) {
    const double d = (board.magnet_point(board.centroid(c)) - board.sensor_pos).norm();
    if (d < dmin) dmin = d, nearest = c;
    if (d > dmax) dmax = d, farthest = c;
  }
  return {nearest, farthest};
}

}  // namespace magkey
