#include "magkey/fingerprint.hpp"

#include <algorithm>
#include <cmath>

#include "magkey/errors.hpp"

namespace magkey {

namespace {

constexpr std::int64_t kMaxBins = 1 << 22;

std::int64_t bin_index(double v, double width) {
  return static_cast<std::int64_t>(std::floor(v / width));
}

AxisHistogram make_histogram(const Trace& trace, int axis, double width) {
  std::int64_t lo = INT64_MAX, hi = INT64_MIN;
  for (const auto& s : trace) {
    const auto k = bin_index(s.b[axis], width);
    lo = std::min(lo, k);
    hi = std::max(hi, k);
  }
  if (hi - lo + 1 > kMaxBins) throw DomainError("histogram range too wide for bin width");
  AxisHistogram h;
  h.edges_offset = lo;
  h.counts.assign(static_cast<std::size_t>(hi - lo + 1), 0);
  for (const auto& s : trace) ++h.counts[static_cast<std::size_t>(bin_index(s.b[axis], width) - lo)];
  h.total = trace.size();
  return h;
}

double median(std::vector<double> v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2) return *mid;
  return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

}  // namespace

double AxisHistogram::mass_at(std::int64_t bin) const {
  if (bin < 0 || bin >= static_cast<std::int64_t>(counts.size()) || total == 0) return 0.0;
  return static_cast<double>(counts[static_cast<std::size_t>(bin)]) / static_cast<double>(total);
}

std::size_t AxisHistogram::populated_bins() const {
  return static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }));
}

Fingerprint::Fingerprint(BoardSpec board, double bin_width, std::vector<CellFingerprint> cells,
                         AffineMap transform, FingerprintMeta meta)
    : board_(std::move(board)),
      bin_width_(bin_width),
      cells_(std::move(cells)),
      transform_(transform),
      meta_(std::move(meta)) {
  board_.validate();
  if (!(bin_width_ > 0.0) || !std::isfinite(bin_width_)) throw DomainError("bin_width must be > 0");
  if (static_cast<int>(cells_.size()) != board_.cell_count())
    throw IncompleteFingerprintError("fingerprint has " + std::to_string(cells_.size()) +
                                     " cells, board has " + std::to_string(board_.cell_count()));
  transform_.validate();
  for (std::size_t c = 0; c < cells_.size(); ++c)
    for (const auto& h : cells_[c].axes)
      if (h.total == 0 || h.populated_bins() == 0)
        throw IncompleteFingerprintError("cell " + std::to_string(c) + " has an empty histogram");
}

Vec3 Fingerprint::cell_center(CellId id) const { return transform_.apply(cell(id).center); }

double Fingerprint::probability(CellId id, int axis, double value) const {
  const double u = transform_.invert(axis, value);
  const AxisHistogram& h = cell(id).axes[static_cast<std::size_t>(axis)];
  const double k = std::floor(u / bin_width_) - static_cast<double>(h.edges_offset);
  if (!(k >= 0.0) || k >= static_cast<double>(h.counts.size())) return 0.0;
  return h.mass_at(static_cast<std::int64_t>(k));
}

std::pair<double, double> Fingerprint::bin_edges(int axis, std::int64_t bin) const {
  const double lo = transform_.apply(axis, static_cast<double>(bin) * bin_width_);
  const double hi = transform_.apply(axis, static_cast<double>(bin + 1) * bin_width_);
  return lo <= hi ? std::pair{lo, hi} : std::pair{hi, lo};
}

Fingerprint build_fingerprint(const std::map<CellId, Trace>& per_cell_traces,
                              const BoardSpec& board, const FingerprintOptions& options) {
  board.validate();
  if (!(options.bin_width > 0.0) || !std::isfinite(options.bin_width))
    throw DomainError("bin_width must be > 0");
  for (const auto& [cell, trace] : per_cell_traces)
    if (!board.valid_cell(cell)) throw DomainError("trace for cell " + std::to_string(cell) + " outside board");

  std::vector<CellFingerprint> cells(static_cast<std::size_t>(board.cell_count()));
  for (CellId c = 0; c < board.cell_count(); ++c) {
    const auto it = per_cell_traces.find(c);
    if (it == per_cell_traces.end())
      throw IncompleteFingerprintError("no training trace for cell " + std::to_string(c));
    const Trace& trace = it->second;
    if (trace.size() < kMinTrainingSamples)
      throw InsufficientDataError("cell " + std::to_string(c) + " has " + std::to_string(trace.size()) +
                                  " samples, need " + std::to_string(kMinTrainingSamples));
    for (const auto& s : trace)
      if (!s.b.allFinite()) throw FormatError("non-finite reading in cell " + std::to_string(c));
    auto& cf = cells[static_cast<std::size_t>(c)];
    const auto center = options.centers.find(c);
    if (center != options.centers.end() && !center->second.allFinite())
      throw FormatError("non-finite center for cell " + std::to_string(c));
    for (int a = 0; a < 3; ++a) {
      cf.axes[static_cast<std::size_t>(a)] = make_histogram(trace, a, options.bin_width);
      if (center != options.centers.end()) {
        cf.center[a] = center->second[a];
        continue;
      }
      std::vector<double> v;
      v.reserve(trace.size());
      for (const auto& s : trace) v.push_back(s.b[a]);
      cf.center[a] = median(std::move(v));
    }
  }
  return Fingerprint(board, options.bin_width, std::move(cells), AffineMap::identity(), options.meta);
}

double cell_log_likelihood(std::span<const MagSample> window, const Fingerprint& fp, CellId cell,
                           Axes axes) {
  if (window.empty()) throw DomainError("empty window");
  if (!fp.board().valid_cell(cell)) throw DomainError("cell outside fingerprint grid");
  double sum = 0.0;
  for (int a = 0; a < 3; ++a) {
    if (!axes.has(a)) continue;
    for (const auto& s : window) sum += std::log(std::max(fp.probability(cell, a, s.b[a]), kLikelihoodFloor));
  }
  return sum;
}

}  // namespace magkey
