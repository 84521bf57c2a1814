#include "magkey/segment.hpp"

#include <cmath>

#include "magkey/errors.hpp"

namespace magkey {

void SegmenterConfig::validate() const {
  if (!(tau > 0.0)) throw DomainError("tau must be > 0");
  if (window < 2) throw DomainError("window must be >= 2");
  if (min_dwell < 1) throw DomainError("min_dwell must be >= 1");
  if (axes.empty()) throw DomainError("segmenter needs at least one axis");
}

namespace {

template <typename It>
double variance_sum(It first, It last, Axes axes) {
  const double n = static_cast<double>(std::distance(first, last));
  double total = 0.0;
  for (int a = 0; a < 3; ++a) {
    if (!axes.has(a)) continue;
    double mean = 0.0;
    for (auto it = first; it != last; ++it) mean += it->b[a];
    mean /= n;
    double ss = 0.0;
    for (auto it = first; it != last; ++it) ss += (it->b[a] - mean) * (it->b[a] - mean);
    total += ss / (n - 1.0);
  }
  return total;
}

}  // namespace

double window_variance(std::span<const MagSample> trace, std::size_t end, int window, Axes axes) {
  if (window < 2 || end + 1 < static_cast<std::size_t>(window) || end >= trace.size())
    throw DomainError("variance window out of range");
  const auto last = trace.begin() + static_cast<std::ptrdiff_t>(end + 1);
  return variance_sum(last - window, last, axes);
}

std::vector<MotionState> motion_states(std::span<const MagSample> trace, const SegmenterConfig& cfg) {
  cfg.validate();
  std::vector<MotionState> states(trace.size(), MotionState::kMoving);
  for (std::size_t i = static_cast<std::size_t>(cfg.window - 1); i < trace.size(); ++i)
    if (window_variance(trace, i, cfg.window, cfg.axes) <= cfg.tau) states[i] = MotionState::kStationary;
  return states;
}

StreamSegmenter::StreamSegmenter(SegmenterConfig cfg) : cfg_(cfg) { cfg_.validate(); }

std::optional<Keystroke> StreamSegmenter::push(const MagSample& sample) {
  const std::size_t i = index_++;
  recent_.push_back(sample);
  if (recent_.size() > static_cast<std::size_t>(cfg_.window)) recent_.pop_front();
  const bool stationary = recent_.size() == static_cast<std::size_t>(cfg_.window) &&
                          variance_sum(recent_.begin(), recent_.end(), cfg_.axes) <= cfg_.tau;
  if (stationary) {
    if (!run_start_) run_start_ = i;
    run_.push_back(sample);
    return std::nullopt;
  }
  return close_run();
}

std::optional<Keystroke> StreamSegmenter::flush() { return close_run(); }

std::optional<Keystroke> StreamSegmenter::pending() const {
  if (!run_start_ || run_.size() < static_cast<std::size_t>(cfg_.min_dwell)) return std::nullopt;
  return Keystroke{*run_start_, *run_start_ + run_.size() - 1, run_};
}

std::optional<Keystroke> StreamSegmenter::close_run() {
  std::optional<Keystroke> out = pending();
  if (out) out->samples = std::move(run_);
  run_start_.reset();
  run_.clear();
  return out;
}

std::vector<Keystroke> segment_stream(std::span<const MagSample> trace, const SegmenterConfig& cfg) {
  StreamSegmenter seg(cfg);
  std::vector<Keystroke> out;
  for (const auto& s : trace)
    if (auto ks = seg.push(s)) out.push_back(std::move(*ks));
  if (auto ks = seg.flush()) out.push_back(std::move(*ks));
  return out;
}

std::span<const MagSample> central_window(const Keystroke& ks, std::size_t m) {
  std::span<const MagSample> all(ks.samples);
  if (m == 0 || all.size() <= m) return all;
  return all.subspan((all.size() - m) / 2, m);
}

}  // namespace magkey
