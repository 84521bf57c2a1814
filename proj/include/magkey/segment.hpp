#pragma once

#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "magkey/types.hpp"

namespace magkey {

struct SegmenterConfig {
  double tau = 10.0;        // µT², threshold on the summed per-axis variance
  int window = 5;           // samples in the sliding variance window
  int min_dwell = 20;       // stationary samples required to emit a keystroke
  Axes axes = Axes::all();  // axes contributing to the variance statistic

  void validate() const;
};

struct Keystroke {
  std::size_t start = 0;  // inclusive sample index
  std::size_t end = 0;    // inclusive sample index
  Trace samples;

  std::size_t length() const { return end - start + 1; }
  double start_t() const { return samples.front().t; }
  double end_t() const { return samples.back().t; }
};

enum class MotionState { kMoving, kStationary };

/// Sum over selected axes of the unbiased sample variance of the `window`
/// samples ending at `end` (inclusive). Requires end + 1 >= window.
double window_variance(std::span<const MagSample> trace, std::size_t end, int window, Axes axes);

/// Per-sample state; the first window-1 samples are always moving.
std::vector<MotionState> motion_states(std::span<const MagSample> trace,
                                       const SegmenterConfig& cfg);

/// Streaming segmenter: push samples in order, receive a keystroke when a
/// stationary run of at least min_dwell samples ends. Single writer.
class StreamSegmenter {
 public:
  explicit StreamSegmenter(SegmenterConfig cfg);

  std::optional<Keystroke> push(const MagSample& sample);

  /// Emits the run in progress, if long enough. Call at end of stream.
  std::optional<Keystroke> flush();

  /// The stationary run in progress once it has reached min_dwell.
  std::optional<Keystroke> pending() const;

  std::size_t samples_seen() const { return index_; }
  const SegmenterConfig& config() const { return cfg_; }

 private:
  std::optional<Keystroke> close_run();

  SegmenterConfig cfg_;
  std::deque<MagSample> recent_;
  std::size_t index_ = 0;
  std::optional<std::size_t> run_start_;
  Trace run_;
};

/// Maximal stationary runs of at least min_dwell samples, in order.
std::vector<Keystroke> segment_stream(std::span<const MagSample> trace,
                                      const SegmenterConfig& cfg = {});

/// The m samples centred in a keystroke (all of them if shorter).
std::span<const MagSample> central_window(const Keystroke& ks, std::size_t m);

}  // namespace magkey
