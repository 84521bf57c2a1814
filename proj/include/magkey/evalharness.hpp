#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "magkey/board.hpp"
#include "magkey/estimate.hpp"
#include "magkey/field_sim.hpp"
#include "magkey/fingerprint.hpp"
#include "magkey/keymap.hpp"
#include "magkey/offset.hpp"
#include "magkey/regen.hpp"
#include "magkey/segment.hpp"

namespace magkey {

/// Simulated world plus collection durations. Defaults are the frozen
/// nominal configuration.
struct Scenario {
  BoardSpec board;
  EnvSpec env;
  MagnetSpec magnet;
  double rate_hz = 50.0;
  double silence_s = 15.0;
  double train_s = 15.0;
  double transition_s = 0.5;
  /// Share of each cell's training time spent at the centroid; the rest is
  /// spread uniformly over the cell area.
  double train_centroid_fraction = 0.1;
  /// The spread part covers the cell grown by this margin on every side (cm),
  /// clipped to the board.
  double train_margin = 0.1;
  std::uint64_t seed = 1;

  int samples(double seconds) const;
};

/// FNV-1a of the canonical JSON form of the scenario.
std::uint64_t config_hash(const Scenario& scenario);

/// Simulates a silence period with the magnet absent and estimates it.
SilenceStats calibrate_silence(const Scenario& scenario, Rng& rng);

/// Offset-free readings with the magnet held at pos (noise included).
Trace simulate_dwell(const Scenario& scenario, const Vec2& pos, int n_samples,
                     const SilenceStats& silence, Rng& rng, double t0 = 0.0);

/// Factory fingerprint: silence removal followed by per-cell collection.
Fingerprint build_factory_fingerprint(const Scenario& scenario, Rng& rng,
                                      double bin_width = 1.0);

enum class TestSet { kCentroids, kUniform };

struct EvalParams {
  int m = 20;
  int k = 1;
  Axes axes = Axes::all();
  TestSet test = TestSet::kCentroids;
  int reps_per_cell = 10;   // centroid test set
  int n_uniform = 1440;     // uniform test set
  /// When set, a reference click at this cell decides the polarity and
  /// every test window is corrected accordingly.
  std::optional<CellId> reference_cell;
  int threads = 0;  // 0 = hardware concurrency
};

struct ErrorStats {
  double mean = 0.0;
  double median = 0.0;
  double p75 = 0.0;
  double max = 0.0;
  int n = 0;
};

ErrorStats summarize_errors(std::vector<double> errors);

struct EvalReport {
  std::uint64_t config_hash = 0;
  std::string label;
  double accuracy = 0.0;
  ErrorStats overall;
  std::vector<ErrorStats> per_cell;       // indexed by true cell
  std::vector<double> errors;             // cm, in test order
  std::vector<CellId> true_cells;
  std::vector<CellId> estimated_cells;
  std::vector<Vec2> true_positions;
  std::vector<Vec2> estimated_positions;
  std::optional<Polarity> polarity;
  std::map<std::string, std::vector<std::pair<double, double>>> curves;
};

EvalReport run_accuracy_eval(const Fingerprint& fp, const Scenario& scenario,
                             const EvalParams& params, Rng& rng);

/// Accuracy per cell size. Boards keep the base board's physical extent
/// (rows = floor(height / size), cols = floor(width / size)); a fresh
/// factory fingerprint is built for each density.
EvalReport run_density_sweep(const Scenario& base, const std::vector<double>& cell_sizes,
                             const EvalParams& params);

/// A magnet/device configuration used for training or testing.
struct Variant {
  std::string label;
  MagnetSpec magnet;
  EnvSpec env;
};

struct CrossEntry {
  std::string train;
  std::string test;
  bool ok = false;
  std::string error;
  AffineMap map;
  EvalReport report;
};

struct CrossTable {
  std::vector<std::string> labels;
  std::vector<CrossEntry> entries;  // row-major train x test
};

/// For every (train, test) pair: the train variant's factory fingerprint is
/// regenerated from anchor windows recorded with the test variant, then
/// evaluated on test-variant keystrokes.
CrossTable run_cross_table(const Scenario& base, const std::vector<Variant>& variants,
                           const std::array<CellId, 2>& anchors, const EvalParams& params);

struct RegenComparison {
  AffineMap map;
  EvalReport native;
  EvalReport regenerated;
};

/// Master fingerprint (base scenario) regenerated to `target` versus a
/// fingerprint built natively on `target`, both scored on the same windows.
RegenComparison compare_regeneration(const Scenario& base, const Variant& target,
                                     const std::array<CellId, 2>& anchors,
                                     const EvalParams& params,
                                     const AffineFitOptions& fit = {});

/// Records anchor windows (train_s each, offset-free) for fit_affine.
std::array<AnchorWindow, 2> record_anchors(const Scenario& scenario,
                                           const std::array<CellId, 2>& cells,
                                           const SilenceStats& silence, Rng& rng);

/// Heatmap CSV: one line per board row, per-cell mean error in cm.
std::string export_heatmap(const EvalReport& report, const BoardSpec& board);

/// CDF CSV: sorted errors with cumulative fraction.
std::string export_cdf(const EvalReport& report);

/// One click of a synthesized typing session.
struct Click {
  std::string key_id;
  Vec2 position;
};

/// n clicks spread evenly over the layout's keys (n / keys each, remainder
/// to the first keys), shuffled so consecutive clicks hit different keys.
/// Click points are the key's area centroid plus uniform jitter in
/// [-jitter, jitter] per coordinate, redrawn until the point is on the key.
std::vector<Click> make_click_sequence(const KeyLayout& layout, const BoardSpec& board, int n,
                                       double jitter_cm, Rng& rng);

struct TypingOptions {
  double dwell_s = 1.0;
  double lead_in_s = 1.0;  // magnet absent before the first click
};

/// Offset-free labeled trace of a typing session; truth.path_index is the
/// click index (lead-in is -1).
LabeledTrace synth_typing_trace(const Scenario& scenario, const std::vector<Click>& clicks,
                                const SilenceStats& silence, const TypingOptions& options,
                                Rng& rng);

struct CalculatorOptions {
  int clicks_per_key = 20;
  double jitter_cm = 1.0;
  TypingOptions typing;
  SegmenterConfig segmenter;
  int m = 20;
  int k = 1;
};

struct CalculatorResult {
  int n_clicks = 0;
  int n_correct = 0;
  int n_keystrokes = 0;
  int n_missed = 0;
  int n_spurious = 0;
  std::vector<std::string> truth;
  std::vector<std::string> detected;  // "" when missed or unmapped

  double accuracy() const { return n_clicks ? static_cast<double>(n_correct) / n_clicks : 0.0; }
};

/// Closed loop: silence, typing trace, segmentation, estimation, key mapping.
CalculatorResult run_calculator_case(const Fingerprint& fp, const Scenario& scenario,
                                     const KeyLayout& layout, const CalculatorOptions& options,
                                     Rng& rng);

/// Per-sample MOVING (positive) / STATIONARY classification counts.
struct SegmentationPoint {
  double tau = 0.0;
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;
  double recovered = 0.0;  // fraction of clicks whose dwell holds a keystroke midpoint

  double fp_rate() const { return fp + tn ? static_cast<double>(fp) / (fp + tn) : 0.0; }
  double fn_rate() const { return fn + tp ? static_cast<double>(fn) / (fn + tp) : 0.0; }
  double accuracy() const {
    const auto d = tp + fp + fn;
    return d ? static_cast<double>(tp) / d : 0.0;
  }
};

SegmentationPoint score_segmentation(const LabeledTrace& corpus, const SegmenterConfig& cfg);

std::vector<SegmentationPoint> run_tau_sweep(const LabeledTrace& corpus,
                                             const std::vector<double>& taus,
                                             SegmenterConfig base = {});

}  // namespace magkey
