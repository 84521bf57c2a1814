#include "magkey/evalharness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "magkey/errors.hpp"
#include "magkey/io.hpp"

namespace magkey {

namespace {

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
  unsigned hw = threads > 0 ? static_cast<unsigned>(threads) : std::max(1u, std::thread::hardware_concurrency());
  hw = static_cast<unsigned>(std::min<std::size_t>(hw, std::max<std::size_t>(n, 1)));
  if (hw <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (unsigned t = 0; t < hw; ++t)
    pool.emplace_back([&] {
      try {
        for (std::size_t i = next++; i < n; i = next++) fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    });
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

Scenario with_variant(const Scenario& base, const Variant& v) {
  Scenario s = base;
  s.magnet = v.magnet;
  s.env = v.env;
  return s;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

int Scenario::samples(double seconds) const {
  return std::max(1, static_cast<int>(std::lround(seconds * rate_hz)));
}

std::uint64_t config_hash(const Scenario& scenario) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_json(scenario).dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

SilenceStats calibrate_silence(const Scenario& scenario, Rng& rng) {
  SynthOptions opt{scenario.rate_hz, scenario.transition_s, 0.0};
  const Trace trace =
      synth_trace(scenario.board, scenario.env, scenario.magnet,
                  {{std::nullopt, scenario.samples(scenario.silence_s) / scenario.rate_hz}}, opt, rng);
  return estimate_silence(trace);
}

Trace simulate_dwell(const Scenario& scenario, const Vec2& pos, int n_samples,
                     const SilenceStats& silence, Rng& rng, double t0) {
  SynthOptions opt{scenario.rate_hz, scenario.transition_s, t0};
  const Trace raw = synth_trace(scenario.board, scenario.env, scenario.magnet,
                                {{pos, n_samples / scenario.rate_hz}}, opt, rng);
  return remove_silence(raw, silence);
}

Fingerprint build_factory_fingerprint(const Scenario& scenario, Rng& rng, double bin_width) {
  const SilenceStats silence = calibrate_silence(scenario, rng);
  const BoardSpec& board = scenario.board;
  const int n = scenario.samples(scenario.train_s);
  const int n_centroid = static_cast<int>(std::lround(n * std::clamp(scenario.train_centroid_fraction, 0.0, 1.0)));
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::map<CellId, Trace> traces;
  std::map<CellId, Vec3> centers;
  double t = scenario.silence_s;
  for (CellId c = 0; c < board.cell_count(); ++c) {
    const Vec2 centroid = board.centroid(c);
    Trace trace;
    if (n_centroid > 0) {
      trace = simulate_dwell(scenario, centroid, n_centroid, silence, rng, t);
      Vec3 sum = Vec3::Zero();
      for (const auto& s : trace) sum += s.b;
      centers.emplace(c, sum / static_cast<double>(trace.size()));
    }
    t += n_centroid / scenario.rate_hz;
    const double half = board.cell_size / 2 + scenario.train_margin;
    const Vec2 lo = (centroid - Vec2::Constant(half)).cwiseMax(Vec2::Zero());
    const Vec2 hi = (centroid + Vec2::Constant(half)).cwiseMin(Vec2(board.width(), board.height()));
    // Jittered-grid sweep: one point per stratum, strata visited in random order.
    const int n_spread = n - n_centroid;
    const int g = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(std::max(n_spread, 1)))));
    std::vector<int> strata(static_cast<std::size_t>(g * g));
    std::iota(strata.begin(), strata.end(), 0);
    std::shuffle(strata.begin(), strata.end(), rng);
    for (int j = 0; j < n_spread; ++j) {
      const int cell = strata[static_cast<std::size_t>(j)];
      const double u = (cell % g + unit(rng)) / g;
      const double v = (cell / g + unit(rng)) / g;
      const Vec2 pos = lo + (hi - lo).cwiseProduct(Vec2(u, v));
      Vec3 b = noiseless_reading(board, scenario.env, scenario.magnet, pos, t);
      for (int a = 0; a < 3; ++a) b[a] += scenario.env.noise_sigma * noise(rng);
      trace.push_back({t, b - silence.mean});
      t += 1.0 / scenario.rate_hz;
    }
    traces.emplace(c, std::move(trace));
  }
  FingerprintOptions opt;
  opt.bin_width = bin_width;
  opt.meta.magnet_label = scenario.magnet.label;
  opt.meta.device_label = "simulated";
  opt.centers = std::move(centers);
  return build_fingerprint(traces, board, opt);
}

ErrorStats summarize_errors(std::vector<double> errors) {
  ErrorStats s;
  s.n = static_cast<int>(errors.size());
  if (errors.empty()) return s;
  std::sort(errors.begin(), errors.end());
  double sum = 0.0;
  for (double e : errors) sum += e;
  s.mean = sum / s.n;
  const auto quantile = [&](double q) {
    const double pos = q * (s.n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, errors.size() - 1);
    return errors[lo] + (pos - static_cast<double>(lo)) * (errors[hi] - errors[lo]);
  };
  s.median = quantile(0.5);
  s.p75 = quantile(0.75);
  s.max = errors.back();
  return s;
}

EvalReport run_accuracy_eval(const Fingerprint& fp, const Scenario& scenario,
                             const EvalParams& params, Rng& rng) {
  const BoardSpec& board = scenario.board;
  if (!fp.board().same_grid(board)) throw DomainError("scenario grid does not match fingerprint");
  if (params.m < 1) throw DomainError("m must be >= 1");
  if (params.k < 1 || params.k > fp.cell_count()) throw DomainError("k must be in [1, cell count]");
  if (params.axes.empty()) throw DomainError("empty axis set");

  EvalReport report;
  report.config_hash = config_hash(scenario);
  const SilenceStats silence = calibrate_silence(scenario, rng);
  double t = scenario.silence_s;
  Polarity polarity = Polarity::kNormal;
  if (params.reference_cell) {
    const Trace ref = simulate_dwell(scenario, board.centroid(*params.reference_cell),
                                     scenario.samples(1.0), silence, rng, t);
    polarity = detect_polarity(ref, fp, *params.reference_cell);
    report.polarity = polarity;
    t += 2.0;
  }

  if (params.test == TestSet::kCentroids) {
    for (CellId c = 0; c < board.cell_count(); ++c)
      for (int r = 0; r < params.reps_per_cell; ++r) report.true_positions.push_back(board.centroid(c));
  } else {
    const double margin = board.cell_size / 2;
    std::uniform_real_distribution<double> ux(margin, board.width() - margin);
    std::uniform_real_distribution<double> uy(margin, board.height() - margin);
    for (int i = 0; i < params.n_uniform; ++i) {
      const double x = ux(rng);
      report.true_positions.emplace_back(x, uy(rng));
    }
  }

  const std::size_t n = report.true_positions.size();
  std::vector<Trace> windows(n);
  const double gap = params.m / scenario.rate_hz + 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    windows[i] = apply_polarity(simulate_dwell(scenario, report.true_positions[i], params.m, silence, rng, t), polarity);
    t += gap;
  }

  report.estimated_positions.resize(n);
  report.estimated_cells.resize(n);
  report.true_cells.resize(n);
  report.errors.resize(n);
  parallel_for(n, params.threads, [&](std::size_t i) {
    const Estimate est = estimate_key_cell(windows[i], fp, params.k, params.axes);
    report.estimated_positions[i] = est.position;
    report.estimated_cells[i] =
        est.mode == EstimateMode::kDiscrete ? est.cell : board.cell_at(est.position).value_or(est.cell);
    report.true_cells[i] = *board.cell_at(report.true_positions[i]);
    report.errors[i] = (est.position - report.true_positions[i]).norm();
  });

  std::vector<std::vector<double>> per_cell(static_cast<std::size_t>(board.cell_count()));
  int correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    correct += report.estimated_cells[i] == report.true_cells[i];
    per_cell[static_cast<std::size_t>(report.true_cells[i])].push_back(report.errors[i]);
  }
  for (auto& v : per_cell) report.per_cell.push_back(summarize_errors(std::move(v)));
  report.overall = summarize_errors(report.errors);
  report.accuracy = n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
  return report;
}

EvalReport run_density_sweep(const Scenario& base, const std::vector<double>& cell_sizes,
                             const EvalParams& params) {
  EvalReport out;
  out.label = "density";
  out.config_hash = config_hash(base);
  for (std::size_t i = 0; i < cell_sizes.size(); ++i) {
    const double size = cell_sizes[i];
    if (!(size > 0.0)) throw DomainError("cell size must be > 0");
    Scenario s = base;
    s.board.cell_size = size;
    s.board.rows = static_cast<int>(std::floor(base.board.height() / size + 1e-9));
    s.board.cols = static_cast<int>(std::floor(base.board.width() / size + 1e-9));
    s.board.validate();
    Rng train(mix_seed(base.seed, 2 * i));
    Rng test(mix_seed(base.seed, 2 * i + 1));
    const Fingerprint fp = build_factory_fingerprint(s, train);
    const EvalReport r = run_accuracy_eval(fp, s, params, test);
    out.curves["accuracy"].emplace_back(size, r.accuracy);
    out.curves["median_error_cm"].emplace_back(size, r.overall.median);
    out.curves["mean_error_cm"].emplace_back(size, r.overall.mean);
  }
  return out;
}

std::array<AnchorWindow, 2> record_anchors(const Scenario& scenario,
                                           const std::array<CellId, 2>& cells,
                                           const SilenceStats& silence, Rng& rng) {
  std::array<AnchorWindow, 2> out;
  double t = scenario.silence_s;
  for (std::size_t i = 0; i < 2; ++i) {
    out[i].cell = cells[i];
    out[i].samples = simulate_dwell(scenario, scenario.board.centroid(cells[i]),
                                    scenario.samples(scenario.train_s), silence, rng, t);
    t += scenario.train_s + 1.0;
  }
  return out;
}

RegenComparison compare_regeneration(const Scenario& base, const Variant& target,
                                     const std::array<CellId, 2>& anchors,
                                     const EvalParams& params, const AffineFitOptions& fit) {
  const Scenario test = with_variant(base, target);
  Rng master_rng(mix_seed(base.seed, 11));
  Rng native_rng(mix_seed(base.seed, 12));
  Rng anchor_rng(mix_seed(base.seed, 13));
  const Fingerprint master = build_factory_fingerprint(base, master_rng);
  const Fingerprint native = build_factory_fingerprint(test, native_rng);
  const SilenceStats silence = calibrate_silence(test, anchor_rng);
  RegenComparison out;
  out.map = fit_affine(record_anchors(test, anchors, silence, anchor_rng), master, fit);
  const Fingerprint regen = regenerate(master, out.map);
  Rng eval_a(mix_seed(base.seed, 14));
  Rng eval_b(mix_seed(base.seed, 14));
  out.native = run_accuracy_eval(native, test, params, eval_a);
  out.native.label = "native";
  out.regenerated = run_accuracy_eval(regen, test, params, eval_b);
  out.regenerated.label = "regenerated";
  return out;
}

CrossTable run_cross_table(const Scenario& base, const std::vector<Variant>& variants,
                           const std::array<CellId, 2>& anchors, const EvalParams& params) {
  if (variants.size() < 2) throw DomainError("cross table needs at least two variants");
  CrossTable table;
  std::vector<Fingerprint> trained;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    table.labels.push_back(variants[i].label);
    Rng rng(mix_seed(base.seed, 100 + i));
    trained.push_back(build_factory_fingerprint(with_variant(base, variants[i]), rng));
  }
  for (std::size_t i = 0; i < variants.size(); ++i) {
    for (std::size_t j = 0; j < variants.size(); ++j) {
      CrossEntry entry;
      entry.train = variants[i].label;
      entry.test = variants[j].label;
      const Scenario test = with_variant(base, variants[j]);
      try {
        Rng anchor_rng(mix_seed(base.seed, 200 + j));
        const SilenceStats silence = calibrate_silence(test, anchor_rng);
        entry.map = fit_affine(record_anchors(test, anchors, silence, anchor_rng), trained[i]);
        Rng eval_rng(mix_seed(base.seed, 300 + j));
        entry.report = run_accuracy_eval(regenerate(trained[i], entry.map), test, params, eval_rng);
        entry.report.label = entry.train + "->" + entry.test;
        entry.ok = true;
      } catch (const Error& e) {
        entry.error = e.what();
      }
      table.entries.push_back(std::move(entry));
    }
  }
  return table;
}

std::string export_heatmap(const EvalReport& report, const BoardSpec& board) {
  if (static_cast<int>(report.per_cell.size()) != board.cell_count())
    throw DomainError("report does not match board");
  std::ostringstream out;
  out << "row";
  for (int c = 0; c < board.cols; ++c) out << ",c" << c;
  out << '\n' << std::setprecision(6);
  for (int r = 0; r < board.rows; ++r) {
    out << r;
    for (int c = 0; c < board.cols; ++c) {
      const ErrorStats& s = report.per_cell[static_cast<std::size_t>(board.cell_id(r, c))];
      out << ',';
      if (s.n > 0) out << s.mean;
    }
    out << '\n';
  }
  return out.str();
}

std::string export_cdf(const EvalReport& report) {
  std::vector<double> e = report.errors;
  std::sort(e.begin(), e.end());
  std::ostringstream out;
  out << "error_cm,fraction\n" << std::setprecision(10);
  for (std::size_t i = 0; i < e.size(); ++i)
    out << e[i] << ',' << static_cast<double>(i + 1) / static_cast<double>(e.size()) << '\n';
  return out.str();
}

std::vector<Click> make_click_sequence(const KeyLayout& layout, const BoardSpec& board, int n,
                                       double jitter_cm, Rng& rng) {
  if (!layout.matches(board)) throw DomainError("layout does not match board");
  const auto& keys = layout.keys;
  if (keys.empty() || n < 0) throw DomainError("click sequence needs keys and n >= 0");
  for (const auto& k : keys)
    if (k.cells.empty()) throw DomainError("key '" + k.id + "' has no cells");
  if (keys.size() == 1 && n > 1) throw DomainError("consecutive clicks need at least two keys");

  std::vector<int> order;
  for (int attempt = 0; attempt < 100 && static_cast<int>(order.size()) != n; ++attempt) {
    std::vector<int> remaining(keys.size(), n / static_cast<int>(keys.size()));
    for (int i = 0; i < n % static_cast<int>(keys.size()); ++i) ++remaining[static_cast<std::size_t>(i)];
    order.clear();
    int prev = -1;
    for (int step = 0; step < n; ++step) {
      std::vector<double> weights(keys.size());
      double total = 0.0;
      for (std::size_t k = 0; k < keys.size(); ++k)
        total += weights[k] = static_cast<int>(k) == prev ? 0.0 : remaining[k];
      if (total == 0.0) break;
      std::discrete_distribution<int> pick(weights.begin(), weights.end());
      prev = pick(rng);
      --remaining[static_cast<std::size_t>(prev)];
      order.push_back(prev);
    }
  }
  if (static_cast<int>(order.size()) != n) throw DomainError("could not build a click sequence");

  std::uniform_real_distribution<double> jitter(-jitter_cm, jitter_cm);
  std::vector<Click> clicks;
  for (int k : order) {
    const Key& key = keys[static_cast<std::size_t>(k)];
    Vec2 center = Vec2::Zero();
    for (CellId c : key.cells) center += board.centroid(c);
    center /= static_cast<double>(key.cells.size());
    Vec2 pos = board.centroid(key.cells.front());
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double dx = jitter(rng);
      const Vec2 p = center + Vec2(dx, jitter(rng));
      const auto cell = board.cell_at(p);
      if (cell && layout.key_for_cell(*cell) == &key) {
        pos = p;
        break;
      }
    }
    clicks.push_back({key.id, pos});
  }
  return clicks;
}

LabeledTrace synth_typing_trace(const Scenario& scenario, const std::vector<Click>& clicks,
                                const SilenceStats& silence, const TypingOptions& options,
                                Rng& rng) {
  std::vector<PathPoint> path{{std::nullopt, options.lead_in_s}};
  for (const auto& c : clicks) path.push_back({c.position, options.dwell_s});
  SynthOptions opt{scenario.rate_hz, scenario.transition_s, scenario.silence_s};
  LabeledTrace out = synth_labeled_trace(scenario.board, scenario.env, scenario.magnet, path, opt, rng);
  out.samples = remove_silence(out.samples, silence);
  for (auto& t : out.truth) t.path_index -= 1;
  return out;
}

CalculatorResult run_calculator_case(const Fingerprint& fp, const Scenario& scenario,
                                     const KeyLayout& layout, const CalculatorOptions& options,
                                     Rng& rng) {
  if (!layout.matches(fp.board()) || !fp.board().same_grid(scenario.board))
    throw DomainError("layout, scenario and fingerprint grids differ");
  const SilenceStats silence = calibrate_silence(scenario, rng);
  const int n = options.clicks_per_key * static_cast<int>(layout.keys.size());
  const auto clicks = make_click_sequence(layout, scenario.board, n, options.jitter_cm, rng);
  const LabeledTrace trace = synth_typing_trace(scenario, clicks, silence, options.typing, rng);
  const auto keystrokes = segment_stream(trace.samples, options.segmenter);

  CalculatorResult result;
  result.n_clicks = n;
  result.n_keystrokes = static_cast<int>(keystrokes.size());
  for (const auto& c : clicks) result.truth.push_back(c.key_id);
  result.detected.assign(clicks.size(), "");
  std::vector<bool> seen(clicks.size(), false);
  for (const auto& ks : keystrokes) {
    const SampleTruth& truth = trace.truth[(ks.start + ks.end) / 2];
    if (truth.state != MotionTruth::kStationary || truth.path_index < 0 ||
        seen[static_cast<std::size_t>(truth.path_index)]) {
      ++result.n_spurious;
      continue;
    }
    const auto idx = static_cast<std::size_t>(truth.path_index);
    seen[idx] = true;
    const Estimate est = estimate_key_cell(central_window(ks, static_cast<std::size_t>(options.m)), fp, options.k);
    if (const auto ev = map_key(est, layout)) result.detected[idx] = ev->key_id;
  }
  for (std::size_t i = 0; i < clicks.size(); ++i) {
    result.n_missed += !seen[i];
    result.n_correct += seen[i] && result.detected[i] == result.truth[i];
  }
  return result;
}

SegmentationPoint score_segmentation(const LabeledTrace& corpus, const SegmenterConfig& cfg) {
  SegmentationPoint p;
  p.tau = cfg.tau;
  const auto states = motion_states(corpus.samples, cfg);
  for (std::size_t i = 0; i < states.size(); ++i) {
    const bool truth_moving = corpus.truth[i].state == MotionTruth::kMoving;
    const bool pred_moving = states[i] == MotionState::kMoving;
    if (truth_moving && pred_moving) ++p.tp;
    else if (!truth_moving && pred_moving) ++p.fp;
    else if (truth_moving) ++p.fn;
    else ++p.tn;
  }

  // Each keystroke counts for the dwell holding its middle sample, so a
  // keystroke spanning two dwells recovers only one of them.
  int n_dwells = -1;
  for (const auto& t : corpus.truth) n_dwells = std::max(n_dwells, t.path_index);
  ++n_dwells;
  std::vector<bool> hit(static_cast<std::size_t>(n_dwells), false);
  for (const auto& ks : segment_stream(corpus.samples, cfg)) {
    const SampleTruth& t = corpus.truth[(ks.start + ks.end) / 2];
    if (t.state == MotionTruth::kStationary && t.path_index >= 0) hit[static_cast<std::size_t>(t.path_index)] = true;
  }
  const auto n_hit = std::count(hit.begin(), hit.end(), true);
  p.recovered = n_dwells > 0 ? static_cast<double>(n_hit) / n_dwells : 0.0;
  return p;
}

std::vector<SegmentationPoint> run_tau_sweep(const LabeledTrace& corpus,
                                             const std::vector<double>& taus, SegmenterConfig base) {
  std::vector<SegmentationPoint> out;
  for (double tau : taus) {
    base.tau = tau;
    out.push_back(score_segmentation(corpus, base));
  }
  return out;
}

}  // namespace magkey
