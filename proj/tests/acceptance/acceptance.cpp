// Acceptance gate: one line per criterion, non-zero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "magkey/errors.hpp"
#include "magkey/estimate.hpp"
#include "magkey/evalharness.hpp"
#include "magkey/keymap.hpp"
#include "magkey/regen.hpp"

using namespace magkey;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

struct TestCase {
  const char* name;
  std::function<Outcome()> run;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const Fingerprint& nominal_fp() {
  static const Fingerprint fp = [] {
    Scenario s;
    Rng rng(1001);
    return build_factory_fingerprint(s, rng);
  }();
  return fp;
}

// Naive posterior argmax: walks every stored bin and compares edges
// directly instead of indexing.
CellId brute_force_argmax(const Trace& window, const Fingerprint& fp) {
  CellId best = -1;
  double best_score = -std::numeric_limits<double>::infinity();
  for (CellId c = 0; c < fp.cell_count(); ++c) {
    double score = 0.0;
    for (int a = 0; a < 3; ++a) {
      const AxisHistogram& h = fp.cell(c).axes[a];
      for (const auto& s : window) {
        double p = 0.0;
        for (std::size_t k = 0; k < h.counts.size(); ++k) {
          const auto [lo, hi] = fp.bin_edges(a, h.edges_offset + static_cast<std::int64_t>(k));
          if (s.b[a] >= lo && s.b[a] < hi) {
            p = static_cast<double>(h.counts[k]) / static_cast<double>(h.total);
            break;
          }
        }
        score += std::log(p > 1e-6 ? p : 1e-6);
      }
    }
    if (score > best_score) {
      best_score = score;
      best = c;
    }
  }
  return best;
}

Outcome oracle_equivalence() {
  const Fingerprint& fp = nominal_fp();
  Scenario s;
  Rng rng(2002);
  const SilenceStats silence = calibrate_silence(s, rng);
  std::uniform_real_distribution<double> ux(0.0, s.board.width()), uy(0.0, s.board.height());
  std::vector<Trace> windows;
  for (int i = 0; i < 100; ++i) {
    const double x = ux(rng);
    windows.push_back(simulate_dwell(s, Vec2(x, uy(rng)), 20, silence, rng));
  }
  const auto t0 = Clock::now();
  int agree = 0;
  for (const auto& w : windows) agree += posterior(w, fp).argmax() == brute_force_argmax(w, fp);
  const double elapsed = seconds_since(t0);
  return {agree == 100 && elapsed < 5.0, fmt("%d/100 agree, %.2f s", agree, elapsed)};
}

Outcome discrete_accuracy() {
  const auto t0 = Clock::now();
  Scenario s;
  Rng train(3003), test(3004);
  const Fingerprint fp = build_factory_fingerprint(s, train);
  EvalParams p;
  p.reps_per_cell = 10;
  const EvalReport r = run_accuracy_eval(fp, s, p, test);
  const double elapsed = seconds_since(t0);
  const auto n = r.errors.size();
  return {n >= 1440 && r.accuracy >= 0.91 && elapsed < 60.0,
          fmt("%.2f%% over %zu keystrokes, %.1f s", 100 * r.accuracy, n, elapsed)};
}

Outcome calculator_case() {
  Scenario s;
  Rng rng(4004);
  CalculatorOptions opt;
  const KeyLayout layout = calculator_layout(s.board);
  const CalculatorResult r = run_calculator_case(nominal_fp(), s, layout, opt, rng);
  return {r.n_clicks == 320 && r.n_correct == 320,
          fmt("%d/%d correct (%d keystrokes, %d missed, %d spurious)", r.n_correct, r.n_clicks,
              r.n_keystrokes, r.n_missed, r.n_spurious)};
}

EvalReport continuous_eval(int k, Axes axes) {
  Scenario s;
  Rng rng(5005);
  EvalParams p;
  p.test = TestSet::kUniform;
  p.n_uniform = 1440;
  p.k = k;
  p.axes = axes;
  return run_accuracy_eval(nominal_fp(), s, p, rng);
}

Outcome continuous_median() {
  const double k1 = continuous_eval(1, Axes::all()).overall.median;
  const double k2 = continuous_eval(2, Axes::all()).overall.median;
  return {k2 < 1.0 && k2 <= k1, fmt("median k=2 %.2f mm, k=1 %.2f mm", 10 * k2, 10 * k1)};
}

Outcome axis_ablation() {
  const double xyz = continuous_eval(2, Axes::all()).overall.median;
  const double xy = continuous_eval(2, Axes::xy()).overall.median;
  bool pass = std::abs(xy - xyz) <= 0.10 * xyz;
  std::string detail = fmt("xyz %.2f cm, xy %.2f cm", xyz, xy);
  for (const char* single : {"x", "y", "z"}) {
    const double m = continuous_eval(2, Axes::parse(single)).overall.median;
    pass = pass && m > xyz && m > xy;
    detail += fmt(", %s %.2f cm", single, m);
  }
  return {pass, detail};
}

Outcome cross_magnet() {
  Scenario base;
  bool pass = true;
  std::string detail;
  for (double ratio : {2.0, 0.13}) {
    Variant v{fmt("x%.2f", ratio), base.magnet, base.env};
    v.magnet.moment *= ratio;
    EvalParams p;
    p.reps_per_cell = 5;
    const RegenComparison c = compare_regeneration(base, v, default_anchor_cells(base.board), p);
    const double gap = 100 * (c.native.accuracy - c.regenerated.accuracy);
    pass = pass && std::abs(gap) <= 5.0;
    detail += fmt("%sratio %.2f: native %.2f%% regen %.2f%%", detail.empty() ? "" : "; ", ratio,
                  100 * c.native.accuracy, 100 * c.regenerated.accuracy);
  }
  return {pass, detail};
}

Outcome rigid_rotation() {
  Scenario plain;
  Scenario rotated = plain;
  Rng pick(6006);
  std::uniform_real_distribution<double> angle(-3.14159, 3.14159);
  for (int i = 0; i < 3; ++i) rotated.env.rotation[i] = angle(pick);
  EvalParams p;
  p.reps_per_cell = 5;
  std::vector<CellId> decisions[2];
  const Scenario* scenarios[2] = {&plain, &rotated};
  for (int i = 0; i < 2; ++i) {
    Rng train(6007), test(6008);
    const Fingerprint fp = build_factory_fingerprint(*scenarios[i], train);
    decisions[i] = run_accuracy_eval(fp, *scenarios[i], p, test).estimated_cells;
  }
  std::size_t same = 0;
  for (std::size_t i = 0; i < decisions[0].size(); ++i) same += decisions[0][i] == decisions[1][i];
  return {same == decisions[0].size(),
          fmt("%zu/%zu decisions unchanged (roll %.2f pitch %.2f yaw %.2f rad)", same, decisions[0].size(),
              rotated.env.rotation[0], rotated.env.rotation[1], rotated.env.rotation[2])};
}

Outcome polarity() {
  const Fingerprint& fp = nominal_fp();
  Scenario normal;
  const KeyLayout layout = calculator_layout(normal.board);
  const CellId ref = layout.find_key(*layout.reference_key)->cells.front();
  EvalParams p;
  p.reps_per_cell = 1;
  p.reference_cell = ref;
  int flipped_detected = 0, paired_equal = 0;
  for (int session = 0; session < 100; ++session) {
    Scenario flipped = normal;
    flipped.magnet.polarity = -1;
    Rng a(7000 + session), b(7000 + session);
    const EvalReport rf = run_accuracy_eval(fp, flipped, p, a);
    const EvalReport rn = run_accuracy_eval(fp, normal, p, b);
    flipped_detected += rf.polarity == Polarity::kFlipped && rn.polarity == Polarity::kNormal;
    paired_equal += rf.accuracy == rn.accuracy;
  }
  return {flipped_detected == 100 && paired_equal == 100,
          fmt("%d/100 flipped sessions detected, %d/100 paired accuracies equal", flipped_detected, paired_equal)};
}

Outcome segmentation_sweep() {
  Scenario s;
  Rng rng(8008);
  const SilenceStats silence = calibrate_silence(s, rng);
  const auto clicks = make_click_sequence(calculator_layout(s.board), s.board, 200, 1.0, rng);
  const LabeledTrace corpus = synth_typing_trace(s, clicks, silence, {}, rng);
  const std::vector<double> taus{1, 2, 3, 5, 7, 10, 15, 20, 30, 50, 70, 100};
  const auto pts = run_tau_sweep(corpus, taus);
  bool monotone = true;
  std::size_t best = 0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    monotone = monotone && pts[i].fp_rate() <= pts[i - 1].fp_rate() && pts[i].fn_rate() >= pts[i - 1].fn_rate();
    if (pts[i].accuracy() > pts[best].accuracy()) best = i;
  }
  const bool interior = best > 0 && best + 1 < pts.size();
  const SegmentationPoint def = score_segmentation(corpus, SegmenterConfig{});
  return {monotone && interior && def.recovered >= 0.99,
          fmt("monotone %s, best tau %.0f (acc %.3f), recovered %.1f%% of 200 at defaults", monotone ? "yes" : "no",
              pts[best].tau, pts[best].accuracy(), 100 * def.recovered)};
}

Outcome density_sweep() {
  Scenario s;
  s.seed = 9009;
  EvalParams p;
  p.reps_per_cell = 10;
  const EvalReport r = run_density_sweep(s, {2.0, 4.0, 6.0}, p);
  const auto& acc = r.curves.at("accuracy");
  const bool pass = acc[1].second >= acc[0].second && acc[2].second >= acc[0].second && acc[1].second == 1.0 &&
                    acc[2].second == 1.0;
  return {pass, fmt("2 cm %.2f%%, 4 cm %.2f%%, 6 cm %.2f%%", 100 * acc[0].second, 100 * acc[1].second,
                    100 * acc[2].second)};
}

}  // namespace

int main() {
  const std::vector<TestCase> cases{
      {"oracle_equivalence", oracle_equivalence},
      {"discrete_accuracy", discrete_accuracy},
      {"calculator_case", calculator_case},
      {"continuous_median", continuous_median},
      {"axis_ablation", axis_ablation},
      {"cross_magnet_regen", cross_magnet},
      {"rigid_body_invariance", rigid_rotation},
      {"polarity", polarity},
      {"segmentation_sweep", segmentation_sweep},
      {"density_sweep", density_sweep},
  };
  int failed = 0;
  for (const auto& tc : cases) {
    Outcome o;
    try {
      o = tc.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %s: %s\n", o.pass ? "PASS" : "FAIL", tc.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu acceptance criteria passed\n", cases.size() - failed, cases.size());
  return failed ? 1 : 0;
}
