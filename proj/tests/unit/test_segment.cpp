#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "magkey/errors.hpp"
#include "magkey/evalharness.hpp"
#include "magkey/segment.hpp"

using namespace magkey;

namespace {

struct Span {
  std::size_t start, end;
  bool operator==(const Span&) const = default;
};

// Two-pass variance per window, then maximal runs.
std::vector<Span> naive_segments(const Trace& t, const SegmenterConfig& cfg) {
  const auto w = static_cast<std::size_t>(cfg.window);
  std::vector<bool> still(t.size(), false);
  for (std::size_t i = w - 1; i < t.size(); ++i) {
    double v = 0.0;
    for (int a = 0; a < 3; ++a) {
      if (!cfg.axes.has(a)) continue;
      double mean = 0.0;
      for (std::size_t j = i + 1 - w; j <= i; ++j) mean += t[j].b[a];
      mean /= static_cast<double>(w);
      double ss = 0.0;
      for (std::size_t j = i + 1 - w; j <= i; ++j) ss += (t[j].b[a] - mean) * (t[j].b[a] - mean);
      v += ss / static_cast<double>(w - 1);
    }
    still[i] = v <= cfg.tau;
  }
  std::vector<Span> out;
  std::size_t i = 0;
  while (i < t.size()) {
    if (!still[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < t.size() && still[j + 1]) ++j;
    if (j - i + 1 >= static_cast<std::size_t>(cfg.min_dwell)) out.push_back({i, j});
    i = j + 1;
  }
  return out;
}

std::vector<Span> spans(const std::vector<Keystroke>& ks) {
  std::vector<Span> out;
  for (const auto& k : ks) out.push_back({k.start, k.end});
  return out;
}

Trace random_piecewise(Rng& rng, int pieces) {
  std::normal_distribution<double> noise(0.0, 0.5);
  std::uniform_real_distribution<double> level(-200, 200);
  std::uniform_int_distribution<int> len(3, 60);
  Trace t;
  double time = 0.0;
  for (int p = 0; p < pieces; ++p) {
    const Vec3 mu(level(rng), level(rng), level(rng));
    const int n = len(rng);
    for (int i = 0; i < n; ++i, time += 0.02) t.push_back({time, mu + Vec3(noise(rng), noise(rng), noise(rng))});
  }
  return t;
}

}  // namespace

TEST_SUITE("segment") {
  TEST_CASE("constant trace is one keystroke from w-1 to the end") {
    const Trace t = test::constant_trace(Vec3(4, 5, 6), 100);
    const auto ks = segment_stream(t);
    REQUIRE(ks.size() == 1);
    CHECK(ks[0].start == 4);
    CHECK(ks[0].end == 99);
    CHECK(ks[0].length() == 96);
    CHECK(ks[0].start_t() == doctest::Approx(0.08));
  }

  TEST_CASE("three clicks give three keystrokes in order") {
    Scenario s;
    s.env.noise_sigma = 0.2;
    Rng rng(1);
    const std::vector<PathPoint> path{{Vec2(5, 3), 1.5}, {Vec2(18, 8), 1.5}, {Vec2(30, 13), 1.5}};
    const LabeledTrace lt = synth_labeled_trace(s.board, s.env, s.magnet, path, SynthOptions{50.0, 0.5, 0.0}, rng);
    const SilenceStats st = calibrate_silence(s, rng);
    const auto ks = segment_stream(remove_silence(lt.samples, st));
    REQUIRE(ks.size() == 3);
    for (int i = 0; i < 3; ++i) {
      const auto& mid = lt.truth[(ks[static_cast<std::size_t>(i)].start + ks[static_cast<std::size_t>(i)].end) / 2];
      CHECK(mid.path_index == i);
      CHECK(mid.state == MotionTruth::kStationary);
    }
  }

  TEST_CASE("segments match a naive two-pass implementation") {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
      const Trace t = random_piecewise(rng, 12);
      SegmenterConfig cfg;
      cfg.tau = std::uniform_real_distribution<double>(0.5, 20.0)(rng);
      cfg.window = std::uniform_int_distribution<int>(2, 8)(rng);
      cfg.min_dwell = std::uniform_int_distribution<int>(1, 30)(rng);
      if (trial % 3 == 0) cfg.axes = Axes::xy();
      CHECK(spans(segment_stream(t, cfg)) == naive_segments(t, cfg));
    }
  }

  TEST_CASE("keystrokes are disjoint, sorted and separated") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      const auto ks = segment_stream(random_piecewise(rng, 15), SegmenterConfig{10.0, 5, 5, Axes::all()});
      for (std::size_t i = 1; i < ks.size(); ++i) CHECK(ks[i].start > ks[i - 1].end + 1);
      for (const auto& k : ks) CHECK(k.samples.size() == k.length());
    }
  }

  TEST_CASE("scaling the trace by c and tau by c squared keeps decisions") {
    Rng rng(4);
    for (double c : {2.0, 4.0, 0.5}) {
      for (int trial = 0; trial < 20; ++trial) {
        const Trace t = random_piecewise(rng, 10);
        Trace scaled = t;
        for (auto& x : scaled) x.b *= c;
        SegmenterConfig cfg;
        SegmenterConfig cfg_scaled = cfg;
        cfg_scaled.tau = cfg.tau * c * c;
        CHECK(spans(segment_stream(t, cfg)) == spans(segment_stream(scaled, cfg_scaled)));
        for (std::size_t i = 4; i < t.size(); i += 7) {
          CHECK(window_variance(scaled, i, 5, Axes::all()) ==
                doctest::Approx(c * c * window_variance(t, i, 5, Axes::all())).epsilon(1e-12));
        }
      }
    }
  }

  TEST_CASE("a vertical approach is only seen with the z axis") {
    Trace t;
    double time = 0.0;
    auto hold = [&](double z, int n) {
      for (int i = 0; i < n; ++i, time += 0.02) t.push_back({time, Vec3(10, -4, z)});
    };
    hold(50, 40);
    for (int i = 0; i < 10; ++i, time += 0.02) t.push_back({time, Vec3(10, -4, 50 + 6.0 * i)});
    hold(110, 40);
    SegmenterConfig with_z;
    SegmenterConfig without_z;
    without_z.axes = Axes::xy();
    CHECK(segment_stream(t, with_z).size() == 2);
    CHECK(segment_stream(t, without_z).size() == 1);
  }

  TEST_CASE("streaming in chunks equals batch segmentation") {
    Rng rng(5);
    const Trace t = random_piecewise(rng, 20);
    StreamSegmenter seg(SegmenterConfig{});
    std::vector<Keystroke> streamed;
    std::size_t max_pending = 0;
    for (const auto& s : t) {
      if (auto k = seg.push(s)) streamed.push_back(*k);
      if (auto p = seg.pending()) {
        CHECK(p->length() >= 20);
        max_pending = std::max(max_pending, p->length());
      }
    }
    if (auto k = seg.flush()) streamed.push_back(*k);
    CHECK(seg.samples_seen() == t.size());
    CHECK(spans(streamed) == spans(segment_stream(t)));
    CHECK(max_pending > 0);
  }

  TEST_CASE("central window takes the middle m samples") {
    Keystroke ks;
    ks.start = 10;
    ks.end = 39;
    for (int i = 0; i < 30; ++i) ks.samples.push_back({i * 1.0, Vec3::Zero()});
    const auto w = central_window(ks, 20);
    CHECK(w.size() == 20);
    CHECK(w.front().t == 5.0);
    CHECK(central_window(ks, 40).size() == 30);
  }

  TEST_CASE("invalid configurations are rejected") {
    CHECK_THROWS_AS(SegmenterConfig({0.0, 5, 20, Axes::all()}).validate(), DomainError);
    CHECK_THROWS_AS(SegmenterConfig({10.0, 1, 20, Axes::all()}).validate(), DomainError);
    CHECK_THROWS_AS(SegmenterConfig({10.0, 5, 0, Axes::all()}).validate(), DomainError);
    CHECK_THROWS_AS(SegmenterConfig({10.0, 5, 20, Axes(false, false, false)}).validate(), DomainError);
  }

  TEST_CASE("threshold sweep trades false positives for false negatives") {
    Scenario s;
    Rng rng(6);
    const SilenceStats st = calibrate_silence(s, rng);
    const auto clicks = make_click_sequence(calculator_layout(s.board), s.board, 60, 1.0, rng);
    const LabeledTrace corpus = synth_typing_trace(s, clicks, st, {}, rng);
    const auto sweep = run_tau_sweep(corpus, {1, 3, 10, 30, 100});
    for (std::size_t i = 1; i < sweep.size(); ++i) {
      CHECK(sweep[i].fp_rate() <= sweep[i - 1].fp_rate());
      CHECK(sweep[i].fn_rate() >= sweep[i - 1].fn_rate());
    }
    CHECK(sweep.front().fp_rate() > sweep.back().fp_rate());
    CHECK(sweep.back().fn_rate() > sweep.front().fn_rate());
  }
}
