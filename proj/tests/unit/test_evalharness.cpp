#include <cmath>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "magkey/errors.hpp"
#include "magkey/evalharness.hpp"
#include "magkey/io.hpp"
#include "magkey/keymap.hpp"

using namespace magkey;

namespace {

const Fingerprint& nominal() {
  static const Fingerprint fp = [] {
    Scenario s;
    Rng rng(61);
    return build_factory_fingerprint(s, rng);
  }();
  return fp;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

// Top-left cell of every calculator key: 2 cm keys with a free cell between them.
KeyLayout shrunk_calculator(const BoardSpec& b) {
  KeyLayout l = calculator_layout(b);
  for (auto& k : l.keys) {
    CellId first = k.cells.front();
    for (CellId c : k.cells) first = std::min(first, c);
    k.cells = {first};
  }
  return l;
}

}  // namespace

TEST_SUITE("evalharness") {
  TEST_CASE("noiseless centroid tests are perfect") {
    const Scenario s = test::quiet_scenario();
    Rng rng(1);
    const Fingerprint fp = build_factory_fingerprint(s, rng);
    EvalParams p;
    p.reps_per_cell = 2;
    const EvalReport r = run_accuracy_eval(fp, s, p, rng);
    CHECK(r.accuracy == 1.0);
    CHECK(r.overall.n == 288);
    CHECK(r.overall.max == 0.0);
  }

  TEST_CASE("reports are reproducible regardless of thread count") {
    Scenario s;
    EvalParams p;
    p.test = TestSet::kUniform;
    p.n_uniform = 300;
    p.k = 2;
    p.threads = 1;
    Rng a(7), b(7);
    const EvalReport r1 = run_accuracy_eval(nominal(), s, p, a);
    p.threads = 4;
    const EvalReport r2 = run_accuracy_eval(nominal(), s, p, b);
    CHECK(to_json(r1, true).dump() == to_json(r2, true).dump());
    CHECK(r1.config_hash == config_hash(s));
  }

  TEST_CASE("config hash follows the scenario") {
    Scenario a, b;
    CHECK(config_hash(a) == config_hash(b));
    b.env.noise_sigma = 0.6;
    CHECK(config_hash(a) != config_hash(b));
    b = a;
    b.seed = 2;
    CHECK(config_hash(a) != config_hash(b));
  }

  TEST_CASE("statistics are ordered and errors non-negative") {
    Scenario s;
    s.env.noise_sigma = 4.0;
    EvalParams p;
    p.reps_per_cell = 3;
    Rng rng(2);
    const EvalReport r = run_accuracy_eval(nominal(), s, p, rng);
    CHECK(r.accuracy >= 0.0);
    CHECK(r.accuracy <= 1.0);
    CHECK(r.overall.median <= r.overall.p75);
    CHECK(r.overall.p75 <= r.overall.max);
    for (const auto& c : r.per_cell) {
      if (c.n == 0) continue;
      CHECK(c.median <= c.p75);
      CHECK(c.p75 <= c.max);
    }
    for (std::size_t i = 0; i < r.errors.size(); ++i) {
      CHECK(r.errors[i] >= 0.0);
      // Centroid-to-centroid distances: squared error in cell units is an integer.
      const double units = r.errors[i] * r.errors[i] / (s.board.cell_size * s.board.cell_size);
      CHECK(std::abs(units - std::round(units)) < 1e-9);
    }
  }

  TEST_CASE("error summary of a known sample") {
    const ErrorStats st = summarize_errors({4, 1, 3, 2});
    CHECK(st.n == 4);
    CHECK(st.mean == doctest::Approx(2.5));
    CHECK(st.median == doctest::Approx(2.5));
    CHECK(st.max == 4);
    CHECK(st.p75 >= st.median);
    CHECK(summarize_errors({}).n == 0);
  }

  TEST_CASE("longer windows never lose accuracy") {
    Scenario s;
    s.env.noise_sigma = 3.0;
    EvalParams p;
    p.test = TestSet::kUniform;
    p.n_uniform = 1440;
    double prev = 0.0;
    for (int m : {1, 5, 20}) {
      p.m = m;
      Rng rng(3);
      const double acc = run_accuracy_eval(nominal(), s, p, rng).accuracy;
      CHECK(acc >= prev);
      prev = acc;
    }
  }

  TEST_CASE("k=2 beats k=1 on the continuous set") {
    Scenario s;
    EvalParams p;
    p.test = TestSet::kUniform;
    p.n_uniform = 600;
    Rng a(4), b(4);
    p.k = 1;
    const double k1 = run_accuracy_eval(nominal(), s, p, a).overall.median;
    p.k = 2;
    const double k2 = run_accuracy_eval(nominal(), s, p, b).overall.median;
    CHECK(k2 < k1);
    CHECK(k2 < 1.0);
  }

  TEST_CASE("heatmap grid has the board shape and near cells do better") {
    Scenario s;
    s.env.noise_sigma = 15.0;
    EvalParams p;
    p.reps_per_cell = 10;
    Rng rng(5);
    const EvalReport r = run_accuracy_eval(nominal(), s, p, rng);
    const auto rows = parse_csv(export_heatmap(r, s.board));
    REQUIRE(rows.size() == 9);
    CHECK(rows[0].front() == "row");
    CHECK(rows[0].size() == 19);
    double near = 0.0, far = 0.0;
    for (int row = 1; row <= 8; ++row) {
      REQUIRE(rows[static_cast<std::size_t>(row)].size() == 19);
      double sum = 0.0;
      for (int c = 1; c <= 18; ++c) {
        const std::string& v = rows[static_cast<std::size_t>(row)][static_cast<std::size_t>(c)];
        if (!v.empty()) sum += std::stod(v);
      }
      if (row <= 2) near += sum;
      if (row >= 7) far += sum;
    }
    CHECK(near < far);
    CHECK_THROWS_AS(export_heatmap(r, BoardSpec{2.0, 4, 4}), DomainError);
  }

  TEST_CASE("cdf ends at the maximum error") {
    Scenario s;
    EvalParams p;
    p.test = TestSet::kUniform;
    p.n_uniform = 500;
    p.k = 2;
    Rng rng(6);
    const EvalReport r = run_accuracy_eval(nominal(), s, p, rng);
    const auto rows = parse_csv(export_cdf(r));
    REQUIRE(rows.size() == 501);
    CHECK(rows[0][0] == "error_cm");
    double prev_e = -1, prev_f = 0;
    double median = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const double e = std::stod(rows[i][0]), f = std::stod(rows[i][1]);
      CHECK(e >= prev_e);
      CHECK(f > prev_f);
      if (prev_f < 0.5 && f >= 0.5) median = e;
      prev_e = e;
      prev_f = f;
    }
    CHECK(prev_e == doctest::Approx(r.overall.max).epsilon(1e-9));
    CHECK(prev_f == doctest::Approx(1.0));
    CHECK(median < 1.0);
  }

  TEST_CASE("density sweep accuracy does not drop with larger cells") {
    Scenario s;
    s.env.noise_sigma = 3.0;
    EvalParams p;
    p.reps_per_cell = 5;
    const EvalReport r = run_density_sweep(s, {2.0, 4.0, 6.0}, p);
    const auto& curve = r.curves.at("accuracy");
    REQUIRE(curve.size() == 3);
    CHECK(curve[1].second >= curve[0].second);
    CHECK(curve[2].second >= curve[1].second);
  }

  TEST_CASE("cross table diagonal has zero median error") {
    Scenario s;
    std::vector<Variant> variants;
    for (double ratio : {1.0, 2.0, 0.13}) {
      MagnetSpec m = s.magnet;
      m.moment *= ratio;
      variants.push_back({"x" + std::to_string(ratio), m, s.env});
    }
    EvalParams p;
    p.reps_per_cell = 2;
    const CrossTable t = run_cross_table(s, variants, default_anchor_cells(s.board), p);
    REQUIRE(t.entries.size() == 9);
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& e = t.entries[i * 3 + i];
      REQUIRE(e.ok);
      CHECK(e.report.overall.median == 0.0);
    }
    for (const auto& e : t.entries) {
      REQUIRE(e.ok);
      CHECK(std::isfinite(e.report.overall.mean));
    }
    CHECK_THROWS_AS(run_cross_table(s, {variants[0]}, default_anchor_cells(s.board), p), DomainError);
  }

  TEST_CASE("click sequences are balanced, on-key and never repeat a key") {
    const BoardSpec b;
    const KeyLayout calc = calculator_layout(b);
    Rng rng(7);
    const auto clicks = make_click_sequence(calc, b, 320, 1.0, rng);
    REQUIRE(clicks.size() == 320);
    std::map<std::string, int> count;
    for (std::size_t i = 0; i < clicks.size(); ++i) {
      ++count[clicks[i].key_id];
      const auto cell = b.cell_at(clicks[i].position);
      REQUIRE(cell);
      const Key* k = calc.key_for_cell(*cell);
      REQUIRE(k);
      CHECK(k->id == clicks[i].key_id);
      if (i > 0) CHECK(clicks[i].key_id != clicks[i - 1].key_id);
    }
    CHECK(count.size() == 16);
    for (const auto& [id, n] : count) CHECK(n == 20);
  }

  TEST_CASE("noiseless calculator session is perfect") {
    const Scenario s = test::quiet_scenario();
    Rng rng(8);
    const Fingerprint fp = build_factory_fingerprint(s, rng);
    const CalculatorResult r = run_calculator_case(fp, s, calculator_layout(s.board), {}, rng);
    CHECK(r.n_clicks == 320);
    CHECK(r.n_correct == 320);
    CHECK(r.n_missed == 0);
  }

  TEST_CASE("2 cm calculator keys stay above 91 percent") {
    const Scenario s;
    Rng rng(9);
    CalculatorOptions opt;
    opt.jitter_cm = 0.5;  // a quarter of the key width, as for 4 cm keys
    const CalculatorResult r = run_calculator_case(nominal(), s, shrunk_calculator(s.board), opt, rng);
    CHECK(r.n_clicks == 320);
    CHECK(r.accuracy() >= 0.91);
  }

  TEST_CASE("mismatched grids are rejected") {
    Scenario s;
    s.board.cols = 12;
    EvalParams p;
    Rng rng(10);
    CHECK_THROWS_AS(run_accuracy_eval(nominal(), s, p, rng), DomainError);
  }
}
