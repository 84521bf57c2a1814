#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "magkey/errors.hpp"
#include "magkey/estimate.hpp"
#include "magkey/evalharness.hpp"
#include "magkey/fingerprint.hpp"
#include "magkey/io.hpp"
#include "magkey/keymap.hpp"
#include "magkey/offset.hpp"
#include "magkey/regen.hpp"
#include "magkey/segment.hpp"

namespace fs = std::filesystem;
using namespace magkey;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitPrecondition = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
};

Scenario load_scenario(const Globals& g) {
  Scenario s;
  if (!g.config.empty()) s = scenario_from_json(read_json_file(g.config));
  if (g.seed) s.seed = *g.seed;
  return s;
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text << std::flush;
  } else {
    write_file(out, text);
  }
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

Fingerprint load_fingerprint(const std::string& path) {
  return fingerprint_from_json(read_json_file(path));
}

Trace load_trace(const std::string& path) { return trace_from_csv(read_file(path)); }

// Session files refer to other files relative to their own directory.
std::string resolve(const std::string& session_path, const std::string& ref) {
  if (ref.empty()) return ref;
  const fs::path p(ref);
  if (p.is_absolute()) return ref;
  return (fs::path(session_path).parent_path() / p).string();
}

std::vector<Keystroke> keystrokes_for(const Trace& trace, const std::string& ks_path,
                                      const SegmenterConfig& cfg) {
  if (ks_path.empty()) return segment_stream(trace, cfg);
  std::vector<Keystroke> out;
  for (const auto& span : keystrokes_from_csv(read_file(ks_path))) {
    if (span.end < span.start || span.end >= trace.size()) {
      throw FormatError("keystroke span outside the trace");
    }
    Keystroke ks;
    ks.start = span.start;
    ks.end = span.end;
    ks.samples.assign(trace.begin() + static_cast<std::ptrdiff_t>(span.start),
                      trace.begin() + static_cast<std::ptrdiff_t>(span.end) + 1);
    out.push_back(std::move(ks));
  }
  return out;
}

struct EvalOptions {
  std::string fingerprint;
  std::string test = "centroids";
  std::string axes = "xyz";
  int k = 1;
  int m = 20;
  int reps = 10;
  int n_uniform = 1440;
  int threads = 0;
  std::optional<CellId> reference_cell;

  void add_to(CLI::App* app) {
    app->add_option("--fingerprint", fingerprint, "Fingerprint JSON (default: build a factory one)");
    app->add_option("--test", test, "Test set")->check(CLI::IsMember({"centroids", "uniform"}));
    app->add_option("--axes", axes, "Axes used for estimation");
    app->add_option("-k", k, "Spatial averaging k")->check(CLI::PositiveNumber);
    app->add_option("-m", m, "Samples per keystroke window")->check(CLI::PositiveNumber);
    app->add_option("--reps", reps, "Keystrokes per cell (centroid set)")->check(CLI::PositiveNumber);
    app->add_option("--n-uniform", n_uniform, "Keystrokes (uniform set)")->check(CLI::PositiveNumber);
    app->add_option("--threads", threads, "Worker threads, 0 = all cores");
    app->add_option("--reference-cell", reference_cell, "Detect polarity from a click on this cell");
  }

  EvalParams params() const {
    EvalParams p;
    p.k = k;
    p.m = m;
    p.axes = Axes::parse(axes);
    p.test = test == "uniform" ? TestSet::kUniform : TestSet::kCentroids;
    p.reps_per_cell = reps;
    p.n_uniform = n_uniform;
    p.threads = threads;
    p.reference_cell = reference_cell;
    return p;
  }

  EvalReport run(const Scenario& s) const {
    Rng rng(s.seed);
    const Fingerprint fp =
        fingerprint.empty() ? build_factory_fingerprint(s, rng) : load_fingerprint(fingerprint);
    return run_accuracy_eval(fp, s, params(), rng);
  }
};

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw UsageError("bad number '" + item + "' in list");
    }
  }
  if (out.empty()) throw UsageError("empty list");
  return out;
}

std::string ratio_label(double r) {
  std::ostringstream ss;
  ss << "x" << r;
  return ss.str();
}

std::pair<CellId, std::string> parse_anchor(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw UsageError("anchor must be CELL:TRACE.csv");
  try {
    return {std::stoi(text.substr(0, colon)), text.substr(colon + 1)};
  } catch (const std::logic_error&) {
    throw UsageError("bad anchor cell in '" + text + "'");
  }
}

Polarity polarity_from_reference(const Trace& raw, const SilenceStats& silence,
                                 const Fingerprint& fp, CellId cell) {
  const Trace clean = remove_silence(raw, silence);
  const auto keystrokes = segment_stream(clean);
  if (keystrokes.empty()) return detect_polarity(clean, fp, cell);
  const auto longest = std::max_element(keystrokes.begin(), keystrokes.end(),
                                        [](const auto& a, const auto& b) { return a.length() < b.length(); });
  return detect_polarity(longest->samples, fp, cell);
}

int run(int argc, char** argv) {
  CLI::App app{"MagBoard keystroke localization toolkit", "magkey"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "RNG seed (default: scenario seed)");
  app.add_option("--config", g.config, "Scenario JSON")->envname("MAGKEY_CONFIG");

  // simulate
  std::string sim_path, sim_out;
  double sim_silence = 0.0;
  auto* sim = app.add_subcommand("simulate", "Synthesize a raw sensor trace for a magnet path");
  sim->add_option("--path", sim_path, "Path JSON [{pos:[x,y]|null, dwell}]")->required();
  sim->add_option("--silence-prefix", sim_silence, "Seconds of magnet-absent lead-in")
      ->check(CLI::NonNegativeNumber);
  sim->add_option("-o,--out", sim_out, "Trace CSV");
  sim->callback([&] {
    const Scenario s = load_scenario(g);
    auto path = path_from_json(read_json_file(sim_path));
    if (sim_silence > 0.0) path.insert(path.begin(), PathPoint{std::nullopt, sim_silence});
    Rng rng(s.seed);
    const Trace trace = synth_trace(s.board, s.env, s.magnet, path,
                                    SynthOptions{s.rate_hz, s.transition_s, 0.0}, rng);
    emit(sim_out, trace_to_csv(trace));
  });

  // silence
  std::string sil_trace, sil_out;
  std::optional<double> sil_seconds;
  auto* sil = app.add_subcommand("silence", "Estimate silence statistics from a magnet-absent trace");
  sil->add_option("--trace", sil_trace, "Trace CSV")->required();
  sil->add_option("--seconds", sil_seconds, "Use only the first N seconds")->check(CLI::PositiveNumber);
  sil->add_option("-o,--out", sil_out, "Silence JSON");
  sil->callback([&] {
    Trace trace = load_trace(sil_trace);
    if (sil_seconds && !trace.empty()) {
      const double t_end = trace.front().t + *sil_seconds;
      trace.erase(std::find_if(trace.begin(), trace.end(), [&](const MagSample& x) { return x.t >= t_end; }),
                  trace.end());
    }
    emit(sil_out, dump(to_json(estimate_silence(trace))));
  });

  // fingerprint build
  auto* fpc = app.add_subcommand("fingerprint", "Fingerprint operations");
  fpc->require_subcommand(1);
  std::string fp_out;
  double fp_bin = 1.0;
  auto* fpb = fpc->add_subcommand("build", "Build a factory fingerprint by simulated collection");
  fpb->add_option("--bin-width", fp_bin, "Histogram bin width (µT)")->check(CLI::PositiveNumber);
  fpb->add_option("-o,--out", fp_out, "Fingerprint JSON");
  fpb->callback([&] {
    const Scenario s = load_scenario(g);
    Rng rng(s.seed);
    emit(fp_out, to_json(build_factory_fingerprint(s, rng, fp_bin)).dump() + "\n");
  });

  // regen
  auto* regen = app.add_subcommand("regen", "Fingerprint regeneration");
  regen->require_subcommand(1);
  std::string rf_fp, rf_silence, rf_out, rf_mode = "means";
  std::vector<std::string> rf_anchors;
  auto* rfit = regen->add_subcommand("fit", "Fit the affine map from two anchor recordings");
  rfit->add_option("--fingerprint", rf_fp, "Factory fingerprint JSON")->required();
  rfit->add_option("--anchor", rf_anchors, "CELL:TRACE.csv, given twice")->required()->expected(2);
  rfit->add_option("--silence", rf_silence, "Silence JSON for the anchor traces")->required();
  rfit->add_option("--mode", rf_mode, "Fit mode")->check(CLI::IsMember({"means", "quantile"}));
  rfit->add_option("-o,--out", rf_out, "Affine JSON");
  rfit->callback([&] {
    const Fingerprint fp = load_fingerprint(rf_fp);
    const SilenceStats silence = silence_from_json(read_json_file(rf_silence));
    std::array<AnchorWindow, 2> anchors;
    for (int i = 0; i < 2; ++i) {
      const auto [cell, path] = parse_anchor(rf_anchors[static_cast<std::size_t>(i)]);
      anchors[static_cast<std::size_t>(i)] = AnchorWindow{cell, remove_silence(load_trace(path), silence)};
    }
    AffineFitOptions opt;
    opt.mode = rf_mode == "quantile" ? AffineFitMode::kQuantileLeastSquares : AffineFitMode::kMeans;
    emit(rf_out, dump(to_json(fit_affine(anchors, fp, opt))));
  });
  std::string ra_fp, ra_affine, ra_out;
  auto* rapply = regen->add_subcommand("apply", "Regenerate a fingerprint through an affine map");
  rapply->add_option("--fingerprint", ra_fp, "Fingerprint JSON")->required();
  rapply->add_option("--affine", ra_affine, "Affine JSON")->required();
  rapply->add_option("-o,--out", ra_out, "Fingerprint JSON");
  rapply->callback([&] {
    const Fingerprint fp = load_fingerprint(ra_fp);
    emit(ra_out, to_json(regenerate(fp, affine_from_json(read_json_file(ra_affine)))).dump() + "\n");
  });

  // segment
  std::string seg_trace, seg_out, seg_axes = "xyz";
  SegmenterConfig seg_cfg;
  auto* seg = app.add_subcommand("segment", "Split a trace into keystrokes");
  seg->add_option("--trace", seg_trace, "Trace CSV")->required();
  seg->add_option("--tau", seg_cfg.tau, "Variance threshold (µT²)");
  seg->add_option("--window", seg_cfg.window, "Variance window (samples)");
  seg->add_option("--min-dwell", seg_cfg.min_dwell, "Minimum stationary samples");
  seg->add_option("--axes", seg_axes, "Axes in the variance statistic");
  seg->add_option("-o,--out", seg_out, "Keystroke CSV");
  seg->callback([&] {
    seg_cfg.axes = Axes::parse(seg_axes);
    emit(seg_out, keystrokes_to_csv(segment_stream(load_trace(seg_trace), seg_cfg)));
  });

  // estimate
  std::string est_trace, est_fp, est_session, est_silence, est_ks, est_out, est_axes = "xyz";
  std::string est_polarity;
  int est_k = 1, est_m = 20;
  bool est_keep_absent = false;
  auto* est = app.add_subcommand("estimate", "Estimate key cells for the keystrokes of a raw trace");
  est->add_option("--trace", est_trace, "Raw trace CSV")->required();
  est->add_option("--session", est_session, "Session JSON (silence, polarity, affine, fingerprint)");
  est->add_option("--fingerprint", est_fp, "Fingerprint JSON (overrides the session's)");
  est->add_option("--silence", est_silence, "Silence JSON (overrides the session's)");
  est->add_option("--polarity", est_polarity, "Override polarity")
      ->check(CLI::IsMember({"normal", "flipped"}));
  est->add_option("--keystrokes", est_ks, "Keystroke CSV (default: segment the trace)");
  est->add_option("-k", est_k, "Spatial averaging k")->check(CLI::PositiveNumber);
  est->add_option("-m", est_m, "Samples per keystroke window")->check(CLI::PositiveNumber);
  est->add_option("--axes", est_axes, "Axes used for estimation");
  est->add_flag("--keep-absent", est_keep_absent, "Also estimate windows with the magnet off the board");
  est->add_option("-o,--out", est_out, "JSON-lines output");
  est->callback([&] {
    SessionFile session;
    if (!est_session.empty()) {
      session = session_from_json(read_json_file(est_session));
      session.fingerprint_path = resolve(est_session, session.fingerprint_path);
    }
    if (!est_fp.empty()) session.fingerprint_path = est_fp;
    if (session.fingerprint_path.empty()) throw UsageError("estimate needs --fingerprint or --session");
    if (!est_silence.empty()) {
      session.silence = silence_from_json(read_json_file(est_silence));
    } else if (est_session.empty()) {
      throw UsageError("estimate needs --silence or --session");
    }
    if (!est_polarity.empty()) session.polarity = parse_polarity(est_polarity);
    Fingerprint fp = load_fingerprint(session.fingerprint_path);
    if (!session.affine.is_identity()) fp = regenerate(fp, session.affine);
    const Axes axes = Axes::parse(est_axes);

    const Trace clean =
        apply_polarity(remove_silence(load_trace(est_trace), session.silence), session.polarity);
    std::string lines;
    for (const auto& ks : keystrokes_for(clean, est_ks, SegmenterConfig{})) {
      const auto window = central_window(ks, static_cast<std::size_t>(est_m));
      if (!est_keep_absent && magnet_absent(window, fp)) continue;
      Estimate e = estimate_from_posterior(posterior(window, fp, axes), fp, est_k,
                                           static_cast<int>(window.size()));
      e.t_start = ks.start_t();
      e.t_end = ks.end_t();
      lines += to_json(e).dump() + "\n";
    }
    emit(est_out, lines);
  });

  // mapkeys
  std::string mk_est, mk_layout, mk_out;
  auto* mk = app.add_subcommand("mapkeys", "Map estimates onto application keys");
  mk->add_option("--estimates", mk_est, "Estimate JSON lines")->required();
  mk->add_option("--layout", mk_layout, "Layout JSON")->required();
  mk->add_option("-o,--out", mk_out, "Key event JSON lines");
  mk->callback([&] {
    const Scenario s = load_scenario(g);
    const KeyLayout layout = layout_from_json(read_json_file(mk_layout));
    std::istringstream in(read_file(mk_est));
    std::string line, lines;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      Json j;
      try {
        j = Json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("estimate line: ") + e.what());
      }
      const Estimate e = estimate_from_json(j, s.board);
      const auto ev = map_key(e, layout);
      Json out = {{"t_start", e.t_start}, {"t_end", e.t_end}, {"cell", e.cell}};
      out["key"] = ev ? Json(ev->key_id) : Json(nullptr);
      out["label"] = ev ? Json(ev->label) : Json(nullptr);
      lines += out.dump() + "\n";
    }
    emit(mk_out, lines);
  });

  // eval
  auto* ev = app.add_subcommand("eval", "Closed-loop evaluations");
  ev->require_subcommand(1);
  EvalOptions acc_opt;
  std::string acc_out;
  bool acc_samples = false;
  auto* acc = ev->add_subcommand("accuracy", "Localization accuracy report");
  acc_opt.add_to(acc);
  acc->add_flag("--samples", acc_samples, "Include per-keystroke samples");
  acc->add_option("-o,--out", acc_out, "Report JSON");
  acc->callback([&] { emit(acc_out, dump(to_json(acc_opt.run(load_scenario(g)), acc_samples))); });

  EvalOptions hm_opt;
  std::string hm_out;
  auto* hm = ev->add_subcommand("heatmap", "Per-cell mean error grid CSV");
  hm_opt.add_to(hm);
  hm->add_option("-o,--out", hm_out, "CSV");
  hm->callback([&] {
    const Scenario s = load_scenario(g);
    emit(hm_out, export_heatmap(hm_opt.run(s), s.board));
  });

  EvalOptions cdf_opt;
  std::string cdf_out;
  auto* cdf = ev->add_subcommand("cdf", "Error CDF CSV");
  cdf_opt.add_to(cdf);
  cdf->add_option("-o,--out", cdf_out, "CSV");
  cdf->callback([&] { emit(cdf_out, export_cdf(cdf_opt.run(load_scenario(g)))); });

  EvalOptions cr_opt;
  std::string cr_out, cr_ratios = "1,2,0.13";
  auto* cr = ev->add_subcommand("cross", "Train/test magnet table with regeneration");
  cr_opt.add_to(cr);
  cr->add_option("--ratios", cr_ratios, "Comma-separated moment ratios");
  cr->add_option("-o,--out", cr_out, "Table JSON");
  cr->callback([&] {
    if (!cr_opt.fingerprint.empty()) throw UsageError("eval cross builds its own fingerprints");
    const Scenario s = load_scenario(g);
    std::vector<Variant> variants;
    for (double r : parse_list(cr_ratios)) {
      MagnetSpec magnet = s.magnet;
      magnet.moment *= r;
      magnet.label = ratio_label(r);
      variants.push_back(Variant{magnet.label, magnet, s.env});
    }
    emit(cr_out, dump(to_json(run_cross_table(s, variants, default_anchor_cells(s.board), cr_opt.params()))));
  });

  CalculatorOptions calc_opt;
  std::string calc_fp, calc_layout, calc_out;
  auto* calc = ev->add_subcommand("calculator", "Typing session on a calculator layout");
  calc->add_option("--fingerprint", calc_fp, "Fingerprint JSON (default: build a factory one)");
  calc->add_option("--layout", calc_layout, "Layout JSON (default: built-in calculator)");
  calc->add_option("--clicks-per-key", calc_opt.clicks_per_key)->check(CLI::PositiveNumber);
  calc->add_option("--jitter", calc_opt.jitter_cm, "Click jitter around key centres (cm)");
  calc->add_option("--tau", calc_opt.segmenter.tau, "Segmenter threshold");
  calc->add_option("-k", calc_opt.k)->check(CLI::PositiveNumber);
  calc->add_option("-m", calc_opt.m)->check(CLI::PositiveNumber);
  calc->add_option("-o,--out", calc_out, "Result JSON");
  calc->callback([&] {
    const Scenario s = load_scenario(g);
    Rng rng(s.seed);
    const Fingerprint fp = calc_fp.empty() ? build_factory_fingerprint(s, rng) : load_fingerprint(calc_fp);
    const KeyLayout layout =
        calc_layout.empty() ? calculator_layout(s.board) : layout_from_json(read_json_file(calc_layout));
    const CalculatorResult r = run_calculator_case(fp, s, layout, calc_opt, rng);
    std::cout << r.n_correct << "/" << r.n_clicks << "\n";
    if (!calc_out.empty()) {
      write_file(calc_out, dump({{"clicks", r.n_clicks},
                                 {"correct", r.n_correct},
                                 {"keystrokes", r.n_keystrokes},
                                 {"missed", r.n_missed},
                                 {"spurious", r.n_spurious},
                                 {"accuracy", r.accuracy()},
                                 {"truth", r.truth},
                                 {"detected", r.detected}}));
    }
  });

  // layout
  auto* lay = app.add_subcommand("layout", "Key layouts");
  lay->require_subcommand(1);
  std::string lv_file;
  auto* lv = lay->add_subcommand("validate", "Check a layout; exit 4 on violations");
  lv->add_option("file", lv_file, "Layout JSON")->required();
  lv->callback([&] {
    const KeyLayout layout = layout_from_json(read_json_file(lv_file));
    const auto violations = validate_layout(layout);
    Json list = Json::array();
    for (const auto& v : violations) list.push_back(to_json(v));
    std::cout << dump({{"ok", violations.empty()}, {"violations", list}});
    if (!violations.empty()) throw DomainError(std::to_string(violations.size()) + " layout violation(s)");
  });
  std::string lc_out;
  auto* lc = lay->add_subcommand("calculator", "Write the built-in calculator layout");
  lc->add_option("-o,--out", lc_out, "Layout JSON");
  lc->callback([&] { emit(lc_out, dump(to_json(calculator_layout(load_scenario(g).board)))); });

  // session init
  auto* ses = app.add_subcommand("session", "Session files");
  ses->require_subcommand(1);
  std::string si_silence, si_fp, si_layout, si_affine, si_polarity, si_ref, si_out;
  std::optional<CellId> si_ref_cell;
  auto* si = ses->add_subcommand("init", "Write a session file");
  si->add_option("--silence", si_silence, "Silence JSON")->required();
  si->add_option("--fingerprint", si_fp, "Fingerprint JSON")->required();
  si->add_option("--layout", si_layout, "Layout JSON");
  si->add_option("--affine", si_affine, "Affine JSON");
  auto* pol_opt = si->add_option("--polarity", si_polarity, "Known polarity")
                      ->check(CLI::IsMember({"normal", "flipped"}));
  si->add_option("--reference", si_ref, "Raw trace of a reference click")->excludes(pol_opt);
  si->add_option("--reference-cell", si_ref_cell, "Cell clicked in the reference trace");
  si->add_option("-o,--out", si_out, "Session JSON");
  si->callback([&] {
    SessionFile session;
    session.silence = silence_from_json(read_json_file(si_silence));
    session.fingerprint_path = si_fp;
    session.layout_path = si_layout;
    if (!si_affine.empty()) session.affine = affine_from_json(read_json_file(si_affine));
    if (!si_polarity.empty()) session.polarity = parse_polarity(si_polarity);
    if (!si_ref.empty()) {
      Fingerprint fp = load_fingerprint(si_fp);
      if (!session.affine.is_identity()) fp = regenerate(fp, session.affine);
      CellId cell = 0;
      if (si_ref_cell) {
        cell = *si_ref_cell;
      } else {
        if (si_layout.empty()) throw UsageError("--reference needs --reference-cell or a layout");
        const KeyLayout layout = layout_from_json(read_json_file(si_layout));
        const Key* ref = layout.reference_key ? layout.find_key(*layout.reference_key) : nullptr;
        if (!ref || ref->cells.empty()) throw DomainError("layout has no reference key");
        cell = ref->cells.front();
      }
      session.polarity = polarity_from_reference(load_trace(si_ref), session.silence, fp, cell);
    }
    emit(si_out, dump(to_json(session)));
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << Json{{"error", "usage"}, {"message", e.what()}}.dump() << "\n";
    return kExitUsage;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  auto fail = [](const char* kind, const std::string& message, int code) {
    std::cerr << Json{{"error", kind}, {"message", message}}.dump() << "\n";
    return code;
  };
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    return fail("usage", e.what(), kExitUsage);
  } catch (const Error& e) {
    const bool data = e.kind() == ErrorKind::kFormat || e.kind() == ErrorKind::kNotFound;
    return fail(to_string(e.kind()), e.what(), data ? kExitData : kExitPrecondition);
  } catch (const nlohmann::json::exception& e) {
    return fail("format", e.what(), kExitData);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
}
