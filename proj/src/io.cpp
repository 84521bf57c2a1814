#include "magkey/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "magkey/errors.hpp"

namespace magkey {

namespace {

template <typename T>
void read_opt(const Json& j, const char* key, T& out) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("field '") + key + "': " + e.what());
  }
}

void read_vec3(const Json& j, const char* key, Vec3& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = vec3_from_json(j.at(key));
}

const Json& require(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
  return j.at(key);
}

template <typename T>
T get_as(const Json& j, const char* what) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad ") + what + ": " + e.what());
  }
}

void expect_object(const Json& j, const char* what) {
  if (!j.is_object()) throw FormatError(std::string(what) + " must be a JSON object");
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(std::string_view s, std::size_t line) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw FormatError("line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = line.find(sep, pos);
    out.push_back(line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

// Lines of a CSV body with the header (first non-empty line) removed.
std::vector<std::pair<std::size_t, std::string>> csv_rows(const std::string& text, const std::string& header) {
  std::vector<std::pair<std::size_t, std::string>> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_seen) {
      header_seen = true;
      if (line != header) throw FormatError("expected CSV header '" + header + "', got '" + line + "'");
      continue;
    }
    rows.emplace_back(n, line);
  }
  if (!header_seen) throw FormatError("empty CSV");
  return rows;
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw FormatError("write failed for " + path.string());
}

Json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Json to_json(const Vec3& v) { return Json::array({v[0], v[1], v[2]}); }

Vec3 vec3_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw FormatError("expected a 3-element array");
  Vec3 v;
  for (int i = 0; i < 3; ++i) v[i] = get_as<double>(j[static_cast<std::size_t>(i)], "vector component");
  return v;
}

Json to_json(const BoardSpec& b) {
  return {{"cell_size", b.cell_size}, {"rows", b.rows}, {"cols", b.cols},
          {"sensor_pos", to_json(b.sensor_pos)}, {"magnet_height", b.magnet_height}};
}

BoardSpec board_from_json(const Json& j, BoardSpec b) {
  expect_object(j, "board");
  read_opt(j, "cell_size", b.cell_size);
  read_opt(j, "rows", b.rows);
  read_opt(j, "cols", b.cols);
  read_vec3(j, "sensor_pos", b.sensor_pos);
  read_opt(j, "magnet_height", b.magnet_height);
  return b;
}

Json to_json(const EnvSpec& e) {
  Json soft = Json::array();
  for (int r = 0; r < 3; ++r) soft.push_back({e.soft_iron(r, 0), e.soft_iron(r, 1), e.soft_iron(r, 2)});
  return {{"earth_field", to_json(e.earth_field)},
          {"background_field", to_json(e.background_field)},
          {"drift_amplitude", to_json(e.drift_amplitude)},
          {"drift_period_s", e.drift_period_s},
          {"noise_sigma", e.noise_sigma},
          {"rotation", to_json(e.rotation)},
          {"hard_iron", to_json(e.hard_iron)},
          {"soft_iron", soft}};
}

EnvSpec env_from_json(const Json& j, EnvSpec e) {
  expect_object(j, "env");
  read_vec3(j, "earth_field", e.earth_field);
  read_vec3(j, "background_field", e.background_field);
  read_vec3(j, "drift_amplitude", e.drift_amplitude);
  read_opt(j, "drift_period_s", e.drift_period_s);
  read_opt(j, "noise_sigma", e.noise_sigma);
  read_vec3(j, "rotation", e.rotation);
  read_vec3(j, "hard_iron", e.hard_iron);
  if (j.contains("soft_iron") && !j.at("soft_iron").is_null()) {
    const Json& s = j.at("soft_iron");
    if (!s.is_array() || s.size() != 3) throw FormatError("soft_iron must be a 3x3 array");
    for (int r = 0; r < 3; ++r) e.soft_iron.row(r) = vec3_from_json(s[static_cast<std::size_t>(r)]).transpose();
  }
  return e;
}

Json to_json(const MagnetSpec& m) {
  return {{"moment", to_json(m.moment)}, {"polarity", m.polarity}, {"label", m.label}};
}

MagnetSpec magnet_from_json(const Json& j, MagnetSpec m) {
  expect_object(j, "magnet");
  read_vec3(j, "moment", m.moment);
  read_opt(j, "polarity", m.polarity);
  read_opt(j, "label", m.label);
  return m;
}

Json to_json(const Scenario& s) {
  return {{"board", to_json(s.board)},
          {"env", to_json(s.env)},
          {"magnet", to_json(s.magnet)},
          {"rate_hz", s.rate_hz},
          {"silence_s", s.silence_s},
          {"train_s", s.train_s},
          {"transition_s", s.transition_s},
          {"train_centroid_fraction", s.train_centroid_fraction},
          {"train_margin", s.train_margin},
          {"seed", s.seed}};
}

Scenario scenario_from_json(const Json& j) {
  expect_object(j, "scenario");
  Scenario s;
  if (j.contains("board")) s.board = board_from_json(j.at("board"));
  if (j.contains("env")) s.env = env_from_json(j.at("env"));
  if (j.contains("magnet")) s.magnet = magnet_from_json(j.at("magnet"));
  read_opt(j, "rate_hz", s.rate_hz);
  read_opt(j, "silence_s", s.silence_s);
  read_opt(j, "train_s", s.train_s);
  read_opt(j, "transition_s", s.transition_s);
  read_opt(j, "train_centroid_fraction", s.train_centroid_fraction);
  read_opt(j, "train_margin", s.train_margin);
  read_opt(j, "seed", s.seed);
  return s;
}

Json path_to_json(const std::vector<PathPoint>& path) {
  Json out = Json::array();
  for (const auto& p : path)
    out.push_back({{"pos", p.position ? Json::array({p.position->x(), p.position->y()}) : Json(nullptr)},
                   {"dwell", p.dwell_s}});
  return out;
}

std::vector<PathPoint> path_from_json(const Json& j) {
  if (!j.is_array()) throw FormatError("path must be an array");
  std::vector<PathPoint> out;
  for (const auto& p : j) {
    expect_object(p, "path point");
    PathPoint pp;
    pp.dwell_s = get_as<double>(require(p, "dwell"), "dwell");
    const Json& pos = require(p, "pos");
    if (!pos.is_null()) {
      if (!pos.is_array() || pos.size() != 2) throw FormatError("pos must be [x, y] or null");
      pp.position = Vec2(get_as<double>(pos[0], "pos"), get_as<double>(pos[1], "pos"));
    }
    out.push_back(pp);
  }
  return out;
}

Json to_json(const SilenceStats& s) {
  return {{"mean", to_json(s.mean)}, {"var", to_json(s.var)}, {"n", s.n_samples}};
}

SilenceStats silence_from_json(const Json& j) {
  SilenceStats s;
  s.mean = vec3_from_json(require(j, "mean"));
  s.var = vec3_from_json(require(j, "var"));
  s.n_samples = get_as<std::size_t>(require(j, "n"), "n");
  if (s.n_samples < kMinSilenceSamples) throw InsufficientDataError("silence stats with too few samples");
  if ((s.var.array() < 0.0).any()) throw FormatError("negative silence variance");
  return s;
}

Json to_json(const AffineMap& m) { return {{"a", m.gain}, {"b", m.offset}}; }

AffineMap affine_from_json(const Json& j) {
  AffineMap m;
  m.gain = get_as<std::array<double, 3>>(require(j, "a"), "gain");
  m.offset = get_as<std::array<double, 3>>(require(j, "b"), "offset");
  return m;
}

Json to_json(const Fingerprint& fp) {
  Json cells = Json::array();
  for (CellId c = 0; c < fp.cell_count(); ++c) {
    const CellFingerprint& cf = fp.cell(c);
    Json axes = Json::array();
    for (const auto& h : cf.axes) axes.push_back({{"edges_offset", h.edges_offset}, {"counts", h.counts}});
    cells.push_back({{"id", c}, {"n", cf.axes[0].total}, {"center", to_json(cf.center)}, {"axes", axes}});
  }
  const auto& meta = fp.meta();
  return {{"fpv", 1},
          {"board", to_json(fp.board())},
          {"bin_width", fp.bin_width()},
          {"meta",
           {{"magnet_label", meta.magnet_label},
            {"device_label", meta.device_label},
            {"build_timestamp", meta.build_timestamp},
            {"regenerated", meta.regenerated}}},
          {"transform", to_json(fp.transform())},
          {"cells", cells}};
}

Fingerprint fingerprint_from_json(const Json& j) {
  expect_object(j, "fingerprint");
  if (get_as<int>(require(j, "fpv"), "fpv") != 1) throw FormatError("unsupported fingerprint version");
  const BoardSpec board = board_from_json(require(j, "board"));
  board.validate();
  const double bin_width = get_as<double>(require(j, "bin_width"), "bin_width");
  FingerprintMeta meta;
  if (j.contains("meta")) {
    const Json& m = j.at("meta");
    read_opt(m, "magnet_label", meta.magnet_label);
    read_opt(m, "device_label", meta.device_label);
    read_opt(m, "build_timestamp", meta.build_timestamp);
    read_opt(m, "regenerated", meta.regenerated);
  }
  const AffineMap transform = j.contains("transform") ? affine_from_json(j.at("transform")) : AffineMap{};
  const Json& jc = require(j, "cells");
  if (!jc.is_array() || static_cast<int>(jc.size()) != board.cell_count())
    throw IncompleteFingerprintError("fingerprint file cell count does not match board");
  std::vector<CellFingerprint> cells(jc.size());
  for (std::size_t i = 0; i < jc.size(); ++i) {
    const Json& c = jc[i];
    if (get_as<std::size_t>(require(c, "id"), "cell id") != i) throw FormatError("cells must be listed in id order");
    cells[i].center = vec3_from_json(require(c, "center"));
    const Json& axes = require(c, "axes");
    if (!axes.is_array() || axes.size() != 3) throw FormatError("each cell needs three axis histograms");
    for (std::size_t a = 0; a < 3; ++a) {
      AxisHistogram& h = cells[i].axes[a];
      h.edges_offset = get_as<std::int64_t>(require(axes[a], "edges_offset"), "edges_offset");
      h.counts = get_as<std::vector<std::uint32_t>>(require(axes[a], "counts"), "counts");
      h.total = 0;
      for (auto n : h.counts) h.total += n;
    }
  }
  return Fingerprint(board, bin_width, std::move(cells), transform, meta);
}

Json to_json(const KeyLayout& layout) {
  Json keys = Json::array();
  for (const auto& k : layout.keys) keys.push_back({{"id", k.id}, {"label", k.label}, {"cells", k.cells}});
  return {{"klv", 1},
          {"id", layout.id},
          {"board", {{"rows", layout.rows}, {"cols", layout.cols}, {"cell_size", layout.cell_size}}},
          {"keys", keys},
          {"reference_key", layout.reference_key ? Json(*layout.reference_key) : Json(nullptr)}};
}

KeyLayout layout_from_json(const Json& j) {
  expect_object(j, "layout");
  if (j.contains("klv") && get_as<int>(j.at("klv"), "klv") != 1) throw FormatError("unsupported layout version");
  KeyLayout layout;
  layout.id = get_as<std::string>(require(j, "id"), "layout id");
  const Json& b = require(j, "board");
  expect_object(b, "board");
  layout.rows = get_as<int>(require(b, "rows"), "rows");
  layout.cols = get_as<int>(require(b, "cols"), "cols");
  layout.cell_size = get_as<double>(require(b, "cell_size"), "cell_size");
  const Json& keys = require(j, "keys");
  if (!keys.is_array()) throw FormatError("keys must be an array");
  for (const auto& k : keys) {
    Key key;
    key.id = get_as<std::string>(require(k, "id"), "key id");
    key.label = k.contains("label") ? get_as<std::string>(k.at("label"), "label") : key.id;
    key.cells = get_as<std::vector<CellId>>(require(k, "cells"), "cells");
    layout.keys.push_back(std::move(key));
  }
  if (j.contains("reference_key") && !j.at("reference_key").is_null())
    layout.reference_key = get_as<std::string>(j.at("reference_key"), "reference_key");
  return layout;
}

Json to_json(const Violation& v) {
  Json out = {{"kind", to_string(v.kind)}, {"message", v.message}, {"keys", v.keys}};
  out["cell"] = v.cell ? Json(*v.cell) : Json(nullptr);
  return out;
}

Json to_json(const Estimate& est) {
  Json top = Json::array();
  for (const auto& [cell, p] : est.top) top.push_back({{"cell", cell}, {"p", p}});
  return {{"t_start", est.t_start}, {"t_end", est.t_end}, {"mode", to_string(est.mode)}, {"cell", est.cell},
          {"pos", {est.position.x(), est.position.y()}}, {"k", est.k}, {"m", est.m}, {"top", top}};
}

Estimate estimate_from_json(const Json& j, const BoardSpec& board) {
  expect_object(j, "estimate");
  Estimate est;
  est.board = board;
  const auto mode = get_as<std::string>(require(j, "mode"), "mode");
  if (mode == "discrete") {
    est.mode = EstimateMode::kDiscrete;
  } else if (mode == "continuous") {
    est.mode = EstimateMode::kContinuous;
  } else {
    throw FormatError("unknown estimate mode '" + mode + "'");
  }
  est.cell = get_as<CellId>(require(j, "cell"), "cell");
  const auto pos = get_as<std::array<double, 2>>(require(j, "pos"), "pos");
  est.position = Vec2(pos[0], pos[1]);
  read_opt(j, "t_start", est.t_start);
  read_opt(j, "t_end", est.t_end);
  read_opt(j, "k", est.k);
  read_opt(j, "m", est.m);
  if (j.contains("top")) {
    for (const auto& e : require(j, "top")) {
      est.top.emplace_back(get_as<CellId>(require(e, "cell"), "top cell"),
                           get_as<double>(require(e, "p"), "top p"));
    }
  }
  return est;
}

namespace {

Json stats_json(const ErrorStats& s) {
  return {{"n", s.n}, {"mean", s.mean}, {"median", s.median}, {"p75", s.p75}, {"max", s.max}};
}

}  // namespace

Json to_json(const EvalReport& r, bool include_samples) {
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(r.config_hash));
  Json per_cell = Json::array();
  for (std::size_t c = 0; c < r.per_cell.size(); ++c) {
    Json s = stats_json(r.per_cell[c]);
    s["cell"] = c;
    per_cell.push_back(s);
  }
  Json curves = Json::object();
  for (const auto& [name, pts] : r.curves) {
    Json arr = Json::array();
    for (const auto& [x, y] : pts) arr.push_back({x, y});
    curves[name] = arr;
  }
  Json out = {{"config_hash", hash}, {"label", r.label}, {"accuracy", r.accuracy},
              {"errors_cm", stats_json(r.overall)}, {"per_cell", per_cell}, {"curves", curves}};
  if (r.polarity) out["polarity"] = to_string(*r.polarity);
  if (include_samples) {
    Json samples = Json::array();
    for (std::size_t i = 0; i < r.errors.size(); ++i)
      samples.push_back({{"true_cell", r.true_cells[i]},
                         {"cell", r.estimated_cells[i]},
                         {"true_pos", {r.true_positions[i].x(), r.true_positions[i].y()}},
                         {"pos", {r.estimated_positions[i].x(), r.estimated_positions[i].y()}},
                         {"error_cm", r.errors[i]}});
    out["samples"] = samples;
  }
  return out;
}

Json to_json(const CrossTable& t) {
  Json entries = Json::array();
  for (const auto& e : t.entries) {
    Json j = {{"train", e.train}, {"test", e.test}, {"ok", e.ok}};
    if (e.ok) {
      j["map"] = to_json(e.map);
      j["accuracy"] = e.report.accuracy;
      j["errors_cm"] = stats_json(e.report.overall);
    } else {
      j["error"] = e.error;
    }
    entries.push_back(j);
  }
  return {{"labels", t.labels}, {"entries", entries}};
}

Json to_json(const SessionFile& s) {
  return {{"sv", 1},
          {"silence", to_json(s.silence)},
          {"polarity", to_string(s.polarity)},
          {"affine", to_json(s.affine)},
          {"fingerprint", s.fingerprint_path},
          {"layout", s.layout_path}};
}

SessionFile session_from_json(const Json& j) {
  expect_object(j, "session");
  if (get_as<int>(require(j, "sv"), "sv") != 1) throw FormatError("unsupported session version");
  SessionFile s;
  s.silence = silence_from_json(require(j, "silence"));
  s.polarity = parse_polarity(get_as<std::string>(require(j, "polarity"), "polarity"));
  s.affine = j.contains("affine") ? affine_from_json(j.at("affine")) : AffineMap{};
  s.affine.validate();
  s.fingerprint_path = get_as<std::string>(require(j, "fingerprint"), "fingerprint");
  read_opt(j, "layout", s.layout_path);
  return s;
}

std::string trace_to_csv(const Trace& trace) {
  std::string out = "t,bx,by,bz\n";
  for (const auto& s : trace) {
    out += format_double(s.t);
    for (int a = 0; a < 3; ++a) out += ',' + format_double(s.b[a]);
    out += '\n';
  }
  return out;
}

Trace trace_from_csv(const std::string& text) {
  Trace out;
  for (const auto& [n, line] : csv_rows(text, "t,bx,by,bz")) {
    const auto f = split(line, ',');
    if (f.size() != 4) throw FormatError("line " + std::to_string(n) + ": expected 4 fields");
    MagSample s;
    s.t = parse_double(f[0], n);
    for (int a = 0; a < 3; ++a) s.b[a] = parse_double(f[static_cast<std::size_t>(a) + 1], n);
    if (!std::isfinite(s.t) || !s.b.allFinite()) throw FormatError("line " + std::to_string(n) + ": non-finite value");
    if (!out.empty() && s.t < out.back().t) throw FormatError("line " + std::to_string(n) + ": time goes backwards");
    out.push_back(s);
  }
  return out;
}

std::string keystrokes_to_csv(const std::vector<Keystroke>& keystrokes) {
  std::string out = "start_idx,end_idx,start_t,end_t\n";
  for (const auto& k : keystrokes)
    out += std::to_string(k.start) + ',' + std::to_string(k.end) + ',' + format_double(k.start_t()) + ',' +
           format_double(k.end_t()) + '\n';
  return out;
}

std::vector<KeystrokeSpan> keystrokes_from_csv(const std::string& text) {
  std::vector<KeystrokeSpan> out;
  for (const auto& [n, line] : csv_rows(text, "start_idx,end_idx,start_t,end_t")) {
    const auto f = split(line, ',');
    if (f.size() != 4) throw FormatError("line " + std::to_string(n) + ": expected 4 fields");
    const double lo = parse_double(f[0], n), hi = parse_double(f[1], n);
    if (lo < 0 || hi < lo || lo != std::floor(lo) || hi != std::floor(hi))
      throw FormatError("line " + std::to_string(n) + ": bad index range");
    out.push_back({static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)});
  }
  return out;
}

}  // namespace magkey
