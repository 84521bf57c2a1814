#include "magkey/service.hpp"

#include <algorithm>
#include <regex>
#include <sstream>

#include <httplib.h>

#include "magkey/errors.hpp"

namespace magkey {

namespace {

constexpr int kEventSnapshotCells = 5;

bool valid_id(const std::string& id) {
  static const std::regex re("[A-Za-z0-9_-][A-Za-z0-9_.-]{0,63}");
  return std::regex_match(id, re);
}

Json parse_body(const std::string& body) {
  if (body.empty()) return Json::object();
  try {
    Json j = Json::parse(body);
    if (!j.is_object()) throw FormatError("request body must be a JSON object");
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("malformed JSON: ") + e.what());
  }
}

HttpResponse error_response(int status, const std::string& kind, const std::string& message) {
  return {status, {{"error", kind}, {"message", message}}};
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> out;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '/'))
    if (!part.empty()) out.push_back(part);
  return out;
}

std::chrono::steady_clock::rep now_ticks() { return std::chrono::steady_clock::now().time_since_epoch().count(); }

}  // namespace

LayoutStore::LayoutStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path LayoutStore::file_for(const std::string& id) const { return dir_ / (id + ".json"); }

std::vector<std::string> LayoutStore::ids() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir_))
    if (entry.path().extension() == ".json") out.push_back(entry.path().stem().string());
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<KeyLayout> LayoutStore::get(const std::string& id) const {
  std::shared_lock lock(mutex_);
  if (!std::filesystem::exists(file_for(id))) return std::nullopt;
  return layout_from_json(read_json_file(file_for(id)));
}

bool LayoutStore::exists(const std::string& id) const {
  std::shared_lock lock(mutex_);
  return std::filesystem::exists(file_for(id));
}

void LayoutStore::put(const KeyLayout& layout) {
  std::unique_lock lock(mutex_);
  const auto tmp = dir_ / (layout.id + ".json.tmp");
  write_file(tmp, to_json(layout).dump(2) + "\n");
  std::filesystem::rename(tmp, file_for(layout.id));
}

bool LayoutStore::remove(const std::string& id) {
  std::unique_lock lock(mutex_);
  return std::filesystem::remove(file_for(id));
}

LiveSession::LiveSession(std::string id, Scenario scenario, std::shared_ptr<const Fingerprint> factory,
                         std::optional<KeyLayout> layout)
    : id_(std::move(id)),
      scenario_(std::move(scenario)),
      factory_(factory),
      fp_(std::move(factory)),
      layout_(std::move(layout)),
      rng_(scenario_.seed),
      segmenter_(SegmenterConfig{}),
      last_used_(now_ticks()) {
  silence_ = calibrate_silence(scenario_, rng_);
  t_ = scenario_.silence_s;
}

std::chrono::steady_clock::time_point LiveSession::last_used() const {
  return std::chrono::steady_clock::time_point(std::chrono::steady_clock::duration(last_used_.load()));
}

void LiveSession::touch() { last_used_ = now_ticks(); }

Trace LiveSession::condition(const Trace& raw) const {
  return apply_polarity(remove_silence(raw, silence_), polarity_);
}

int LiveSession::move_magnet(const std::optional<Vec2>& position, double dwell_s) {
  std::lock_guard write(write_mutex_);
  touch();
  if (position && !scenario_.board.contains(*position)) throw DomainError("magnet position outside board");
  if (!(dwell_s > 0.0) || dwell_s > 600.0) throw DomainError("dwell_s must be in (0, 600]");
  const double dt = 1.0 / scenario_.rate_hz;
  SynthOptions opt{scenario_.rate_hz, scenario_.transition_s, t_ - dt};
  Trace raw = synth_trace(scenario_.board, scenario_.env, scenario_.magnet, {{magnet_, dt}, {position, dwell_s}}, opt, rng_);
  raw.erase(raw.begin());
  {
    std::unique_lock lock(read_mutex_);
    magnet_ = position;
    t_ = raw.back().t + dt;
  }
  return ingest(raw);
}

int LiveSession::ingest(const Trace& raw) {
  const std::size_t before = events_.size();
  for (const auto& s : condition(raw)) {
    if (auto ks = segmenter_.push(s)) {
      if (announced_start_ != ks->start) emit(*ks);
      announced_start_.reset();
    }
  }
  if (auto ks = segmenter_.pending(); ks && announced_start_ != ks->start) {
    emit(*ks);
    announced_start_ = ks->start;
  }
  return static_cast<int>(events_.size() - before);
}

void LiveSession::emit(const Keystroke& ks) {
  const auto window = central_window(ks, 20);
  if (magnet_absent(window, *fp_)) return;
  const Posterior post = posterior(window, *fp_);
  ServiceEvent ev;
  ev.estimate = estimate_from_posterior(post, *fp_, 1, static_cast<int>(window.size()));
  ev.estimate.t_start = ev.t_start = ks.start_t();
  ev.estimate.t_end = ev.t_end = ks.end_t();
  for (int i = 0; i < std::min(kEventSnapshotCells, fp_->cell_count()); ++i) {
    const CellId c = post.ranking[static_cast<std::size_t>(i)];
    ev.top.emplace_back(c, post.prob[static_cast<std::size_t>(c)]);
  }
  if (layout_)
    if (const auto key = map_key(ev.estimate, *layout_)) {
      ev.key_id = key->key_id;
      ev.label = key->label;
    }
  std::unique_lock lock(read_mutex_);
  ev.seq = events_.size() + 1;
  events_.push_back(std::move(ev));
}

Json LiveSession::calibrate(const std::string& step) {
  std::lock_guard write(write_mutex_);
  touch();
  const double dt = 1.0 / scenario_.rate_hz;
  const auto dwell = [&](const std::optional<Vec2>& pos, double seconds) {
    SynthOptions opt{scenario_.rate_hz, scenario_.transition_s, t_ - dt};
    Trace raw = synth_trace(scenario_.board, scenario_.env, scenario_.magnet, {{magnet_, dt}, {pos, seconds}}, opt, rng_);
    raw.erase(raw.begin());
    std::unique_lock lock(read_mutex_);
    magnet_ = pos;
    t_ = raw.back().t + dt;
    // keep only the settled part
    const auto settle = static_cast<std::ptrdiff_t>(std::min<std::size_t>(
        raw.size() - 1, static_cast<std::size_t>(std::lround(scenario_.transition_s * scenario_.rate_hz))));
    return Trace(raw.begin() + settle, raw.end());
  };

  Json out = {{"step", step}};
  if (step == "silence") {
    const bool present = magnet_.has_value();
    const SilenceStats stats = estimate_silence(dwell(magnet_, scenario_.silence_s));
    const double floor = 4.0 * scenario_.env.noise_sigma * scenario_.env.noise_sigma + 1e-3;
    Json warnings = Json::array();
    if (present) warnings.push_back("magnet_present");
    if ((stats.var.array() > floor).any()) warnings.push_back("variance_above_floor");
    {
      std::unique_lock lock(read_mutex_);
      silence_ = stats;
    }
    out["silence"] = to_json(stats);
    out["warnings"] = warnings;
  } else if (step == "polarity") {
    if (!layout_ || !layout_->reference_key) throw DomainError("session layout has no reference key");
    const Key* key = layout_->find_key(*layout_->reference_key);
    if (!key || key->cells.empty()) throw DomainError("reference key not in layout");
    const CellId cell = key->cells.front();
    const Trace window = remove_silence(dwell(scenario_.board.centroid(cell), 1.0), silence_);
    const Polarity p = detect_polarity(window, *fp_, cell);
    {
      std::unique_lock lock(read_mutex_);
      polarity_ = p;
    }
    out["polarity"] = to_string(p);
    out["reference_cell"] = cell;
  } else if (step == "anchors") {
    const auto cells = default_anchor_cells(scenario_.board);
    std::array<AnchorWindow, 2> anchors;
    for (std::size_t i = 0; i < 2; ++i)
      anchors[i] = {cells[i], condition(dwell(scenario_.board.centroid(cells[i]), scenario_.train_s))};
    const AffineMap map = fit_affine(anchors, *factory_);
    auto regen = std::make_shared<const Fingerprint>(regenerate(*factory_, map));
    {
      std::unique_lock lock(read_mutex_);
      affine_ = map;
      fp_ = std::move(regen);
    }
    out["affine"] = to_json(map);
    out["anchors"] = {cells[0], cells[1]};
  } else {
    throw DomainError("unknown calibration step '" + step + "' (silence, polarity, anchors)");
  }
  return out;
}

Json LiveSession::events_since(std::uint64_t since) const {
  std::shared_lock lock(read_mutex_);
  Json events = Json::array();
  for (auto i = static_cast<std::size_t>(std::min<std::uint64_t>(since, events_.size())); i < events_.size(); ++i) {
    const ServiceEvent& e = events_[i];
    Json top = Json::array();
    for (const auto& [cell, p] : e.top) top.push_back({{"cell", cell}, {"p", p}});
    events.push_back({{"seq", e.seq},
                      {"t_start", e.t_start},
                      {"t_end", e.t_end},
                      {"key", e.key_id ? Json(*e.key_id) : Json(nullptr)},
                      {"label", e.label ? Json(*e.label) : Json(nullptr)},
                      {"cell", e.estimate.cell},
                      {"pos", {e.estimate.position.x(), e.estimate.position.y()}},
                      {"top", top}});
  }
  return {{"events", events}, {"next", events_.size()}};
}

Json LiveSession::state() const {
  std::shared_lock lock(read_mutex_);
  return {{"id", id_},
          {"t", t_},
          {"magnet", magnet_ ? Json::array({magnet_->x(), magnet_->y()}) : Json(nullptr)},
          {"silence", to_json(silence_)},
          {"polarity", to_string(polarity_)},
          {"affine", to_json(affine_)},
          {"layout", layout_ ? Json(layout_->id) : Json(nullptr)},
          {"events", events_.size()}};
}

ServiceApp::ServiceApp(ServiceConfig config)
    : config_(std::move(config)), layouts_(config_.layout_dir) {
  Rng rng(config_.scenario.seed);
  factory_ = std::make_shared<const Fingerprint>(build_factory_fingerprint(config_.scenario, rng));
}

std::size_t ServiceApp::session_count() const {
  std::lock_guard lock(sessions_mutex_);
  return sessions_.size();
}

void ServiceApp::expire_sessions() {
  const auto cutoff = std::chrono::steady_clock::now() - config_.session_ttl;
  std::lock_guard lock(sessions_mutex_);
  std::erase_if(sessions_, [&](const auto& kv) { return kv.second->last_used() < cutoff; });
}

std::shared_ptr<LiveSession> ServiceApp::find_session(const std::string& id) {
  std::lock_guard lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("unknown session '" + id + "'");
  it->second->touch();
  return it->second;
}

HttpResponse ServiceApp::handle(const std::string& method, const std::string& path, const std::string& body,
                                const std::map<std::string, std::string>& query) {
  expire_sessions();
  const auto parts = split_path(path);
  try {
    if (parts.size() == 1 && parts[0] == "board" && method == "GET") return board();
    if (!parts.empty() && parts[0] == "layouts") {
      if (parts.size() == 1 && method == "GET") return layouts_list();
      if (parts.size() == 2) {
        if (!valid_id(parts[1])) return error_response(422, "invalid_id", "layout ids are [A-Za-z0-9_.-], 1-64 chars");
        if (method == "GET") return layout_get(parts[1]);
        if (method == "POST") return layout_write(parts[1], body, true);
        if (method == "PUT") return layout_write(parts[1], body, false);
        if (method == "DELETE") return layout_delete(parts[1]);
        return error_response(405, "method_not_allowed", method + " " + path);
      }
    }
    if (!parts.empty() && parts[0] == "sessions") {
      if (parts.size() == 1 && method == "POST") return session_create(body);
      if (parts.size() == 2 && method == "GET") return session_get(parts[1]);
      if (parts.size() == 2 && method == "DELETE") return session_delete(parts[1]);
      if (parts.size() == 3 && parts[2] == "magnet" && method == "POST") return session_magnet(parts[1], body);
      if (parts.size() == 3 && parts[2] == "events" && method == "GET") return session_events(parts[1], query);
      if (parts.size() == 3 && parts[2] == "calibrate" && method == "POST") return session_calibrate(parts[1], body);
    }
    return error_response(404, "not_found", "no route for " + method + " " + path);
  } catch (const NotFoundError& e) {
    return error_response(404, "not_found", e.what());
  } catch (const FormatError& e) {
    return error_response(400, "bad_request", e.what());
  } catch (const Error& e) {
    return error_response(422, to_string(e.kind()), e.what());
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
}

HttpResponse ServiceApp::board() const {
  const BoardSpec& b = config_.scenario.board;
  Json j = to_json(b);
  j["cell_count"] = b.cell_count();
  return {200, j};
}

HttpResponse ServiceApp::layouts_list() const { return {200, {{"layouts", layouts_.ids()}}}; }

HttpResponse ServiceApp::layout_get(const std::string& id) const {
  const auto layout = layouts_.get(id);
  if (!layout) return error_response(404, "not_found", "unknown layout '" + id + "'");
  return {200, to_json(*layout)};
}

HttpResponse ServiceApp::layout_write(const std::string& id, const std::string& body, bool create) {
  Json j = parse_body(body);
  if (!j.contains("id")) j["id"] = id;
  const KeyLayout layout = layout_from_json(j);
  if (layout.id != id) return error_response(422, "id_mismatch", "body id '" + layout.id + "' differs from path id");
  const bool existed = layouts_.exists(id);
  if (create && existed) return error_response(409, "conflict", "layout '" + id + "' already exists");
  auto violations = validate_layout(layout);
  if (!layout.matches(config_.scenario.board))
    violations.push_back({ViolationKind::kBadGeometry, "layout board differs from the service board", {}, {}});
  if (!violations.empty()) {
    Json v = Json::array();
    for (const auto& x : violations) v.push_back(to_json(x));
    return {422, {{"error", "invalid_layout"}, {"message", "layout has violations"}, {"violations", v}}};
  }
  layouts_.put(layout);
  return {existed ? 200 : 201, to_json(layout)};
}

HttpResponse ServiceApp::layout_delete(const std::string& id) {
  if (!layouts_.remove(id)) return error_response(404, "not_found", "unknown layout '" + id + "'");
  return {204, nullptr};
}

HttpResponse ServiceApp::session_create(const std::string& body) {
  const Json j = parse_body(body);
  Scenario scenario = config_.scenario;
  std::optional<KeyLayout> layout;
  if (j.contains("layout_id") && !j.at("layout_id").is_null()) {
    const auto id = j.at("layout_id").get<std::string>();
    if (!valid_id(id)) throw DomainError("bad layout id");
    layout = layouts_.get(id);
    if (!layout) throw NotFoundError("unknown layout '" + id + "'");
  }
  try {
    if (j.contains("seed")) scenario.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("polarity")) scenario.magnet.polarity = j.at("polarity").get<int>();
    if (j.contains("moment_scale")) scenario.magnet.moment *= j.at("moment_scale").get<double>();
    if (j.contains("noise_sigma")) scenario.env.noise_sigma = j.at("noise_sigma").get<double>();
    if (j.contains("rotation")) scenario.env.rotation = vec3_from_json(j.at("rotation"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(e.what());
  }
  scenario.magnet.validate();
  scenario.env.validate();

  std::string id;
  {
    std::lock_guard lock(sessions_mutex_);
    id = "s" + std::to_string(next_session_++);
  }
  auto session = std::make_shared<LiveSession>(id, scenario, factory_, std::move(layout));
  Json state = session->state();
  {
    std::lock_guard lock(sessions_mutex_);
    sessions_.emplace(id, std::move(session));
  }
  return {201, state};
}

HttpResponse ServiceApp::session_get(const std::string& id) { return {200, find_session(id)->state()}; }

HttpResponse ServiceApp::session_delete(const std::string& id) {
  std::lock_guard lock(sessions_mutex_);
  if (!sessions_.erase(id)) return error_response(404, "not_found", "unknown session '" + id + "'");
  return {204, nullptr};
}

HttpResponse ServiceApp::session_magnet(const std::string& id, const std::string& body) {
  auto session = find_session(id);
  const Json j = parse_body(body);
  if (!j.contains("position")) throw FormatError("missing field 'position' ([x, y] or null)");
  std::optional<Vec2> pos;
  const Json& p = j.at("position");
  if (!p.is_null()) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
      throw FormatError("position must be [x, y] or null");
    pos = Vec2(p[0].get<double>(), p[1].get<double>());
  }
  double dwell = 1.0;
  if (j.contains("dwell_s")) {
    if (!j.at("dwell_s").is_number()) throw FormatError("dwell_s must be a number");
    dwell = j.at("dwell_s").get<double>();
  }
  const int added = session->move_magnet(pos, dwell);
  Json out = session->state();
  out["new_events"] = added;
  return {200, out};
}

HttpResponse ServiceApp::session_events(const std::string& id, const std::map<std::string, std::string>& query) {
  auto session = find_session(id);
  std::uint64_t since = 0;
  if (const auto it = query.find("since"); it != query.end()) {
    try {
      std::size_t used = 0;
      since = std::stoull(it->second, &used);
      if (used != it->second.size() || it->second.front() == '-') throw std::invalid_argument("since");
    } catch (const std::exception&) {
      throw FormatError("since must be a non-negative integer");
    }
  }
  return {200, session->events_since(since)};
}

HttpResponse ServiceApp::session_calibrate(const std::string& id, const std::string& body) {
  auto session = find_session(id);
  const Json j = parse_body(body);
  if (!j.contains("step") || !j.at("step").is_string()) throw FormatError("missing string field 'step'");
  return {200, session->calibrate(j.at("step").get<std::string>())};
}

struct HttpServer::Impl {
  httplib::Server server;
};

HttpServer::HttpServer(ServiceApp& app) : impl_(std::make_unique<Impl>()) {
  const auto dispatch = [&app](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    const HttpResponse r = app.handle(req.method, req.path, req.body, query);
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    if (r.status != 204) res.set_content(r.body.dump(), "application/json");
  };
  auto& server = impl_->server;
  server.Get(".*", dispatch);
  server.Post(".*", dispatch);
  server.Put(".*", dispatch);
  server.Delete(".*", dispatch);
  server.Options(".*", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, DELETE, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw DomainError("cannot listen on " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace magkey
