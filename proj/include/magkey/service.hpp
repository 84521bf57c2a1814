#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "magkey/evalharness.hpp"
#include "magkey/io.hpp"
#include "magkey/keymap.hpp"
#include "magkey/segment.hpp"

namespace magkey {

struct HttpResponse {
  int status = 200;
  Json body;
};

/// Layouts persisted as <dir>/<id>.json. Writes are serialized.
class LayoutStore {
 public:
  explicit LayoutStore(std::filesystem::path dir);

  std::vector<std::string> ids() const;
  std::optional<KeyLayout> get(const std::string& id) const;
  bool exists(const std::string& id) const;
  void put(const KeyLayout& layout);
  bool remove(const std::string& id);

 private:
  std::filesystem::path file_for(const std::string& id) const;

  std::filesystem::path dir_;
  mutable std::shared_mutex mutex_;
};

struct ServiceEvent {
  std::uint64_t seq = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  std::optional<std::string> key_id;
  std::optional<std::string> label;
  Estimate estimate;
  std::vector<std::pair<CellId, double>> top;  // posterior snapshot
};

/// A live simulated typing session. The magnet endpoint is the only
/// sample writer; events are read as snapshots.
class LiveSession {
 public:
  LiveSession(std::string id, Scenario scenario, std::shared_ptr<const Fingerprint> factory,
              std::optional<KeyLayout> layout);

  const std::string& id() const { return id_; }

  /// Moves the magnet (nullopt = lift it off the board) and dwells there.
  /// Returns the number of new events.
  int move_magnet(const std::optional<Vec2>& position, double dwell_s);

  Json calibrate(const std::string& step);
  Json events_since(std::uint64_t since) const;
  Json state() const;

  std::chrono::steady_clock::time_point last_used() const;
  void touch();

 private:
  Trace condition(const Trace& raw) const;
  int ingest(const Trace& raw);
  void emit(const Keystroke& ks);

  std::string id_;
  Scenario scenario_;
  std::shared_ptr<const Fingerprint> factory_;
  std::shared_ptr<const Fingerprint> fp_;
  std::optional<KeyLayout> layout_;

  mutable std::mutex write_mutex_;
  mutable std::shared_mutex read_mutex_;
  Rng rng_;
  double t_ = 0.0;
  std::optional<Vec2> magnet_;
  SilenceStats silence_;
  Polarity polarity_ = Polarity::kNormal;
  AffineMap affine_;
  StreamSegmenter segmenter_;
  std::optional<std::size_t> announced_start_;
  std::vector<ServiceEvent> events_;
  std::atomic<std::chrono::steady_clock::rep> last_used_;
};

struct ServiceConfig {
  std::filesystem::path layout_dir = "layouts";
  Scenario scenario;
  std::chrono::seconds session_ttl{1800};
};

/// Routing and handlers, independent of the socket layer.
class ServiceApp {
 public:
  explicit ServiceApp(ServiceConfig config);

  HttpResponse handle(const std::string& method, const std::string& path,
                      const std::string& body,
                      const std::map<std::string, std::string>& query = {});

  std::size_t session_count() const;
  void expire_sessions();

 private:
  HttpResponse board() const;
  HttpResponse layouts_list() const;
  HttpResponse layout_get(const std::string& id) const;
  HttpResponse layout_write(const std::string& id, const std::string& body, bool create);
  HttpResponse layout_delete(const std::string& id);
  HttpResponse session_create(const std::string& body);
  HttpResponse session_magnet(const std::string& id, const std::string& body);
  HttpResponse session_events(const std::string& id,
                              const std::map<std::string, std::string>& query);
  HttpResponse session_calibrate(const std::string& id, const std::string& body);
  HttpResponse session_get(const std::string& id);
  HttpResponse session_delete(const std::string& id);
  std::shared_ptr<LiveSession> find_session(const std::string& id);

  ServiceConfig config_;
  LayoutStore layouts_;
  std::shared_ptr<const Fingerprint> factory_;
  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<LiveSession>> sessions_;
  std::uint64_t next_session_ = 1;
};

/// HTTP/1.1 binding of a ServiceApp.
class HttpServer {
 public:
  explicit HttpServer(ServiceApp& app);
  ~HttpServer();

  /// Binds host:port (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop() is called.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace magkey
