#include <csignal>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "magkey/errors.hpp"
#include "magkey/io.hpp"
#include "magkey/service.hpp"

using namespace magkey;

namespace {

HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MagBoard layout and live session service", "magkey_service"};
  std::string addr = "127.0.0.1:8080";
  std::string layouts = "layouts";
  std::string config;
  int ttl = 1800;
  app.add_option("--addr", addr, "host:port to listen on");
  app.add_option("--layouts", layouts, "Layout directory");
  app.add_option("--config", config, "Scenario JSON")->envname("MAGKEY_CONFIG");
  app.add_option("--ttl", ttl, "Idle session lifetime (s)")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) {
    std::cerr << Json{{"error", "usage"}, {"message", "--addr must be host:port"}}.dump() << "\n";
    return 2;
  }
  try {
    ServiceConfig cfg;
    cfg.layout_dir = layouts;
    cfg.session_ttl = std::chrono::seconds(ttl);
    if (!config.empty()) cfg.scenario = scenario_from_json(read_json_file(config));
    ServiceApp service(cfg);
    HttpServer server(service);
    const int port = server.bind(addr.substr(0, colon), std::stoi(addr.substr(colon + 1)));
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "listening on " << addr.substr(0, colon) << ":" << port << "\n";
    server.listen();
    g_server = nullptr;
  } catch (const Error& e) {
    std::cerr << Json{{"error", to_string(e.kind())}, {"message", e.what()}}.dump() << "\n";
    return e.kind() == ErrorKind::kFormat || e.kind() == ErrorKind::kNotFound ? 3 : 4;
  } catch (const std::exception& e) {
    std::cerr << Json{{"error", "internal"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
