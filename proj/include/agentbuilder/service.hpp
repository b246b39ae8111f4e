#pragma once

#include <memory>
#include <string>

#include "agentbuilder/error.hpp"
#include "agentbuilder/gateway.hpp"

namespace agentbuilder {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::string store_dir = "agentbuilder-store";
  /// Read-only directory of fixture documents loaded at startup (may be empty).
  std::string fixtures_dir;
  /// Backend used when a request does not carry its own gateway config.
  json gateway_defaults = {{"kind", "template"}};
};

/// {"listen": "host:port", "store_dir", "fixtures_dir", "gateway": {...}}; every key optional.
/// Environment overrides: AGENTBUILDER_LISTEN, AGENTBUILDER_STORE_DIR,
/// AGENTBUILDER_FIXTURES_DIR, AGENTBUILDER_GATEWAY (JSON text).
ServiceConfig service_config_from_json(const json& j);
ServiceConfig load_service_config(const std::string& path);
void apply_env_overrides(ServiceConfig& config);

/// HTTP status class for an engine error code.
int http_status(ErrorCode code);

/// {"error": {"code": "...", "message": "..."}}
json error_body(const Error& e);

/// HTTP surface over the engine: workflow CRUD and compilation, fixtures,
/// sessions with control operations, traces and the per-session event stream.
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds the listening socket; returns the bound port.
  int bind();
  /// Serves until stop(). Calls bind() first when needed.
  void listen();
  /// bind() + listen() on a background thread.
  int start();
  /// Stops accepting, cancels live sessions and joins their executors.
  void stop();

  const ServiceConfig& config() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace agentbuilder
