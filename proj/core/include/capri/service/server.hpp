#pragma once

#include <memory>

#include "capri/service/api.hpp"

namespace capri::service {

/// HTTP front end over an Api. Requests are served by a pool of
/// config.max_concurrency threads; static assets are mounted at "/" when
/// config.static_dir is set.
class HttpServer {
 public:
  HttpServer(std::shared_ptr<const Api> api, const ServiceConfig& config);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds the socket and returns the port (config.port 0 picks a free one).
  /// Throws Error(Io).
  int bind();
  /// Blocks until stop() is called.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace capri::service
