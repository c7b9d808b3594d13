#include "capri/service/server.hpp"

#include <httplib.h>

#include "capri/error.hpp"

namespace capri::service {

struct HttpServer::Impl {
  std::shared_ptr<const Api> api;
  ServiceConfig config;
  httplib::Server server;
};

namespace {

void forward(const Api& api, const httplib::Request& in, httplib::Response& out) {
  Request req;
  req.method = in.method;
  req.path = in.path;
  for (const auto& [k, v] : in.params) req.query[k] = v;
  req.body = in.body;
  const Response res = api.handle(req);
  out.status = res.status;
  out.set_content(res.body, res.content_type);
}

}  // namespace

HttpServer::HttpServer(std::shared_ptr<const Api> api, const ServiceConfig& config)
    : impl_(std::make_unique<Impl>()) {
  impl_->api = std::move(api);
  impl_->config = config;
  auto& svr = impl_->server;
  const int threads = std::max(1, config.max_concurrency);
  svr.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
  const auto handler = [api = impl_->api](const httplib::Request& in, httplib::Response& out) {
    forward(*api, in, out);
  };
  for (const char* path : {"/health", "/vocab", "/records", "/scenarios"}) svr.Get(path, handler);
  for (const char* path : {"/predict", "/predict/upload", "/whatif"}) svr.Post(path, handler);
  if (!config.static_dir.empty() && !svr.set_mount_point("/", config.static_dir.string())) {
    throw Error(ErrorCode::Io, "static directory not found: " + config.static_dir.string());
  }
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
  auto& svr = impl_->server;
  const auto& c = impl_->config;
  const int port = c.port == 0 ? svr.bind_to_any_port(c.host) : (svr.bind_to_port(c.host, c.port) ? c.port : -1);
  if (port < 0) throw Error(ErrorCode::Io, "cannot bind " + c.host + ":" + std::to_string(c.port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace capri::service
