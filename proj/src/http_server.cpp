#include "softlabel/http_server.hpp"

#include <httplib.h>

namespace softlabel {

struct HttpServer::Impl {
  explicit Impl(ElicitationService& s) : service(s) {}

  void handle(const httplib::Request& req, httplib::Response& res) {
    ApiRequest api{req.method, req.path, {}, req.body};
    for (const auto& [key, value] : req.params) api.query.emplace(key, value);
    const ApiResponse out = handle_request(service, api);
    res.status = out.status;
    res.set_content(out.body, out.content_type);
  }

  ElicitationService& service;
  httplib::Server server;
};

HttpServer::HttpServer(ElicitationService& service) : impl_(std::make_unique<Impl>(service)) {
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    impl_->handle(req, res);
  };
  impl_->server.Get(R"(/api/session)", route);
  impl_->server.Post(R"(/api/session/[^/]+/annotations)", route);
  impl_->server.Get(R"(/api/export)", route);
  impl_->server.Get(R"(/images/[^/]+)", route);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool HttpServer::serve() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

bool HttpServer::running() const { return impl_->server.is_running(); }

}  // namespace softlabel
