#pragma once

#include <memory>
#include <string>

#include "softlabel/service.hpp"

namespace softlabel {

/// Binds handle_request to a threaded HTTP listener.
class HttpServer {
public:
  explicit HttpServer(ElicitationService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Returns the bound port, or -1 on failure. Port 0 picks a free one.
  int bind(const std::string& host, int port);
  /// Blocks until stop() is called.
  bool serve();
  void stop();
  bool running() const;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace softlabel
