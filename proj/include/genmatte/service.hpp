#pragma once

#include <memory>
#include <string>

#include "genmatte/config.hpp"

namespace genmatte {

struct HttpReply {
  int status = 200;
  std::string body;  // JSON
};

/// Stateless request handlers over one immutable engine context.
class MatteHandlers {
 public:
  explicit MatteHandlers(EngineConfig cfg);

  HttpReply health() const;
  HttpReply config() const;
  /// POST /v1/matte body:
  ///   {"image": b64, "guidance": {"trimap"|"mask": b64 | "scribbles": {...}, "prompt": str},
  ///    "seed": uint, "hr": bool, "diagnostics": bool}
  HttpReply matte(const std::string& body) const;

  const EngineConfig& engine_config() const { return cfg_; }

 private:
  EngineConfig cfg_;
  MattingContext ctx_;
};

/// HTTP front end: GET /v1/health, GET /v1/config, POST /v1/matte.
class MatteServer {
 public:
  explicit MatteServer(EngineConfig cfg);
  ~MatteServer();
  MatteServer(const MatteServer&) = delete;
  MatteServer& operator=(const MatteServer&) = delete;

  /// Returns the bound port, or -1.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace genmatte
