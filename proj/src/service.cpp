#include "genmatte/service.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <httplib.h>
#include <json.hpp>

#include "genmatte/error.hpp"
#include "genmatte/image_io.hpp"

namespace genmatte {

using nlohmann::json;

namespace {

HttpReply error_reply(int status, const std::string& message) {
  return HttpReply{status, json{{"error", message}, {"status", status}}.dump()};
}

HttpReply internal_reply(const std::string& detail) {
  static std::atomic<std::uint64_t> counter{0};
  const auto now = static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count());
  char id[17];
  std::snprintf(id, sizeof id, "%016llx", static_cast<unsigned long long>(splitmix64(now ^ counter.fetch_add(1))));
  std::fprintf(stderr, "genmatte: internal error %s: %s\n", id, detail.c_str());
  return HttpReply{500, json{{"error", "internal error"}, {"id", id}, {"status", 500}}.dump()};
}

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kFormat:
      return 400;
    case ErrorKind::kValidation:
    case ErrorKind::kShape:
    case ErrorKind::kInvalidShape:
    case ErrorKind::kConfig:
      return 422;
    default:
      return 500;
  }
}

Tensor3 decode_guide_image(const json& v, const char* what) {
  if (!v.is_string()) fail(ErrorKind::kFormat, std::string("guidance.") + what + " must be a base64 string");
  const ImageBuffer img = decode_image(base64_decode(v.get<std::string>()));
  require(img.channels() == 1, ErrorKind::kValidation, std::string(what) + " must be a single-channel image");
  return img.pixels();
}

}  // namespace

MatteHandlers::MatteHandlers(EngineConfig cfg) : cfg_(std::move(cfg)), ctx_(build_context(cfg_)) {}

HttpReply MatteHandlers::health() const { return HttpReply{200, json{{"status", "ok"}, {"version", kVersion}}.dump()}; }

HttpReply MatteHandlers::config() const { return HttpReply{200, config_json(cfg_)}; }

HttpReply MatteHandlers::matte(const std::string& body) const {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    json req;
    try {
      req = json::parse(body);
    } catch (const json::exception&) {
      return error_reply(400, "request body is not valid JSON");
    }
    if (!req.is_object()) return error_reply(400, "request body must be a JSON object");
    for (const auto& [k, _] : req.items())
      if (k != "image" && k != "guidance" && k != "seed" && k != "hr" && k != "diagnostics")
        return error_reply(400, "unknown request field \"" + k + "\"");
    if (!req.contains("image") || !req["image"].is_string())
      return error_reply(400, "\"image\" must be a base64 string");

    MatteOptions opts;
    if (req.contains("seed")) {
      const json& s = req["seed"];
      if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
        return error_reply(400, "\"seed\" must be a non-negative integer");
      opts.seed = s.get<std::uint64_t>();
    }
    bool diagnostics = false;
    for (const char* key : {"hr", "diagnostics"})
      if (req.contains(key) && !req[key].is_boolean())
        return error_reply(400, std::string("\"") + key + "\" must be a boolean");
    opts.hr = req.value("hr", false);
    diagnostics = req.value("diagnostics", false);

    const ImageBuffer image = decode_image(base64_decode(req["image"].get<std::string>()));

    GuidanceInputs gin;
    if (req.contains("guidance")) {
      const json& g = req["guidance"];
      if (!g.is_object()) return error_reply(400, "\"guidance\" must be an object");
      int spatial = 0;
      for (const auto& [k, _] : g.items()) {
        if (k == "trimap" || k == "mask" || k == "scribbles")
          ++spatial;
        else if (k != "prompt")
          return error_reply(400, "unknown guidance kind \"" + k + "\"");
      }
      if (spatial > 1) return error_reply(400, "conflicting guidance kinds: give at most one of trimap, mask, scribbles");
      if (g.contains("trimap")) gin.trimap = decode_guide_image(g["trimap"], "trimap");
      if (g.contains("mask")) gin.mask = decode_guide_image(g["mask"], "mask");
      if (g.contains("scribbles")) {
        const json& s = g["scribbles"];
        if (!s.is_object() && !s.is_string()) return error_reply(400, "guidance.scribbles must be an object");
        gin.scribbles = ScribbleDoc::parse(s.is_string() ? s.get<std::string>() : s.dump());
      }
      if (g.contains("prompt")) {
        if (!g["prompt"].is_string()) return error_reply(400, "guidance.prompt must be a string");
        opts.prompt = g["prompt"].get<std::string>();
      }
    }
    opts.guide = build_spatial_guide(gin, cfg_, image.height(), image.width());

    const MatteResult result = matte_hr(image, ctx_, opts);
    json out{{"alpha", base64_encode(encode_png(result.alpha, 16))}, {"latent_f", ctx_.factor()}};
    if (diagnostics && result.uncertainty)
      out["uncertainty"] = base64_encode(encode_png(uncertainty_image(*result.uncertainty), 16));
    if (diagnostics && result.plan) out["boxes"] = json::parse(plan_json(*result.plan))["boxes"];
    out["timing_ms"] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return HttpReply{200, out.dump()};
  } catch (const Error& e) {
    const int status = status_for(e.kind());
    if (status == 500) return internal_reply(e.what());
    return error_reply(status, e.what());
  } catch (const std::exception& e) {
    return internal_reply(e.what());
  }
}

// ---------------------------------------------------------------------------

struct MatteServer::Impl {
  explicit Impl(EngineConfig cfg) : handlers(std::move(cfg)) {}

  MatteHandlers handlers;
  httplib::Server server;
};

MatteServer::MatteServer(EngineConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {
  auto& svr = impl_->server;
  const MatteHandlers& h = impl_->handlers;
  auto send = [](httplib::Response& res, const HttpReply& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  svr.set_payload_max_length(h.engine_config().service.max_request_bytes);
  svr.Get("/v1/health", [&h, send](const httplib::Request&, httplib::Response& res) { send(res, h.health()); });
  svr.Get("/v1/config", [&h, send](const httplib::Request&, httplib::Response& res) { send(res, h.config()); });
  svr.Post("/v1/matte",
           [&h, send](const httplib::Request& req, httplib::Response& res) { send(res, h.matte(req.body)); });
  svr.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
    const std::string msg = res.status == 413 ? "request exceeds the configured size limit"
                            : res.status == 404 ? "no such endpoint"
                                                : httplib::status_message(res.status);
    res.set_content(json{{"error", msg}, {"status", res.status}}.dump(), "application/json");
    return httplib::Server::HandlerResponse::Handled;
  });
  svr.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "unknown exception";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    const HttpReply r = internal_reply(what);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  });
}

MatteServer::~MatteServer() { stop(); }

int MatteServer::bind(const std::string& host, int port) {
  auto& svr = impl_->server;
  if (port == 0) return svr.bind_to_any_port(host);
  return svr.bind_to_port(host, port) ? port : -1;
}

bool MatteServer::listen_after_bind() { return impl_->server.listen_after_bind(); }

void MatteServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

void MatteServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace genmatte
