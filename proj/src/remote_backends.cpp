#include "magic/remote_backends.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "magic/util.hpp"

namespace magic {

namespace {

bool is_timeout(httplib::Error e) {
  return e == httplib::Error::Read || e == httplib::Error::Write ||
         e == httplib::Error::ConnectionTimeout;
}

BackendErrorKind kind_for_status(int status, const json& body) {
  if (body.is_object() && body.contains("error") && body["error"].is_object()) {
    const auto& err = body["error"];
    if (err.contains("kind") && err["kind"].is_string()) {
      if (auto k = parse_enum<BackendErrorKind>(err["kind"].get<std::string>())) {
        if (*k == BackendErrorKind::model_refused) return *k;
      }
    }
  }
  if (status >= 500 || status == 429) return BackendErrorKind::unreachable;
  if (status == 408) return BackendErrorKind::timeout;
  return BackendErrorKind::malformed_response;
}

json png_payload(const std::string& png) { return base64_encode(png); }

std::string require_string(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key) || !j[key].is_string()) {
    throw BackendError(BackendErrorKind::malformed_response, where + ": missing string '" + key + "'");
  }
  return j[key].get<std::string>();
}

}  // namespace

json http_json(const std::string& endpoint, const std::string& method, const std::string& path,
               const json* body, const std::vector<std::pair<std::string, std::string>>& headers,
               std::chrono::milliseconds timeout, const RetryPolicy& retry) {
  return with_retry(retry, [&]() -> json {
    httplib::Client client(endpoint);
    if (!client.is_valid()) {
      throw BackendError(BackendErrorKind::unreachable, "invalid endpoint '" + endpoint + "'");
    }
    const auto secs = timeout.count() / 1000;
    const auto usecs = (timeout.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers hdrs;
    for (const auto& [k, v] : headers) hdrs.emplace(k, v);

    httplib::Result res = method == "GET"
                              ? client.Get(path, hdrs)
                              : client.Post(path, hdrs, body ? body->dump() : std::string("{}"),
                                            "application/json");
    if (!res) {
      const auto err = res.error();
      const auto kind = is_timeout(err) ? BackendErrorKind::timeout : BackendErrorKind::unreachable;
      throw BackendError(kind, endpoint + path + ": " + httplib::to_string(err));
    }
    json parsed = json::parse(res->body, nullptr, false);
    if (res->status < 200 || res->status >= 300) {
      std::string detail = "HTTP " + std::to_string(res->status) + " from " + path;
      if (!parsed.is_discarded() && parsed.contains("error")) detail += ": " + parsed["error"].dump();
      throw BackendError(kind_for_status(res->status, parsed), detail);
    }
    if (parsed.is_discarded()) {
      throw BackendError(BackendErrorKind::malformed_response, path + ": body is not JSON");
    }
    return parsed;
  });
}

// ---------------------------------------------------------------------------

RemoteChat::RemoteChat(RemoteSettings settings) : settings_(std::move(settings)) {}

json RemoteChat::request_body(const ChatRequest& request) const {
  json messages = json::array();
  if (!request.system.empty()) messages.push_back({{"role", "system"}, {"content", request.system}});
  for (const auto& m : request.messages) {
    if (m.images_png.empty()) {
      messages.push_back({{"role", m.role}, {"content", m.content}});
      continue;
    }
    json parts = json::array();
    parts.push_back({{"type", "text"}, {"text", m.content}});
    for (const auto& png : m.images_png) {
      parts.push_back({{"type", "image_url"},
                       {"image_url", {{"url", "data:image/png;base64," + base64_encode(png)}}}});
    }
    messages.push_back({{"role", m.role}, {"content", parts}});
  }
  json body = {{"model", settings_.llm_model},
               {"messages", messages},
               {"temperature", request.temperature}};
  if (request.seed) body["seed"] = *request.seed;
  return body;
}

std::string RemoteChat::do_chat(const ChatRequest& request) {
  const json body = request_body(request);
  std::vector<std::pair<std::string, std::string>> headers;
  if (!settings_.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + settings_.api_key);
  const json reply = http_json(settings_.llm_endpoint, "POST", settings_.llm_path, &body, headers,
                               settings_.timeout, settings_.retry);

  if (!reply.contains("choices") || !reply["choices"].is_array() || reply["choices"].empty()) {
    throw BackendError(BackendErrorKind::malformed_response, "chat reply has no choices");
  }
  const json& choice = reply["choices"][0];
  if (choice.value("finish_reason", std::string{}) == "content_filter") {
    throw BackendError(BackendErrorKind::model_refused, "content filter");
  }
  const json message = choice.value("message", json::object());
  if (message.contains("refusal") && message["refusal"].is_string()) {
    throw BackendError(BackendErrorKind::model_refused, message["refusal"].get<std::string>());
  }
  return require_string(message, "content", "choices[0].message");
}

// ---------------------------------------------------------------------------

SidecarClient::SidecarClient(RemoteSettings settings) : settings_(std::move(settings)) {}

json SidecarClient::post(const std::string& path, const json& body) {
  return http_json(settings_.sidecar_endpoint, "POST", path, &body, {}, settings_.timeout,
                   settings_.retry);
}

json SidecarClient::health() {
  return http_json(settings_.sidecar_endpoint, "GET", "/v1/health", nullptr, {}, settings_.timeout,
                   settings_.retry);
}

RasterRgba SidecarClient::do_t2i(const std::string& prompt, std::uint64_t seed, int size_px) {
  json body = {{"prompt", prompt}, {"seed", seed}, {"width", size_px}, {"height", size_px}};
  if (!settings_.t2i_model.empty()) body["model"] = settings_.t2i_model;
  const json reply = post("/v1/t2i", body);
  const std::string png = base64_decode(require_string(reply, "image_b64", "/v1/t2i"));
  try {
    return decode_png_rgba(png);
  } catch (const std::exception& e) {
    throw BackendError(BackendErrorKind::malformed_response, std::string("/v1/t2i image: ") + e.what());
  }
}

std::vector<Detection> SidecarClient::do_detect(const SceneImage& image, const std::string& model_id,
                                                double conf_floor) {
  const json body = {{"image_b64", png_payload(encode_png(image.pixels, {1, 0}))},
                     {"model", model_id},
                     {"conf_threshold", conf_floor}};
  const json reply = post("/v1/detect", body);
  if (auto problems = check_detect_response(reply, image.width(), image.height()); !problems.empty()) {
    throw BackendError(BackendErrorKind::malformed_response, "/v1/detect " + problems.front());
  }
  std::vector<Detection> out;
  for (const auto& d : reply["detections"]) out.push_back(d.get<Detection>());
  return out;
}

std::vector<Region> SidecarClient::do_segment(const SceneImage& scene) {
  json body = {{"image_b64", png_payload(encode_png(scene.pixels, {1, 0}))}};
  if (!settings_.segmenter_model.empty()) body["model"] = settings_.segmenter_model;
  const json reply = post("/v1/segment", body);
  if (auto problems = check_segment_response(reply, scene.width(), scene.height()); !problems.empty()) {
    throw BackendError(BackendErrorKind::malformed_response, "/v1/segment " + problems.front());
  }
  std::vector<Region> out;
  for (const auto& r : reply["regions"]) {
    Region region;
    region.index = r["index"].get<int>();
    region.bbox = r["bbox"].get<BBox>();
    region.label = r["label"].get<std::string>();
    out.push_back(std::move(region));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Conformance

namespace {

using Problems = std::vector<std::string>;

void check_bbox(const json& parent, const std::string& ptr, int width, int height, Problems& out) {
  if (!parent.contains("bbox")) {
    out.push_back(ptr + "/bbox: missing field");
    return;
  }
  const json& b = parent["bbox"];
  if (!b.is_array() || b.size() != 4) {
    out.push_back(ptr + "/bbox: expected [x, y, w, h]");
    return;
  }
  for (std::size_t i = 0; i < 4; ++i) {
    if (!b[i].is_number_integer()) {
      out.push_back(ptr + "/bbox/" + std::to_string(i) + ": expected integer");
      return;
    }
  }
  const BBox box = b.get<BBox>();
  if (!box.inside(width, height)) out.push_back(ptr + "/bbox: outside image bounds");
}

void check_label(const json& parent, const std::string& ptr, Problems& out) {
  if (!parent.contains("label")) out.push_back(ptr + "/label: missing field");
  else if (!parent["label"].is_string()) out.push_back(ptr + "/label: expected string");
}

}  // namespace

std::vector<std::string> check_health_response(const json& body) {
  Problems out;
  if (!body.is_object()) return {": expected object"};
  if (!body.contains("status")) out.push_back("/status: missing field");
  else if (body["status"] != "ok") out.push_back("/status: expected \"ok\"");
  if (!body.contains("models")) out.push_back("/models: missing field");
  else if (!body["models"].is_object()) out.push_back("/models: expected object");
  return out;
}

std::vector<std::string> check_t2i_response(const json& body, int width, int height) {
  if (!body.is_object()) return {": expected object"};
  if (!body.contains("image_b64")) return {"/image_b64: missing field"};
  if (!body["image_b64"].is_string()) return {"/image_b64: expected string"};
  try {
    const auto img = decode_png_rgba(base64_decode(body["image_b64"].get<std::string>()));
    if (img.width != width || img.height != height) {
      return {"/image_b64: expected " + std::to_string(width) + "x" + std::to_string(height) +
              " image, got " + std::to_string(img.width) + "x" + std::to_string(img.height)};
    }
  } catch (const std::exception& e) {
    return {std::string("/image_b64: not a PNG (") + e.what() + ")"};
  }
  return {};
}

std::vector<std::string> check_detect_response(const json& body, int width, int height) {
  Problems out;
  if (!body.is_object()) return {": expected object"};
  if (!body.contains("detections")) return {"/detections: missing field"};
  const json& dets = body["detections"];
  if (!dets.is_array()) return {"/detections: expected array"};
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const std::string ptr = "/detections/" + std::to_string(i);
    const json& d = dets[i];
    if (!d.is_object()) {
      out.push_back(ptr + ": expected object");
      continue;
    }
    check_label(d, ptr, out);
    if (!d.contains("confidence")) out.push_back(ptr + "/confidence: missing field");
    else if (!d["confidence"].is_number()) out.push_back(ptr + "/confidence: expected number");
    else if (const double c = d["confidence"].get<double>(); !(c >= 0.0 && c <= 1.0))
      out.push_back(ptr + "/confidence: confidence out of range");
    check_bbox(d, ptr, width, height, out);
  }
  return out;
}

std::vector<std::string> check_segment_response(const json& body, int width, int height) {
  Problems out;
  if (!body.is_object()) return {": expected object"};
  if (!body.contains("regions")) return {"/regions: missing field"};
  const json& regions = body["regions"];
  if (!regions.is_array()) return {"/regions: expected array"};
  if (regions.empty()) return {"/regions: expected at least one region"};
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const std::string ptr = "/regions/" + std::to_string(i);
    const json& r = regions[i];
    if (!r.is_object()) {
      out.push_back(ptr + ": expected object");
      continue;
    }
    if (!r.contains("index")) out.push_back(ptr + "/index: missing field");
    else if (!r["index"].is_number_integer()) out.push_back(ptr + "/index: expected integer");
    else if (r["index"].get<long long>() != static_cast<long long>(i) + 1)
      out.push_back(ptr + "/index: indices must be 1..n in order");
    check_label(r, ptr, out);
    check_bbox(r, ptr, width, height, out);
  }
  return out;
}

bool ConformanceReport::passed() const {
  for (const auto& c : checks)
    if (!c.passed) return false;
  return !checks.empty();
}

json ConformanceReport::to_json() const {
  json j = {{"endpoint", endpoint}, {"passed", passed()}, {"notes", notes}};
  j["checks"] = json::array();
  for (const auto& c : checks) {
    j["checks"].push_back({{"route", c.route}, {"passed", c.passed}, {"failures", c.failures}});
  }
  return j;
}

std::string ConformanceReport::to_text() const {
  std::string s;
  for (const auto& c : checks) {
    s += (c.passed ? "PASS " : "FAIL ") + c.route + "\n";
    for (const auto& f : c.failures) s += "  " + f + "\n";
  }
  for (const auto& n : notes) s += "note: " + n + "\n";
  s += passed() ? "conformance: pass\n" : "conformance: fail\n";
  return s;
}

namespace {

// Small deterministic scene for the detect/segment goldens.
RasterRgb golden_scene() {
  RasterRgb img(128, 96);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      auto px = img.at(x, y);
      px[0] = static_cast<std::uint8_t>(x * 2);
      px[1] = static_cast<std::uint8_t>(y * 2);
      px[2] = static_cast<std::uint8_t>((x + y) % 256);
    }
  }
  for (int y = 30; y < 60; ++y)
    for (int x = 50; x < 80; ++x) {
      auto px = img.at(x, y);
      px[0] = 200, px[1] = 20, px[2] = 30;
    }
  return img;
}

}  // namespace

ConformanceReport sidecar_conformance(const std::string& endpoint, std::chrono::milliseconds timeout) {
  ConformanceReport report;
  report.endpoint = endpoint;
  report.notes.push_back(
      "detector pre/post-processing parity with the vendor evaluation API is not checked");
  const RetryPolicy no_retry{0, std::chrono::milliseconds(0), {}};

  auto run = [&](const std::string& route, const std::string& method, const json* body,
                 const std::function<Problems(const json&)>& check) {
    ConformanceCheck c;
    c.route = method + " " + route;
    try {
      c.failures = check(http_json(endpoint, method, route, body, {}, timeout, no_retry));
    } catch (const BackendError& e) {
      c.failures.push_back(std::string(": ") + e.what());
    }
    c.passed = c.failures.empty();
    report.checks.push_back(std::move(c));
  };

  run("/v1/health", "GET", nullptr, check_health_response);

  const json t2i_body = {{"prompt", "a blue square poster"}, {"seed", 1}, {"width", 64}, {"height", 64}};
  run("/v1/t2i", "POST", &t2i_body, [](const json& b) { return check_t2i_response(b, 64, 64); });

  const RasterRgb scene = golden_scene();
  const std::string scene_b64 = base64_encode(encode_png(scene, {1, 0}));
  const json detect_body = {{"image_b64", scene_b64}, {"model", "yolov10"}, {"conf_threshold", 0.25}};
  run("/v1/detect", "POST", &detect_body, [&](const json& b) {
    Problems p = check_detect_response(b, scene.width, scene.height);
    if (p.empty()) {
      const auto& dets = b["detections"];
      for (std::size_t i = 0; i < dets.size(); ++i) {
        if (dets[i]["confidence"].get<double>() < 0.25)
          p.push_back("/detections/" + std::to_string(i) + "/confidence: below conf_threshold");
      }
    }
    return p;
  });

  const json segment_body = {{"image_b64", scene_b64}};
  run("/v1/segment", "POST", &segment_body,
      [&](const json& b) { return check_segment_response(b, scene.width, scene.height); });

  // Error envelope: a request without an image must be rejected with {error:{kind, detail}}.
  {
    ConformanceCheck c;
    c.route = "POST /v1/detect (error envelope)";
    try {
      httplib::Client client(endpoint);
      client.set_connection_timeout(timeout.count() / 1000, (timeout.count() % 1000) * 1000);
      client.set_read_timeout(timeout.count() / 1000, (timeout.count() % 1000) * 1000);
      auto res = client.Post("/v1/detect", "{}", "application/json");
      if (!res) {
        c.failures.push_back(": " + httplib::to_string(res.error()));
      } else {
        if (res->status < 400 || res->status >= 500) {
          c.failures.push_back(": expected 4xx status, got " + std::to_string(res->status));
        }
        const json b = json::parse(res->body, nullptr, false);
        if (b.is_discarded() || !b.is_object() || !b.contains("error")) {
          c.failures.push_back("/error: missing field");
        } else {
          const json& e = b["error"];
          if (!e.contains("kind") || !e["kind"].is_string()) c.failures.push_back("/error/kind: missing field");
          if (!e.contains("detail") || !e["detail"].is_string())
            c.failures.push_back("/error/detail: missing field");
        }
      }
    } catch (const std::exception& e) {
      c.failures.push_back(std::string(": ") + e.what());
    }
    c.passed = c.failures.empty();
    report.checks.push_back(std::move(c));
  }
  return report;
}

}  // namespace magic
