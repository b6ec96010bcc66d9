#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "magic/backends.hpp"

namespace magic {

struct RemoteSettings {
  std::string llm_endpoint;  // scheme://host[:port]
  std::string llm_path = "/v1/chat/completions";
  std::string llm_model;
  std::string api_key;
  std::string sidecar_endpoint;
  std::string t2i_model;
  std::string segmenter_model;
  std::chrono::milliseconds timeout{60000};
  RetryPolicy retry;
};

/// Chat-completions client: messages in, first choice's text out. Images are
/// sent as PNG data URLs.
class RemoteChat final : public ChatBackend {
 public:
  explicit RemoteChat(RemoteSettings settings);

  /// The request body this client would POST.
  [[nodiscard]] json request_body(const ChatRequest& request) const;

 protected:
  std::string do_chat(const ChatRequest& request) override;

 private:
  RemoteSettings settings_;
};

/// Client for the model sidecar (t2i, detect, segment routes).
class SidecarClient final : public TextToImage, public Detector, public Segmenter {
 public:
  explicit SidecarClient(RemoteSettings settings);

  /// GET /v1/health body.
  json health();

 protected:
  RasterRgba do_t2i(const std::string& prompt, std::uint64_t seed, int size_px) override;
  std::vector<Detection> do_detect(const SceneImage& image, const std::string& model_id,
                                   double conf_floor) override;
  std::vector<Region> do_segment(const SceneImage& scene) override;

 private:
  json post(const std::string& path, const json& body);
  RemoteSettings settings_;
};

/// One HTTP exchange with retry: returns the parsed JSON body of a 2xx reply.
/// Maps transport and status failures to BackendError kinds.
json http_json(const std::string& endpoint, const std::string& method, const std::string& path,
               const json* body, const std::vector<std::pair<std::string, std::string>>& headers,
               std::chrono::milliseconds timeout, const RetryPolicy& retry);

struct ConformanceCheck {
  std::string route;
  bool passed = false;
  std::vector<std::string> failures;  // "<json pointer>: <message>"
};

struct ConformanceReport {
  std::string endpoint;
  std::vector<ConformanceCheck> checks;
  std::vector<std::string> notes;

  [[nodiscard]] bool passed() const;
  [[nodiscard]] json to_json() const;
  [[nodiscard]] std::string to_text() const;
};

/// Schema checks of one response body per route; empty result means conformant.
std::vector<std::string> check_health_response(const json& body);
std::vector<std::string> check_t2i_response(const json& body, int width, int height);
std::vector<std::string> check_detect_response(const json& body, int width, int height);
std::vector<std::string> check_segment_response(const json& body, int width, int height);

/// Sends golden requests to every sidecar route and validates the replies.
ConformanceReport sidecar_conformance(const std::string& endpoint,
                                      std::chrono::milliseconds timeout = std::chrono::seconds(60));

}  // namespace magic
