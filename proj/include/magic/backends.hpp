#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "magic/domain.hpp"

namespace magic {

enum class BackendErrorKind { unreachable, timeout, malformed_response, model_refused };

NLOHMANN_JSON_SERIALIZE_ENUM(BackendErrorKind,
                             {{BackendErrorKind::unreachable, "unreachable"},
                              {BackendErrorKind::timeout, "timeout"},
                              {BackendErrorKind::malformed_response, "malformed_response"},
                              {BackendErrorKind::model_refused, "model_refused"}})

std::string to_string(BackendErrorKind kind);

/// Failure of a model backend. Only unreachable and timeout are retryable.
class BackendError : public std::runtime_error {
 public:
  BackendError(BackendErrorKind kind, std::string detail);

  [[nodiscard]] BackendErrorKind kind() const { return kind_; }
  [[nodiscard]] const std::string& detail() const { return detail_; }
  [[nodiscard]] bool retryable() const {
    return kind_ == BackendErrorKind::unreachable || kind_ == BackendErrorKind::timeout;
  }

 private:
  BackendErrorKind kind_;
  std::string detail_;
};

struct ChatMessage {
  std::string role;  // user | assistant
  std::string content;
  std::vector<std::string> images_png;  // PNG-encoded attachments
};

struct ChatRequest {
  std::string system;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  std::optional<std::uint64_t> seed;

  /// Stable identity of the request: attachments enter by content hash.
  [[nodiscard]] std::string hash() const;
  [[nodiscard]] json canonical_json() const;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  /// Assistant text of the first choice.
  std::string chat(const ChatRequest& request);

 protected:
  virtual std::string do_chat(const ChatRequest& request) = 0;
};

class TextToImage {
 public:
  virtual ~TextToImage() = default;
  /// Square RGBA raster of side size_px; size_px must be in [64, 2048].
  RasterRgba t2i(const std::string& prompt, std::uint64_t seed, int size_px);

 protected:
  virtual RasterRgba do_t2i(const std::string& prompt, std::uint64_t seed, int size_px) = 0;
};

class Detector {
 public:
  virtual ~Detector() = default;
  /// Detections with confidence >= conf_floor, sorted by confidence descending,
  /// boxes clamped to the image.
  std::vector<Detection> detect(const SceneImage& image, const std::string& model_id,
                                double conf_floor);

 protected:
  virtual std::vector<Detection> do_detect(const SceneImage& image, const std::string& model_id,
                                           double conf_floor) = 0;
};

class Segmenter {
 public:
  virtual ~Segmenter() = default;
  /// At least one region, indices 1..n, boxes inside the scene.
  std::vector<Region> segment(const SceneImage& scene);

 protected:
  virtual std::vector<Region> do_segment(const SceneImage& scene) = 0;
};

/// Stable sort by confidence descending; ties keep input order.
void sort_by_confidence(std::vector<Detection>& detections);

struct Backends {
  std::shared_ptr<ChatBackend> llm;
  std::shared_ptr<TextToImage> t2i;
  std::shared_ptr<Detector> detector;
  std::shared_ptr<Segmenter> segmenter;
};

/// Exponential backoff: retry k (0-based) waits base * 2^k.
struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds base{500};
  std::function<void(std::chrono::milliseconds)> sleep;  // empty: std::this_thread::sleep_for
};

void detail_sleep(std::chrono::milliseconds wait);

/// Runs fn, retrying retryable BackendErrors up to policy.max_retries times.
template <typename Fn>
auto with_retry(const RetryPolicy& policy, Fn&& fn) -> decltype(fn()) {
  for (int attempt = 0;; ++attempt) {
    try {
      return fn();
    } catch (const BackendError& e) {
      if (!e.retryable() || attempt >= policy.max_retries) throw;
      const auto wait = policy.base * (1LL << attempt);
      if (policy.sleep) policy.sleep(wait);
      else detail_sleep(wait);
    }
  }
}

/// Builds the configured backends: mocks, or remote clients whose endpoints
/// may be overridden by MAGIC_LLM_ENDPOINT / MAGIC_LLM_KEY / MAGIC_SIDECAR_ENDPOINT.
Backends make_backends(const BackendConfig& config);

}  // namespace magic
