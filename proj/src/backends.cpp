#include "magic/backends.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

#include "magic/mock_backends.hpp"
#include "magic/remote_backends.hpp"
#include "magic/util.hpp"

namespace magic {

std::string to_string(BackendErrorKind kind) { return json(kind).get<std::string>(); }

BackendError::BackendError(BackendErrorKind kind, std::string detail)
    : std::runtime_error(to_string(kind) + ": " + detail), kind_(kind), detail_(std::move(detail)) {}

json ChatRequest::canonical_json() const {
  json msgs = json::array();
  for (const auto& m : messages) {
    json images = json::array();
    for (const auto& png : m.images_png) images.push_back(sha256_hex(png));
    msgs.push_back({{"role", m.role}, {"content", m.content}, {"images", images}});
  }
  json j = {{"system", system}, {"messages", msgs}, {"temperature", temperature}};
  j["seed"] = seed ? json(*seed) : json(nullptr);
  return j;
}

std::string ChatRequest::hash() const { return sha256_hex(canonical_json().dump()); }

std::string ChatBackend::chat(const ChatRequest& request) {
  if (request.messages.empty()) {
    throw std::invalid_argument("chat request needs at least one message");
  }
  return do_chat(request);
}

RasterRgba TextToImage::t2i(const std::string& prompt, std::uint64_t seed, int size_px) {
  if (size_px < 64 || size_px > 2048) {
    throw std::invalid_argument("size_px must be in [64, 2048], got " + std::to_string(size_px));
  }
  RasterRgba out = do_t2i(prompt, seed, size_px);
  if (out.width != size_px || out.height != size_px || !out.well_formed()) {
    throw BackendError(BackendErrorKind::malformed_response,
                       "t2i returned " + std::to_string(out.width) + "x" +
                           std::to_string(out.height) + ", expected square " +
                           std::to_string(size_px));
  }
  return out;
}

std::vector<Detection> Detector::detect(const SceneImage& image, const std::string& model_id,
                                        double conf_floor) {
  if (!(conf_floor >= 0.0 && conf_floor <= 1.0)) {
    throw std::invalid_argument("conf_floor must be in [0, 1]");
  }
  auto raw = do_detect(image, model_id, conf_floor);
  std::vector<Detection> out;
  out.reserve(raw.size());
  for (auto& d : raw) {
    if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) {
      throw BackendError(BackendErrorKind::malformed_response,
                         "detection confidence out of range: " + std::to_string(d.confidence));
    }
    if (d.confidence < conf_floor) continue;
    // Clamp to the image.
    const int x0 = std::clamp(d.bbox.x, 0, image.width());
    const int y0 = std::clamp(d.bbox.y, 0, image.height());
    const int x1 = std::clamp(d.bbox.right(), 0, image.width());
    const int y1 = std::clamp(d.bbox.bottom(), 0, image.height());
    d.bbox = {x0, y0, std::max(0, x1 - x0), std::max(0, y1 - y0)};
    out.push_back(std::move(d));
  }
  sort_by_confidence(out);
  return out;
}

std::vector<Region> Segmenter::segment(const SceneImage& scene) {
  auto regions = do_segment(scene);
  for (const auto& r : regions) {
    if (!r.bbox.inside(scene.width(), scene.height())) {
      throw BackendError(BackendErrorKind::malformed_response,
                         "region " + std::to_string(r.index) + " outside the scene");
    }
  }
  return regions;
}

void sort_by_confidence(std::vector<Detection>& detections) {
  std::stable_sort(detections.begin(), detections.end(),
                   [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
}

void detail_sleep(std::chrono::milliseconds wait) { std::this_thread::sleep_for(wait); }

namespace {

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

}  // namespace

Backends make_backends(const BackendConfig& config) {
  if (config.mode == "mock") return make_mock_backends(config);
  if (config.mode != "remote") throw std::invalid_argument("unknown backend mode: " + config.mode);

  RemoteSettings settings;
  settings.llm_endpoint = env_or("MAGIC_LLM_ENDPOINT", config.llm_endpoint);
  settings.llm_path = config.llm_path;
  settings.llm_model = config.llm_model;
  settings.api_key = env_or("MAGIC_LLM_KEY", "");
  settings.sidecar_endpoint = env_or("MAGIC_SIDECAR_ENDPOINT", config.sidecar_endpoint);
  settings.t2i_model = config.t2i_model;
  settings.segmenter_model = config.segmenter_model;
  settings.timeout = std::chrono::milliseconds(static_cast<long long>(config.request_timeout_s * 1000));
  if (settings.llm_endpoint.empty()) throw std::invalid_argument("remote mode needs an LLM endpoint");
  if (settings.sidecar_endpoint.empty()) {
    throw std::invalid_argument("remote mode needs a sidecar endpoint");
  }

  Backends b;
  b.llm = std::make_shared<RemoteChat>(settings);
  auto sidecar = std::make_shared<SidecarClient>(settings);
  b.t2i = sidecar;
  b.detector = sidecar;
  b.segmenter = sidecar;
  return b;
}

}  // namespace magic
