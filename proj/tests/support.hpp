#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>

#include "magic/agent_io.hpp"
#include "magic/domain.hpp"
#include "magic/util.hpp"

namespace magic::test {

/// Textured deterministic scene: diagonal gradient with seeded speckle.
inline SceneImage make_scene(int w, int h, std::uint64_t seed = 1, std::string id = "scene") {
  SceneImage s{std::move(id), RasterRgb(w, h), ""};
  Rng rng(seed);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      auto p = s.pixels.at(x, y);
      const auto n = static_cast<std::uint8_t>(rng.below(24));
      p[0] = static_cast<std::uint8_t>(60 + (x * 97 / w) + n);
      p[1] = static_cast<std::uint8_t>(70 + (y * 89 / h) + n);
      p[2] = static_cast<std::uint8_t>(90 + ((x + y) * 41 / (w + h)));
    }
  return s;
}

inline RasterRgba solid_rgba(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b, std::uint8_t a = 255) {
  RasterRgba out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      auto p = out.at(x, y);
      p[0] = r, p[1] = g, p[2] = b, p[3] = a;
    }
  return out;
}

/// Fresh directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("magic-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline const AssetStore& assets() {
  static const AssetStore store;
  return store;
}

inline AgentSettings settings(std::uint64_t seed = 0) {
  AgentSettings s;
  s.assets = &assets();
  s.temperature = 0.0;
  s.seed = seed;
  return s;
}

/// Wraps a JSON value as an agent reply.
inline std::string fenced(const json& j) { return "```json\n" + j.dump() + "\n```"; }

}  // namespace magic::test
