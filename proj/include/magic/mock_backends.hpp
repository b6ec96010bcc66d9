#pragma once

#include <array>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "magic/backends.hpp"

namespace magic {

/// Where a chat rule looks for its substring.
enum class ChatRuleScope { last_message, any_message, system };

struct ChatRule {
  std::string contains;
  ChatRuleScope scope = ChatRuleScope::last_message;
  std::string reply;
};

/// Replays canned replies. The reply is a pure function of the request:
/// exact fixtures (by request hash) win, then the first matching rule, then
/// the default reply. Unmatched requests raise malformed_response.
class MockChat final : public ChatBackend {
 public:
  MockChat() = default;
  MockChat(const MockChat& other);
  MockChat& operator=(const MockChat& other);

  MockChat& add_fixture(const std::string& request_hash, std::string reply);
  MockChat& add_rule(ChatRule rule);
  /// Inserted ahead of existing rules.
  MockChat& prepend_rule(ChatRule rule);
  MockChat& set_default(std::string reply);

  /// {"fixtures": {hash: reply}, "rules": [{contains, scope, reply}], "default": reply}
  static MockChat from_json(const json& j);
  static MockChat from_file(const std::string& path);

  /// Rules that answer every agent request kind with a well-formed reply; the
  /// plan reply targets the centre cell of the mock segmenter grid.
  static MockChat canned_agents();

  [[nodiscard]] std::size_t call_count() const;
  [[nodiscard]] std::vector<ChatRequest> calls() const;
  [[nodiscard]] std::vector<ChatRule> rules() const;

 protected:
  std::string do_chat(const ChatRequest& request) override;

 private:
  std::map<std::string, std::string> fixtures_;
  std::vector<ChatRule> rules_;
  std::optional<std::string> default_reply_;
  mutable std::mutex mutex_;
  std::vector<ChatRequest> calls_;
};

/// Procedural T2I: solid background plus geometric glyphs, all drawn from a
/// generator seeded by hash(prompt, seed). Distinct prompts give distinct images.
class MockTextToImage final : public TextToImage {
 protected:
  RasterRgba do_t2i(const std::string& prompt, std::uint64_t seed, int size_px) override;
};

/// Most frequent opaque colour of a raster, packed 0xRRGGBB; ties go to the
/// smaller value. Used as the presence signature of mock patches.
std::uint32_t signature_color(const RasterRgba& raster);

struct DetectorFixture {
  std::string image;         // scene id or sha256 of the raster bytes
  std::string model = "*";   // "*" matches any model
  std::vector<Detection> detections;
};

struct DetectorRule {
  std::uint32_t color = 0;   // patch signature colour
  std::string model = "*";
  std::string label;
  double confidence = 0.0;
};

/// Fixture replay per composite id, plus rules that emit a label when a
/// registered patch's signature colour covers at least min_match_pixels of the
/// image; the box is the extent of the matching pixels.
class MockDetector final : public Detector {
 public:
  MockDetector() = default;
  MockDetector(const MockDetector& other);
  MockDetector& operator=(const MockDetector& other);

  MockDetector& add_fixture(DetectorFixture fixture);
  MockDetector& add_rule(DetectorRule rule);
  MockDetector& register_patch(const RasterRgba& patch, const std::string& label,
                               double confidence, const std::string& model = "*");
  MockDetector& set_min_match_pixels(int n);

  /// {"fixtures": [...], "rules": [{"color": "#rrggbb", ...}], "min_match_pixels": n}
  static MockDetector from_json(const json& j);
  static MockDetector from_file(const std::string& path);

  [[nodiscard]] std::size_t call_count() const;

 protected:
  std::vector<Detection> do_detect(const SceneImage& image, const std::string& model_id,
                                   double conf_floor) override;

 private:
  mutable std::mutex mutex_;
  std::vector<DetectorFixture> fixtures_;
  std::vector<DetectorRule> rules_;
  int min_match_pixels_ = 16;
  std::size_t calls_ = 0;
};

/// 3x3 grid of flat regions (facade / wall / pavement rows) plus one pole on
/// the right, or a fixed catalog when one is loaded.
class MockSegmenter final : public Segmenter {
 public:
  MockSegmenter() = default;
  explicit MockSegmenter(std::vector<Region> catalog) : catalog_(std::move(catalog)) {}

  /// JSON list of regions ({index, bbox:[x,y,w,h], label}).
  static MockSegmenter from_file(const std::string& path);

 protected:
  std::vector<Region> do_segment(const SceneImage& scene) override;

 private:
  std::vector<Region> catalog_;
};

/// Mock backends wired together with canned agent replies.
Backends make_mock_backends(const BackendConfig& config = {});

}  // namespace magic
