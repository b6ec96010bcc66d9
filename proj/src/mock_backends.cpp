#include "magic/mock_backends.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "magic/util.hpp"

namespace magic {

// ---------------------------------------------------------------------------
// MockChat

MockChat::MockChat(const MockChat& other) { *this = other; }

MockChat& MockChat::operator=(const MockChat& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mutex_, other.mutex_);
  fixtures_ = other.fixtures_;
  rules_ = other.rules_;
  default_reply_ = other.default_reply_;
  calls_ = other.calls_;
  return *this;
}

std::vector<ChatRule> MockChat::rules() const {
  std::lock_guard lock(mutex_);
  return rules_;
}

MockChat& MockChat::add_fixture(const std::string& request_hash, std::string reply) {
  std::lock_guard lock(mutex_);
  fixtures_[request_hash] = std::move(reply);
  return *this;
}

MockChat& MockChat::add_rule(ChatRule rule) {
  std::lock_guard lock(mutex_);
  rules_.push_back(std::move(rule));
  return *this;
}

MockChat& MockChat::prepend_rule(ChatRule rule) {
  std::lock_guard lock(mutex_);
  rules_.insert(rules_.begin(), std::move(rule));
  return *this;
}

MockChat& MockChat::set_default(std::string reply) {
  std::lock_guard lock(mutex_);
  default_reply_ = std::move(reply);
  return *this;
}

namespace {

ChatRuleScope parse_scope(const std::string& s) {
  if (s == "last_message" || s.empty()) return ChatRuleScope::last_message;
  if (s == "any_message") return ChatRuleScope::any_message;
  if (s == "system") return ChatRuleScope::system;
  throw std::invalid_argument("unknown chat rule scope: " + s);
}

bool rule_matches(const ChatRule& rule, const ChatRequest& req) {
  switch (rule.scope) {
    case ChatRuleScope::system:
      return req.system.find(rule.contains) != std::string::npos;
    case ChatRuleScope::last_message:
      return !req.messages.empty() &&
             req.messages.back().content.find(rule.contains) != std::string::npos;
    case ChatRuleScope::any_message:
      return std::any_of(req.messages.begin(), req.messages.end(), [&](const ChatMessage& m) {
        return m.content.find(rule.contains) != std::string::npos;
      });
  }
  return false;
}

std::string fenced(const json& j) { return "```json\n" + j.dump() + "\n```"; }

}  // namespace

MockChat MockChat::from_json(const json& j) {
  MockChat chat;
  if (j.contains("fixtures")) {
    for (const auto& [hash, reply] : j["fixtures"].items()) chat.add_fixture(hash, reply.get<std::string>());
  }
  if (j.contains("rules")) {
    for (const auto& r : j["rules"]) {
      chat.add_rule({r.at("contains").get<std::string>(), parse_scope(r.value("scope", std::string{})),
                     r.at("reply").get<std::string>()});
    }
  }
  if (j.contains("default")) chat.set_default(j["default"].get<std::string>());
  return chat;
}

MockChat MockChat::from_file(const std::string& path) {
  json j = json::parse(read_text(path), nullptr, false);
  if (j.is_discarded()) throw std::runtime_error("invalid chat fixture file: " + path);
  return from_json(j);
}

MockChat MockChat::canned_agents() {
  MockChat chat;
  chat.add_rule({"REQUEST: describe_scene", ChatRuleScope::any_message,
                 fenced({{"summary", "an urban street corner with a building facade and a pavement"},
                         {"salient_objects", {"building", "wall", "pavement", "pole"}},
                         {"style_tags", {"daylight", "concrete", "muted palette"}}})});
  chat.add_rule({"REQUEST: refine_prompt", ChatRuleScope::any_message,
                 fenced({{"other_features", {"printed on weathered paper"}},
                         {"background", "a plain grey wall"}})});
  chat.add_rule({"REQUEST: propose_plan", ChatRuleScope::any_message,
                 fenced({{"method", "paint"},
                         {"region_index", 5},
                         {"anchor", {0.5, 0.5}},
                         {"scale", 0.12},
                         {"rotation_deg", 0},
                         {"position", "center"},
                         {"rationale", "forward-facing wall at eye level"}})});
  chat.add_rule({"REQUEST: naturality", ChatRuleScope::any_message,
                 fenced({{"score", 82}, {"rationale", "blends with the wall texture"}})});
  chat.add_rule(
      {"REQUEST: directives", ChatRuleScope::any_message,
       fenced({{"suggestions",
                {{{"suggestion", "make the text cursive"},
                  {"target", "gagent"},
                  {"kind", "refine"},
                  {"feature", "text"},
                  {"detail", "cursive"},
                  {"rank", 1}},
                 {{"suggestion", "move the poster slightly lower on the wall"},
                  {"target", "dagent"},
                  {"kind", "refine"},
                  {"feature", "placement"},
                  {"detail", "slightly lower"},
                  {"rank", 2}}}}})});
  return chat;
}

std::size_t MockChat::call_count() const {
  std::lock_guard lock(mutex_);
  return calls_.size();
}

std::vector<ChatRequest> MockChat::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

std::string MockChat::do_chat(const ChatRequest& request) {
  const std::string hash = request.hash();
  std::lock_guard lock(mutex_);
  calls_.push_back(request);
  if (auto it = fixtures_.find(hash); it != fixtures_.end()) return it->second;
  for (const auto& rule : rules_) {
    if (rule_matches(rule, request)) return rule.reply;
  }
  if (default_reply_) return *default_reply_;
  throw BackendError(BackendErrorKind::malformed_response, "no mock reply for request " + hash);
}

// ---------------------------------------------------------------------------
// MockTextToImage

namespace {

struct Rgb {
  std::uint8_t r, g, b;
};

Rgb random_color(Rng& rng) {
  const auto v = rng.next();
  return {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
          static_cast<std::uint8_t>(v >> 16)};
}

bool same(Rgb a, Rgb b) { return a.r == b.r && a.g == b.g && a.b == b.b; }

void put(RasterRgba& img, int x, int y, Rgb c) {
  auto px = img.at(x, y);
  px[0] = c.r, px[1] = c.g, px[2] = c.b, px[3] = 255;
}

}  // namespace

RasterRgba MockTextToImage::do_t2i(const std::string& prompt, std::uint64_t seed, int size_px) {
  Rng rng(derive_seed(seed, prompt));
  const int n = size_px;
  RasterRgba img(n, n);
  const Rgb bg = random_color(rng);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) put(img, x, y, bg);

  // Each glyph covers at most 8% of the canvas, so the background stays the
  // majority colour with up to six glyphs.
  const int glyphs = 3 + static_cast<int>(rng.below(4));
  for (int g = 0; g < glyphs; ++g) {
    Rgb color = random_color(rng);
    if (same(color, bg)) color.r ^= 0x80;
    const int kind = static_cast<int>(rng.below(3));
    const int w = std::max(1, static_cast<int>(n * rng.uniform(0.10, 0.28)));
    const int h = std::max(1, static_cast<int>(n * rng.uniform(0.10, 0.28)));
    const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(n - w + 1)));
    const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(n - h + 1)));
    for (int y = y0; y < y0 + h; ++y) {
      for (int x = x0; x < x0 + w; ++x) {
        bool inside = true;
        if (kind == 1) {  // ellipse
          const double dx = (x + 0.5 - x0 - w / 2.0) / (w / 2.0);
          const double dy = (y + 0.5 - y0 - h / 2.0) / (h / 2.0);
          inside = dx * dx + dy * dy <= 1.0;
        } else if (kind == 2) {  // triangle, apex at top centre
          const double t = (y + 0.5 - y0) / h;
          const double half = t * w / 2.0;
          inside = std::abs(x + 0.5 - x0 - w / 2.0) <= half;
        }
        if (inside) put(img, x, y, color);
      }
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// MockDetector

std::uint32_t signature_color(const RasterRgba& raster) {
  std::unordered_map<std::uint32_t, std::size_t> counts;
  for (std::size_t i = 0; i + 3 < raster.data.size(); i += 4) {
    if (raster.data[i + 3] != 255) continue;
    const std::uint32_t c = (std::uint32_t{raster.data[i]} << 16) |
                            (std::uint32_t{raster.data[i + 1]} << 8) | raster.data[i + 2];
    ++counts[c];
  }
  if (counts.empty()) throw std::invalid_argument("raster has no opaque pixels");
  std::uint32_t best = 0;
  std::size_t best_n = 0;
  for (const auto& [c, k] : counts) {
    if (k > best_n || (k == best_n && c < best)) best = c, best_n = k;
  }
  return best;
}

MockDetector::MockDetector(const MockDetector& other) { *this = other; }

MockDetector& MockDetector::operator=(const MockDetector& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mutex_, other.mutex_);
  fixtures_ = other.fixtures_;
  rules_ = other.rules_;
  min_match_pixels_ = other.min_match_pixels_;
  calls_ = other.calls_;
  return *this;
}

MockDetector& MockDetector::add_fixture(DetectorFixture fixture) {
  std::lock_guard lock(mutex_);
  fixtures_.push_back(std::move(fixture));
  return *this;
}

MockDetector& MockDetector::add_rule(DetectorRule rule) {
  std::lock_guard lock(mutex_);
  rules_.push_back(std::move(rule));
  return *this;
}

MockDetector& MockDetector::register_patch(const RasterRgba& patch, const std::string& label,
                                           double confidence, const std::string& model) {
  return add_rule({signature_color(patch), model, label, confidence});
}

MockDetector& MockDetector::set_min_match_pixels(int n) {
  std::lock_guard lock(mutex_);
  min_match_pixels_ = n;
  return *this;
}

namespace {

std::uint32_t parse_hex_color(const std::string& s) {
  if (s.size() != 7 || s[0] != '#') throw std::invalid_argument("colour must be #rrggbb: " + s);
  return static_cast<std::uint32_t>(std::stoul(s.substr(1), nullptr, 16));
}

}  // namespace

MockDetector MockDetector::from_json(const json& j) {
  MockDetector det;
  for (const auto& f : j.value("fixtures", json::array())) {
    det.add_fixture({f.at("image").get<std::string>(), f.value("model", std::string("*")),
                     f.at("detections").get<std::vector<Detection>>()});
  }
  for (const auto& r : j.value("rules", json::array())) {
    det.add_rule({parse_hex_color(r.at("color").get<std::string>()), r.value("model", std::string("*")),
                  r.at("label").get<std::string>(), r.at("confidence").get<double>()});
  }
  if (j.contains("min_match_pixels")) det.set_min_match_pixels(j["min_match_pixels"].get<int>());
  return det;
}

MockDetector MockDetector::from_file(const std::string& path) {
  json j = json::parse(read_text(path), nullptr, false);
  if (j.is_discarded()) throw std::runtime_error("invalid detector fixture file: " + path);
  return from_json(j);
}

std::size_t MockDetector::call_count() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

std::vector<Detection> MockDetector::do_detect(const SceneImage& image, const std::string& model_id,
                                               double /*conf_floor*/) {
  std::lock_guard lock(mutex_);
  ++calls_;
  auto model_ok = [&](const std::string& m) { return m == "*" || m == model_id; };

  std::string pixel_hash;
  for (const auto& f : fixtures_) {
    if (!model_ok(f.model)) continue;
    if (f.image == image.id) return f.detections;
    if (f.image.size() == 64) {
      if (pixel_hash.empty()) {
        pixel_hash = sha256_hex(std::string_view(reinterpret_cast<const char*>(image.pixels.data.data()),
                                                 image.pixels.data.size()));
      }
      if (f.image == pixel_hash) return f.detections;
    }
  }

  std::vector<Detection> out;
  for (const auto& rule : rules_) {
    if (!model_ok(rule.model)) continue;
    const auto r = static_cast<std::uint8_t>(rule.color >> 16);
    const auto g = static_cast<std::uint8_t>(rule.color >> 8);
    const auto b = static_cast<std::uint8_t>(rule.color);
    int count = 0;
    int x0 = image.width(), y0 = image.height(), x1 = -1, y1 = -1;
    for (int y = 0; y < image.height(); ++y) {
      for (int x = 0; x < image.width(); ++x) {
        const auto px = image.pixels.at(x, y);
        if (px[0] != r || px[1] != g || px[2] != b) continue;
        ++count;
        x0 = std::min(x0, x), y0 = std::min(y0, y);
        x1 = std::max(x1, x), y1 = std::max(y1, y);
      }
    }
    if (count >= min_match_pixels_) {
      out.push_back({rule.label, rule.confidence, {x0, y0, x1 - x0 + 1, y1 - y0 + 1}});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// MockSegmenter

MockSegmenter MockSegmenter::from_file(const std::string& path) {
  json j = json::parse(read_text(path), nullptr, false);
  if (j.is_discarded()) throw std::runtime_error("invalid region catalog: " + path);
  const json& list = j.is_object() ? j.at("regions") : j;
  return MockSegmenter(list.get<std::vector<Region>>());
}

std::vector<Region> MockSegmenter::do_segment(const SceneImage& scene) {
  if (!catalog_.empty()) return catalog_;
  const int w = scene.width();
  const int h = scene.height();
  static const char* const kRowLabels[] = {"building facade", "wall", "pavement"};
  std::vector<Region> out;
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col < 3; ++col) {
      Region r;
      r.index = row * 3 + col + 1;
      const int x0 = col * w / 3, x1 = (col + 1) * w / 3;
      const int y0 = row * h / 3, y1 = (row + 1) * h / 3;
      r.bbox = {x0, y0, x1 - x0, y1 - y0};
      r.label = kRowLabels[row];
      out.push_back(std::move(r));
    }
  }
  Region pole;
  pole.index = 10;
  const int px0 = w * 90 / 100, px1 = w * 96 / 100;
  const int py0 = h * 10 / 100, py1 = h * 95 / 100;
  pole.bbox = {px0, py0, px1 - px0, py1 - py0};
  pole.label = "pole";
  out.push_back(std::move(pole));
  return out;
}

Backends make_mock_backends(const BackendConfig& config) {
  Backends b;
  auto chat = std::make_shared<MockChat>();
  if (!config.mock_chat_fixtures.empty()) {
    *chat = MockChat::from_file(config.mock_chat_fixtures);
  }
  // Canned rules come last so fixture files only need to cover what they change.
  for (auto& rule : MockChat::canned_agents().rules()) chat->add_rule(rule);
  b.llm = chat;
  b.t2i = std::make_shared<MockTextToImage>();
  b.detector = config.mock_detector_fixtures.empty()
                   ? std::make_shared<MockDetector>()
                   : std::make_shared<MockDetector>(MockDetector::from_file(config.mock_detector_fixtures));
  b.segmenter = config.mock_segmenter_catalog.empty()
                    ? std::make_shared<MockSegmenter>()
                    : std::make_shared<MockSegmenter>(MockSegmenter::from_file(config.mock_segmenter_catalog));
  return b;
}

}  // namespace magic
