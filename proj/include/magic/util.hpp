#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>

#include <json.hpp>

namespace magic {

using json = nlohmann::json;

std::string sha256_hex(std::string_view bytes);
std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Derives an independent stream seed from a base seed and a salt.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt);
std::uint64_t derive_seed(std::uint64_t base, std::string_view salt);

/// Seeded generator with platform-stable sampling. std::uniform_*_distribution
/// is implementation-defined, so sampling is done from raw 64-bit draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  /// Uniform integer in [0, n), rejection-sampled.
  std::uint64_t below(std::uint64_t n);
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

/// Extracts the first fenced code block (```json ... ``` or ``` ... ```), or the
/// first balanced top-level JSON object when the reply has no fence.
std::optional<std::string> extract_fenced_block(std::string_view reply);

/// Parses the fenced block of an agent reply into an object; nullopt when absent or invalid.
std::optional<json> parse_fenced_json(std::string_view reply, std::string* error = nullptr);

std::string read_text(const std::filesystem::path& path);
/// Write-to-temp then rename so readers never observe a partial file.
void write_text_atomic(const std::filesystem::path& path, std::string_view text);
void append_line(const std::filesystem::path& path, std::string_view line);

/// Truncates (not rounds) to two decimals: 80.666 -> 80.66.
double truncate2(double value);
std::string format2(double value);

std::string to_lower(std::string_view s);
std::string utc_timestamp();

}  // namespace magic
