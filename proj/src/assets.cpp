#include "magic/assets.hpp"

#include <cstdlib>
#include <sstream>
#include <stdexcept>

namespace magic {

AssetStore::AssetStore(std::filesystem::path dir) : root_(std::move(dir)) {
  if (root_.empty()) {
    if (const char* env = std::getenv("MAGIC_ASSET_DIR"); env && *env) root_ = env;
    else root_ = MAGIC_DEFAULT_ASSET_DIR;
  }
  if (!std::filesystem::is_directory(root_)) {
    throw std::runtime_error("asset directory not found: " + root_.string());
  }
}

std::string AssetStore::text(const std::string& relative) const {
  const std::string raw = read_text(root_ / relative);
  std::istringstream in(raw);
  std::string line;
  std::string out;
  while (std::getline(in, line)) {
    if (line.rfind(";;", 0) == 0) continue;
    out += line;
    out += '\n';
  }
  while (!out.empty() && (out.back() == '\n' || out.back() == ' ')) out.pop_back();
  return out;
}

json AssetStore::json_asset(const std::string& relative) const {
  const auto path = root_ / relative;
  json j = json::parse(read_text(path), nullptr, false);
  if (j.is_discarded()) throw std::runtime_error("invalid JSON asset: " + path.string());
  return j;
}

std::string fill_template(std::string text, const std::map<std::string, std::string>& slots) {
  for (const auto& [name, value] : slots) {
    const std::string key = "{" + name + "}";
    std::size_t pos = 0;
    while ((pos = text.find(key, pos)) != std::string::npos) {
      text.replace(pos, key.size(), value);
      pos += value.size();
    }
  }
  return text;
}

}  // namespace magic
