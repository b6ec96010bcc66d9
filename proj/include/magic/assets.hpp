#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "magic/util.hpp"

namespace magic {

/// Read-only view of the asset directory (prompt templates, feature
/// templates, label mappings). Lines starting with ";;" are asset comments and
/// are stripped from text assets.
class AssetStore {
 public:
  /// Empty dir: $MAGIC_ASSET_DIR, else the directory baked in at build time.
  explicit AssetStore(std::filesystem::path dir = {});

  [[nodiscard]] const std::filesystem::path& root() const { return root_; }
  [[nodiscard]] std::string text(const std::string& relative) const;
  [[nodiscard]] json json_asset(const std::string& relative) const;

 private:
  std::filesystem::path root_;
};

/// Replaces every "{SLOT}" with its value. Unknown slots are left verbatim.
std::string fill_template(std::string text, const std::map<std::string, std::string>& slots);

}  // namespace magic
