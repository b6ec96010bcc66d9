#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "magic/assets.hpp"
#include "magic/backends.hpp"

namespace magic {

/// Shared knobs of the three agents.
struct AgentSettings {
  const AssetStore* assets = nullptr;
  double temperature = 0.7;
  std::optional<std::uint64_t> seed;
  int max_reasks = 2;
  int png_compression = 1;  // attachments only
};

/// Checks a parsed reply; returns the problems, empty when usable.
using ReplyCheck = std::function<std::vector<std::string>(const json&)>;

struct StructuredReply {
  std::optional<json> value;           // set when some attempt passed the check
  std::vector<std::string> problems;   // problems of the last failed attempt
  int attempts = 0;
};

/// Sends the request and parses the fenced JSON block of the reply. On a parse
/// or check failure the reply and a re-ask quoting the problems are appended
/// to the conversation, up to settings.max_reasks times.
StructuredReply ask_structured(ChatBackend& llm, const AgentSettings& settings, ChatRequest request,
                               const ReplyCheck& check);

/// Same, but an unusable final reply raises BackendError{malformed_response}.
json ask_structured_or_throw(ChatBackend& llm, const AgentSettings& settings, ChatRequest request,
                             const ReplyCheck& check, const std::string& what);

/// Single user message with optional PNG attachments.
ChatRequest make_request(const AgentSettings& settings, std::string system, std::string user,
                         std::vector<std::string> images_png = {});

const AssetStore& assets_of(const AgentSettings& settings);

/// Slot values shared by the agent instruction templates.
std::string pipeline_text(const AssetStore& assets, const std::string& category);

}  // namespace magic
