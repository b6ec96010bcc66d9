#include "magic/agent_io.hpp"

#include <spdlog/spdlog.h>

namespace magic {

const AssetStore& assets_of(const AgentSettings& settings) {
  if (!settings.assets) throw std::invalid_argument("agent settings have no asset store");
  return *settings.assets;
}

ChatRequest make_request(const AgentSettings& settings, std::string system, std::string user,
                         std::vector<std::string> images_png) {
  ChatRequest req;
  req.system = std::move(system);
  req.messages.push_back({"user", std::move(user), std::move(images_png)});
  req.temperature = settings.temperature;
  req.seed = settings.seed;
  return req;
}

StructuredReply ask_structured(ChatBackend& llm, const AgentSettings& settings, ChatRequest request,
                               const ReplyCheck& check) {
  StructuredReply out;
  for (int attempt = 0; attempt <= settings.max_reasks; ++attempt) {
    ++out.attempts;
    const std::string reply = llm.chat(request);
    std::string error;
    auto parsed = parse_fenced_json(reply, &error);
    std::vector<std::string> problems;
    if (!parsed) {
      problems.push_back(error.empty() ? "no fenced JSON block" : error);
    } else {
      try {
        problems = check(*parsed);
      } catch (const json::exception& e) {
        problems.push_back(e.what());
      }
    }
    if (problems.empty()) {
      out.value = std::move(parsed);
      out.problems.clear();
      return out;
    }
    out.problems = problems;
    if (attempt == settings.max_reasks) break;
    spdlog::debug("re-asking after unusable reply: {}", problems.front());

    std::string listed;
    for (const auto& p : problems) listed += "- " + p + "\n";
    if (!listed.empty()) listed.pop_back();
    request.messages.push_back({"assistant", reply, {}});
    request.messages.push_back(
        {"user", fill_template(assets_of(settings).text("prompts/reask.txt"), {{"PROBLEMS", listed}}), {}});
  }
  return out;
}

json ask_structured_or_throw(ChatBackend& llm, const AgentSettings& settings, ChatRequest request,
                             const ReplyCheck& check, const std::string& what) {
  auto reply = ask_structured(llm, settings, std::move(request), check);
  if (!reply.value) {
    std::string detail = what + ": unusable reply after " + std::to_string(reply.attempts) + " attempts";
    if (!reply.problems.empty()) detail += " (" + reply.problems.front() + ")";
    throw BackendError(BackendErrorKind::malformed_response, detail);
  }
  return *reply.value;
}

std::string pipeline_text(const AssetStore& assets, const std::string& category) {
  return fill_template(assets.text("prompts/pipeline_description.txt"), {{"CATEGORY", category}});
}

}  // namespace magic
