#pragma once

#include <string>

#include "pgh/llm_gateway.hpp"

namespace pgh {

/// OpenAI-compatible chat-completions adapter. POSTs the system and user
/// messages to <base_url>/chat/completions with temperature 0 and returns
/// the first choice's message content.
///
/// 401/403 raise auth_error, 429 raises RateLimitedError carrying the
/// Retry-After seconds, and connection failures, 5xx responses or
/// malformed bodies raise transport_error.
class HttpChatBackend : public Backend {
 private:
  std::string do_complete(const ModelEndpoint& endpoint, const RenderedPrompt& prompt) override;
};

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // "" or "/v1"
};

SplitUrl split_base_url(const std::string& base_url);

}  // namespace pgh
