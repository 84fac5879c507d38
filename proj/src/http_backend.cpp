#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "pgh/http_backend.hpp"

#include <fmt/format.h>
#include <httplib.h>

#include <cstdlib>
#include <json.hpp>

#include "pgh/error.hpp"

namespace pgh {

using nlohmann::json;

SplitUrl split_base_url(const std::string& base_url) {
  auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(Errc::config_invalid, "base_url needs a scheme: " + base_url);
  }
  auto path_start = base_url.find('/', scheme_end + 3);
  SplitUrl out;
  if (path_start == std::string::npos) {
    out.origin = base_url;
  } else {
    out.origin = base_url.substr(0, path_start);
    out.path = base_url.substr(path_start);
  }
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

std::string HttpChatBackend::do_complete(const ModelEndpoint& endpoint,
                                         const RenderedPrompt& prompt) {
  auto url = split_base_url(endpoint.base_url);
  httplib::Client client(url.origin);
  auto secs = static_cast<time_t>(endpoint.timeout_seconds);
  client.set_connection_timeout(secs, 0);
  client.set_read_timeout(secs, 0);
  client.set_write_timeout(secs, 0);

  httplib::Headers headers;
  if (!endpoint.credentials_env.empty()) {
    const char* key = std::getenv(endpoint.credentials_env.c_str());
    if (key == nullptr || *key == '\0') {
      throw Error(Errc::auth_error,
                  fmt::format("environment variable {} is not set", endpoint.credentials_env));
    }
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  json body = {
      {"model", endpoint.model_name.empty() ? endpoint.model_id : endpoint.model_name},
      {"temperature", ModelEndpoint::temperature},
      {"messages",
       json::array({{{"role", "system"}, {"content", prompt.system_text}},
                    {{"role", "user"}, {"content", prompt.user_text}}})},
  };

  auto res = client.Post(url.path + "/chat/completions", headers, body.dump(), "application/json");
  if (!res) {
    throw Error(Errc::transport_error,
                fmt::format("{}: {}", endpoint.base_url, httplib::to_string(res.error())));
  }
  if (res->status == 401 || res->status == 403) {
    throw Error(Errc::auth_error, fmt::format("{} returned HTTP {}", endpoint.model_id, res->status));
  }
  if (res->status == 429) {
    double retry_after = 0;
    if (res->has_header("Retry-After")) {
      retry_after = std::atof(res->get_header_value("Retry-After").c_str());
    }
    throw RateLimitedError(fmt::format("{} rate limited", endpoint.model_id), retry_after);
  }
  if (res->status != 200) {
    throw Error(Errc::transport_error,
                fmt::format("{} returned HTTP {}", endpoint.model_id, res->status));
  }
  auto doc = json::parse(res->body, nullptr, false);
  try {
    return doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw Error(Errc::transport_error, endpoint.model_id + ": malformed completion body");
  }
}

}  // namespace pgh
