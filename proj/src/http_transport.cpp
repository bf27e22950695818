// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

#include "lmslice/annotator.hpp"

#include <cstdlib>

// After the project headers: resolv.h, pulled in here, defines a macro
// named _res that collides with Eigen parameter names.
#include "httplib.h"
#include "json.hpp"

namespace lmslice::annotate {

using json = nlohmann::json;

HttpTransport::HttpTransport(HttpConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.api_style != "openai" && cfg_.api_style != "anthropic") {
    throw AnnotationError("api_style must be openai or anthropic, got '" + cfg_.api_style + "'");
  }
  const auto scheme_end = cfg_.url.find("://");
  if (scheme_end == std::string::npos) throw AnnotationError("transport url lacks a scheme: " + cfg_.url);
  const auto path_start = cfg_.url.find('/', scheme_end + 3);
  scheme_host_port_ = cfg_.url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : cfg_.url.substr(path_start);
  if (!cfg_.auth_env.empty()) {
    const char* tok = std::getenv(cfg_.auth_env.c_str());
    if (tok == nullptr || *tok == '\0') {
      throw AnnotationError("auth environment variable " + cfg_.auth_env + " is not set");
    }
    token_ = tok;
  }
}

std::string HttpTransport::complete(const std::string& prompt) {
  httplib::Client client(scheme_host_port_);
  const auto secs = static_cast<time_t>(cfg_.timeout_seconds);
  client.set_connection_timeout(secs, 0);
  client.set_read_timeout(secs, 0);
  client.set_write_timeout(secs, 0);

  httplib::Headers headers;
  json body = {{"model", cfg_.model},
               {"max_tokens", cfg_.max_tokens},
               {"messages", json::array({{{"role", "user"}, {"content", prompt}}})}};
  if (cfg_.api_style == "openai") {
    body["temperature"] = 0;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
  } else {
    headers.emplace("anthropic-version", "2023-06-01");
    if (!token_.empty()) headers.emplace("x-api-key", token_);
  }

  auto res = client.Post(path_, headers, body.dump(-1, ' ', false, json::error_handler_t::replace),
                         "application/json");
  if (!res) {
    throw TransportError("request to " + cfg_.url + " failed: " + httplib::to_string(res.error()),
                         true);
  }
  if (res->status == 429 || res->status >= 500) {
    throw TransportError("HTTP " + std::to_string(res->status) + " from " + cfg_.url, true);
  }
  if (res->status != 200) {
    throw TransportError("HTTP " + std::to_string(res->status) + " from " + cfg_.url + ": " +
                             res->body.substr(0, 200),
                         false);
  }
  try {
    const auto j = json::parse(res->body);
    if (cfg_.api_style == "openai") {
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    }
    std::string text;
    for (const auto& block : j.at("content")) {
      if (block.value("type", "") == "text") text += block.at("text").get<std::string>();
    }
    return text;
  } catch (const json::exception& e) {
    throw TransportError(std::string("unexpected response body: ") + e.what(), false);
  }
}

}  // namespace lmslice::annotate
