// Copyright 2026 The stilab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Live keyword extraction over HTTP.
//
// Request:  POST <endpoint>  {"prompt": ..., "temperature": ..., "max_tokens": ...}
// Response: JSON with the completion in one of
//   {"text": "..."}
//   {"choices": [{"text": "..."}]}
//   {"choices": [{"message": {"content": "..."}}]}

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "stilab/attributes.h"
#include "stilab/error.h"

namespace stilab::attributes {
namespace {

using json = nlohmann::json;

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl SplitUrl(const std::string &url) {
  const std::size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument,
                "extractor endpoint is not a URL: '" + url + "'");
  }
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http") {
    throw Error(ErrorCode::kUnreachable,
                "unsupported scheme '" + scheme + "' in '" + url + "'");
  }
  const std::size_t path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.origin = url.substr(0, path_start);
  out.path = path_start == std::string::npos ? "/" : url.substr(path_start);
  return out;
}

// One lock per endpoint: requests to the same endpoint are serialized.
std::mutex &EndpointLock(const std::string &endpoint) {
  static std::mutex registry_mu;
  static std::map<std::string, std::unique_ptr<std::mutex>> locks;
  std::lock_guard<std::mutex> guard(registry_mu);
  auto &slot = locks[endpoint];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

std::string CompletionText(const json &body) {
  if (body.contains("text") && body["text"].is_string()) {
    return body["text"].get<std::string>();
  }
  if (body.contains("choices") && body["choices"].is_array() &&
      !body["choices"].empty()) {
    const json &choice = body["choices"][0];
    if (choice.contains("text") && choice["text"].is_string()) {
      return choice["text"].get<std::string>();
    }
    if (choice.contains("message") && choice["message"].is_object() &&
        choice["message"].contains("content") &&
        choice["message"]["content"].is_string()) {
      return choice["message"]["content"].get<std::string>();
    }
  }
  throw Error(ErrorCode::kParse, "unrecognized completion response");
}

}  // namespace

std::vector<std::string> ExtractViaEndpoint(
    std::string_view class_name, std::string_view description,
    const ExtractionClientConfig &config) {
  const ParsedUrl url = SplitUrl(config.endpoint);
  const json request = {
      {"prompt",
       RenderPrompt(config.prompt_template, class_name, description)},
      {"temperature", config.sampling_temperature},
      {"max_tokens", config.max_output_tokens}};

  httplib::Result result;
  {
    std::lock_guard<std::mutex> guard(EndpointLock(config.endpoint));
    httplib::Client client(url.origin);
    const auto secs = static_cast<time_t>(config.timeout_seconds);
    const auto usecs = static_cast<time_t>(
        (config.timeout_seconds - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    result = client.Post(url.path, request.dump(), "application/json");
  }
  if (!result) {
    throw Error(ErrorCode::kUnreachable,
                config.endpoint + ": " + httplib::to_string(result.error()));
  }
  if (result->status != 200) {
    throw Error(ErrorCode::kUnreachable,
                config.endpoint + ": HTTP " + std::to_string(result->status));
  }
  json body;
  try {
    body = json::parse(result->body);
  } catch (const json::parse_error &e) {
    throw Error(ErrorCode::kParse,
                config.endpoint + ": response is not JSON: " + e.what());
  }
  const std::string text = CompletionText(body);
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw Error(ErrorCode::kEmptyCompletion,
                config.endpoint + " returned an empty completion");
  }
  return ParseCompletion(text);
}

}  // namespace stilab::attributes
