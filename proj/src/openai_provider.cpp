// Copyright 2026 The UniRule Authors.
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

#include <algorithm>

#include <httplib.h>

#include "unirule/llm.hpp"

namespace unirule::llm {

OpenAiProvider::OpenAiProvider(ProviderConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto scheme_end = config_.base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(Errc::InvalidArgument, "base_url needs a scheme: " + config_.base_url);
  }
  const auto path_start = config_.base_url.find('/', scheme_end + 3);
  scheme_host_port_ = config_.base_url.substr(0, path_start);
  if (path_start != std::string::npos) path_prefix_ = config_.base_url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

json OpenAiProvider::chat_request_body(const ProviderConfig& config,
                                       const std::vector<ChatMessage>& messages,
                                       std::span<const ToolSchema> tools,
                                       const ChatOptions& options) {
  json body{{"model", config.chat_model}, {"temperature", options.temperature}};
  json wire_messages = json::array();
  for (const auto& m : messages) {
    json wire = to_json(m);
    // Assistant turns that only call tools send a null content.
    if (m.role == Role::Assistant && m.content.empty() && !m.tool_calls.empty()) {
      wire["content"] = nullptr;
    }
    wire_messages.push_back(std::move(wire));
  }
  body["messages"] = std::move(wire_messages);
  if (!tools.empty()) {
    json wire_tools = json::array();
    for (const auto& tool : tools) {
      wire_tools.push_back({{"type", "function"},
                            {"function",
                             {{"name", tool.name},
                              {"description", tool.description},
                              {"parameters", tool.parameters}}}});
    }
    body["tools"] = std::move(wire_tools);
  }
  if (options.max_tokens) body["max_tokens"] = *options.max_tokens;
  return body;
}

ChatResponse OpenAiProvider::parse_chat_response(const json& body) {
  try {
    const auto& choices = body.at("choices");
    if (!choices.is_array() || choices.empty()) throw Error(Errc::SchemaError, "response has no choices");
    ChatResponse response;
    response.message = message_from_json(choices.front().at("message"));
    if (const auto usage = body.find("usage"); usage != body.end() && usage->is_object()) {
      response.usage.prompt_tokens = usage->value("prompt_tokens", std::int64_t{0});
      response.usage.completion_tokens = usage->value("completion_tokens", std::int64_t{0});
    }
    return response;
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaError, std::string("unexpected chat response: ") + e.what());
  }
}

std::vector<Embedding> OpenAiProvider::parse_embedding_response(const json& body,
                                                                std::size_t expected) {
  try {
    const auto& data = body.at("data");
    if (!data.is_array() || data.size() != expected) {
      throw Error(Errc::SchemaError, "embedding response has " + std::to_string(data.size()) +
                                         " items, expected " + std::to_string(expected));
    }
    std::vector<Embedding> out(expected);
    std::vector<bool> filled(expected, false);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto index = data[i].value("index", i);
      if (index >= expected || filled[index]) throw Error(Errc::SchemaError, "bad embedding index");
      out[index] = data[i].at("embedding").get<std::vector<float>>();
      filled[index] = true;
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaError, std::string("unexpected embedding response: ") + e.what());
  }
}

json OpenAiProvider::post(const std::string& path, const json& body) {
  httplib::Client client(scheme_host_port_);
  const auto timeout = std::chrono::duration<double>(config_.request_timeout);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  if (!config_.api_key.empty()) client.set_bearer_token_auth(config_.api_key);

  const auto result = client.Post(path_prefix_ + path, body.dump(), "application/json");
  if (!result) {
    throw ProviderFailure("request to " + path + " failed: " + httplib::to_string(result.error()), true);
  }
  const int status = result->status;
  if (status != 200) {
    const bool transient = status >= 500 || status == 429 || status == 408;
    throw ProviderFailure("HTTP " + std::to_string(status) + " from " + path + ": " +
                              result->body.substr(0, 300),
                          transient);
  }
  try {
    return json::parse(result->body);
  } catch (const json::parse_error& e) {
    throw Error(Errc::SchemaError, std::string("response is not JSON: ") + e.what());
  }
}

ChatResponse OpenAiProvider::chat(const std::vector<ChatMessage>& messages,
                                  std::span<const ToolSchema> tools, const ChatOptions& options) {
  return parse_chat_response(post("/chat/completions", chat_request_body(config_, messages, tools, options)));
}

std::vector<Embedding> OpenAiProvider::embed(const std::vector<std::string>& texts) {
  const json body{{"model", config_.embed_model}, {"input", texts}};
  return parse_embedding_response(post("/embeddings", body), texts.size());
}

}  // namespace unirule::llm
