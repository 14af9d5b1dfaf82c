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

#include "unirule/llm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace unirule::llm {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    case Role::Tool: return "tool";
  }
  return "user";
}

Role role_from_string(std::string_view text) {
  if (text == "system") return Role::System;
  if (text == "user") return Role::User;
  if (text == "assistant") return Role::Assistant;
  if (text == "tool") return Role::Tool;
  throw Error(Errc::SchemaError, "unknown role '" + std::string(text) + "'");
}

ChatMessage ChatMessage::system(std::string content) {
  return {Role::System, std::move(content), {}, std::nullopt};
}

ChatMessage ChatMessage::user(std::string content) {
  return {Role::User, std::move(content), {}, std::nullopt};
}

ChatMessage ChatMessage::assistant(std::string content, std::vector<ToolCall> calls) {
  return {Role::Assistant, std::move(content), std::move(calls), std::nullopt};
}

ChatMessage ChatMessage::tool(std::string call_id, std::string content) {
  return {Role::Tool, std::move(content), {}, std::move(call_id)};
}

void ChatMessage::validate() const {
  if (role == Role::Tool && (!tool_call_id || tool_call_id->empty())) {
    throw Error(Errc::InvalidArgument, "tool message without tool_call_id");
  }
  if (role == Role::Assistant && content.empty() && tool_calls.empty()) {
    throw Error(Errc::InvalidArgument, "assistant message with neither content nor tool calls");
  }
  if (role != Role::Assistant && !tool_calls.empty()) {
    throw Error(Errc::InvalidArgument, "only assistant messages carry tool calls");
  }
}

json to_json(const ChatMessage& message) {
  json j{{"role", to_string(message.role)}, {"content", message.content}};
  if (!message.tool_calls.empty()) {
    json calls = json::array();
    for (const auto& call : message.tool_calls) {
      calls.push_back({{"id", call.id},
                       {"type", "function"},
                       {"function", {{"name", call.name}, {"arguments", call.arguments}}}});
    }
    j["tool_calls"] = std::move(calls);
  }
  if (message.tool_call_id) j["tool_call_id"] = *message.tool_call_id;
  return j;
}

ChatMessage message_from_json(const json& j) {
  try {
    ChatMessage message;
    message.role = role_from_string(j.at("role").get<std::string>());
    if (const auto it = j.find("content"); it != j.end() && it->is_string()) {
      message.content = it->get<std::string>();
    }
    if (const auto it = j.find("tool_calls"); it != j.end() && it->is_array()) {
      for (const auto& call : *it) {
        const auto& fn = call.at("function");
        ToolCall tc;
        tc.id = call.value("id", "");
        tc.name = fn.at("name").get<std::string>();
        const auto& args = fn.at("arguments");
        tc.arguments = args.is_string() ? args.get<std::string>() : args.dump();
        message.tool_calls.push_back(std::move(tc));
      }
    }
    if (const auto it = j.find("tool_call_id"); it != j.end() && it->is_string()) {
      message.tool_call_id = it->get<std::string>();
    }
    return message;
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaError, std::string("bad chat message: ") + e.what());
  }
}

ProviderConfig ProviderConfig::from_env() {
  ProviderConfig config;
  const auto read = [](const char* name, std::string& slot) {
    if (const char* value = std::getenv(name); value && *value) slot = value;
  };
  read("UNIRULE_API_BASE", config.base_url);
  read("UNIRULE_API_KEY", config.api_key);
  read("UNIRULE_CHAT_MODEL", config.chat_model);
  read("UNIRULE_EMBED_MODEL", config.embed_model);
  return config;
}

void ProviderConfig::validate() const {
  if (max_parallel_requests < 1) throw Error(Errc::InvalidArgument, "max_parallel_requests must be >= 1");
  if (max_retries < 0) throw Error(Errc::InvalidArgument, "max_retries must be >= 0");
  if (embed_batch_size < 1) throw Error(Errc::InvalidArgument, "embed_batch_size must be >= 1");
  if (request_timeout <= 0) throw Error(Errc::InvalidArgument, "request_timeout must be positive");
}

// Holds one of the gateway's concurrency slots for the lifetime of a call.
class Gateway::Slot {
 public:
  explicit Slot(Gateway& gateway) : gateway_(gateway) {
    std::unique_lock lock(gateway_.slots_mutex_);
    gateway_.slots_cv_.wait(lock, [&] {
      return gateway_.in_flight_ < gateway_.config_.max_parallel_requests;
    });
    ++gateway_.in_flight_;
  }
  ~Slot() {
    {
      std::lock_guard lock(gateway_.slots_mutex_);
      --gateway_.in_flight_;
    }
    gateway_.slots_cv_.notify_one();
  }
  Slot(const Slot&) = delete;
  Slot& operator=(const Slot&) = delete;

 private:
  Gateway& gateway_;
};

Gateway::Gateway(ProviderConfig config, std::shared_ptr<Provider> provider)
    : config_(std::move(config)), provider_(std::move(provider)) {
  config_.validate();
  if (!provider_) throw Error(Errc::InvalidArgument, "gateway needs a provider");
}

template <typename F>
auto Gateway::with_retries(F&& call) -> decltype(call()) {
  double delay = config_.backoff_initial;
  for (int attempt = 0;; ++attempt) {
    ++attempts_;
    try {
      Slot slot(*this);
      return call();
    } catch (const ProviderFailure& failure) {
      if (!failure.transient() || attempt >= config_.max_retries) {
        throw ProviderFailure("giving up after " + std::to_string(attempt + 1) +
                                  " attempt(s): " + failure.what(),
                              false);
      }
    }
    ++retries_;
    if (delay > 0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(std::min(delay, config_.backoff_max)));
    }
    delay *= 2;
  }
}

ChatResponse Gateway::chat(const std::vector<ChatMessage>& messages,
                           std::span<const ToolSchema> tools, const ChatOptions& options) {
  if (messages.empty()) throw Error(Errc::InvalidArgument, "chat needs at least one message");
  if (messages.front().role != Role::System && messages.front().role != Role::User) {
    throw Error(Errc::InvalidArgument, "first message must be system or user");
  }
  for (const auto& message : messages) message.validate();
  ++chat_calls_;
  ChatResponse response = with_retries([&] { return provider_->chat(messages, tools, options); });
  if (response.message.role != Role::Assistant) {
    throw Error(Errc::SchemaError, "provider returned a non-assistant message");
  }
  response.message.validate();
  return response;
}

std::vector<Embedding> Gateway::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) throw Error(Errc::InvalidArgument, "embed needs at least one text");
  for (const auto& text : texts) {
    if (text.empty()) throw Error(Errc::InvalidArgument, "cannot embed empty text");
  }
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (std::size_t begin = 0; begin < texts.size(); begin += config_.embed_batch_size) {
    const std::size_t end = std::min(texts.size(), begin + config_.embed_batch_size);
    const std::vector<std::string> batch(texts.begin() + static_cast<std::ptrdiff_t>(begin),
                                         texts.begin() + static_cast<std::ptrdiff_t>(end));
    ++embed_calls_;
    auto vectors = with_retries([&] { return provider_->embed(batch); });
    if (vectors.size() != batch.size()) {
      throw Error(Errc::SchemaError, "provider returned " + std::to_string(vectors.size()) +
                                         " vectors for " + std::to_string(batch.size()) + " texts");
    }
    for (auto& v : vectors) out.push_back(std::move(v));
  }
  const std::size_t dim = out.front().size();
  for (const auto& v : out) {
    if (v.size() != dim || dim == 0) {
      throw Error(Errc::DimensionMismatch, "provider returned ragged embedding vectors");
    }
  }
  return out;
}

GatewayStats Gateway::stats() const {
  return {chat_calls_.load(), embed_calls_.load(), attempts_.load(), retries_.load()};
}

std::vector<double> mock_embed(std::string_view text, std::size_t dim) {
  Rng rng(stable_hash(text));
  std::vector<double> v(dim);
  double norm_sq = 0.0;
  for (auto& x : v) {
    x = 2.0 * rng.uniform() - 1.0;
    norm_sq += x * x;
  }
  const double norm = std::sqrt(norm_sq);
  for (auto& x : v) x /= norm;
  return v;
}

}  // namespace unirule::llm
