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

// Provider-neutral chat completion and embedding. Every pipeline stage talks
// to a Gateway; the Gateway owns retries, backoff and the concurrency limit,
// and delegates the wire format to a Provider.

#ifndef UNIRULE_LLM_HPP
#define UNIRULE_LLM_HPP

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "unirule/error.hpp"
#include "unirule/util.hpp"

namespace unirule::llm {

enum class Role { System, User, Assistant, Tool };

std::string_view to_string(Role role);
Role role_from_string(std::string_view text);

struct ToolCall {
  std::string name;
  std::string arguments;  // JSON object text, as the model produced it
  std::string id;

  bool operator==(const ToolCall&) const = default;
};

struct ChatMessage {
  Role role = Role::User;
  std::string content;
  std::vector<ToolCall> tool_calls;
  std::optional<std::string> tool_call_id;

  static ChatMessage system(std::string content);
  static ChatMessage user(std::string content);
  static ChatMessage assistant(std::string content, std::vector<ToolCall> calls = {});
  static ChatMessage tool(std::string call_id, std::string content);

  /// Throws InvalidArgument when a tool message lacks tool_call_id or an
  /// assistant message carries neither content nor tool calls.
  void validate() const;

  bool operator==(const ChatMessage&) const = default;
};

json to_json(const ChatMessage& message);
ChatMessage message_from_json(const json& j);

/// Function-calling tool advertised to the model.
struct ToolSchema {
  std::string name;
  std::string description;
  json parameters;  // JSON Schema object
};

struct TokenUsage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;

  TokenUsage& operator+=(const TokenUsage& other) {
    prompt_tokens += other.prompt_tokens;
    completion_tokens += other.completion_tokens;
    return *this;
  }
};

struct ChatOptions {
  std::optional<int> max_tokens;
  double temperature = 0.0;
};

struct ChatResponse {
  ChatMessage message;
  TokenUsage usage;
};

using Embedding = std::vector<float>;

struct ProviderConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  std::string chat_model;
  std::string embed_model;
  int max_retries = 3;
  double request_timeout = 120.0;  // seconds
  std::size_t max_parallel_requests = 4;
  double backoff_initial = 0.5;  // seconds, doubled per retry
  double backoff_max = 16.0;
  std::size_t embed_batch_size = 64;

  /// Reads UNIRULE_API_BASE, UNIRULE_API_KEY, UNIRULE_CHAT_MODEL and
  /// UNIRULE_EMBED_MODEL over the defaults above.
  static ProviderConfig from_env();
  void validate() const;
};

/// Raised by providers. Transient failures (HTTP 5xx/429, dropped
/// connections) are retried by the Gateway; others propagate immediately.
class ProviderFailure : public Error {
 public:
  ProviderFailure(const std::string& message, bool transient)
      : Error(Errc::ProviderError, message), transient_(transient) {}
  bool transient() const noexcept { return transient_; }

 private:
  bool transient_;
};

class Provider {
 public:
  virtual ~Provider() = default;
  virtual ChatResponse chat(const std::vector<ChatMessage>& messages,
                            std::span<const ToolSchema> tools, const ChatOptions& options) = 0;
  virtual std::vector<Embedding> embed(const std::vector<std::string>& texts) = 0;
  /// Identifier recorded in traces and used in cache keys.
  virtual std::string chat_model() const = 0;
  virtual std::string embed_model() const = 0;
};

struct GatewayStats {
  std::size_t chat_calls = 0;
  std::size_t embed_calls = 0;
  std::size_t attempts = 0;
  std::size_t retries = 0;
};

/// Thread-safe front door for all model traffic. At most
/// config.max_parallel_requests provider calls are in flight at once.
class Gateway {
 public:
  Gateway(ProviderConfig config, std::shared_ptr<Provider> provider);

  /// messages must be non-empty and start with a system or user message.
  ChatResponse chat(const std::vector<ChatMessage>& messages,
                    std::span<const ToolSchema> tools = {}, const ChatOptions& options = {});

  /// One unit-dimension-consistent vector per input, in input order. Inputs
  /// are sent in batches of config.embed_batch_size.
  std::vector<Embedding> embed(const std::vector<std::string>& texts);

  const ProviderConfig& config() const noexcept { return config_; }
  std::string chat_model() const { return provider_->chat_model(); }
  std::string embed_model() const { return provider_->embed_model(); }
  GatewayStats stats() const;

 private:
  template <typename F>
  auto with_retries(F&& call) -> decltype(call());

  class Slot;

  ProviderConfig config_;
  std::shared_ptr<Provider> provider_;
  std::mutex slots_mutex_;
  std::condition_variable slots_cv_;
  std::size_t in_flight_ = 0;
  std::atomic<std::size_t> chat_calls_{0};
  std::atomic<std::size_t> embed_calls_{0};
  std::atomic<std::size_t> attempts_{0};
  std::atomic<std::size_t> retries_{0};
};

// ---------------------------------------------------------------------------
// Mock provider

inline constexpr std::size_t kMockEmbedDim = 64;

/// Deterministic unit vector for text: a generator seeded from a stable hash
/// of the text fills `dim` coordinates uniformly in [-1, 1), then the vector
/// is L2-normalized.
std::vector<double> mock_embed(std::string_view text, std::size_t dim = kMockEmbedDim);

/// One canned reply. `match` is a substring test against the content of the
/// last user message (empty matches anything). Entries are consumed in order
/// unless `repeat` is set.
struct ScriptEntry {
  std::string match;
  ChatMessage reply;
  bool repeat = false;
};

using MockResponder =
    std::function<ChatMessage(const std::vector<ChatMessage>&, std::span<const ToolSchema>)>;

class MockProvider : public Provider {
 public:
  explicit MockProvider(std::size_t embed_dim = kMockEmbedDim);

  void add(ScriptEntry entry);
  void reply(std::string match, std::string content, bool repeat = false);
  void tool_call(std::string match, std::string tool, json arguments);
  /// Used when no script entry matches.
  void set_fallback(MockResponder responder);
  /// The next `count` calls (chat or embed) fail with a transient error.
  void inject_transient_failures(int count);

  /// Script file: JSON array of {match, content, tool_calls:[{name, arguments}], repeat}.
  void load_script(const json& script);

  ChatResponse chat(const std::vector<ChatMessage>& messages, std::span<const ToolSchema> tools,
                    const ChatOptions& options) override;
  std::vector<Embedding> embed(const std::vector<std::string>& texts) override;
  std::string chat_model() const override { return "mock-chat"; }
  std::string embed_model() const override { return "mock-embed-" + std::to_string(embed_dim_); }

  std::size_t chat_calls() const { return chat_calls_; }
  std::size_t embed_calls() const { return embed_calls_; }
  /// Every conversation the mock has seen, in call order.
  std::vector<std::vector<ChatMessage>> transcripts() const;

 private:
  std::size_t embed_dim_;
  mutable std::mutex mutex_;
  std::deque<ScriptEntry> script_;
  MockResponder fallback_;
  int pending_failures_ = 0;
  std::size_t chat_calls_ = 0;
  std::size_t embed_calls_ = 0;
  std::size_t call_counter_ = 0;
  std::vector<std::vector<ChatMessage>> transcripts_;
};

/// Deterministic stand-in for a real model across every pipeline prompt
/// (translation, CTI synthesis, generation, judging). Recognizes the task from
/// the system prompt and derives its answer from stable hashes of the input.
ChatMessage default_mock_reply(const std::vector<ChatMessage>& messages,
                               std::span<const ToolSchema> tools);

// ---------------------------------------------------------------------------
// OpenAI-compatible HTTP provider

/// POST {base}/chat/completions and {base}/embeddings with bearer auth.
class OpenAiProvider : public Provider {
 public:
  explicit OpenAiProvider(ProviderConfig config);

  ChatResponse chat(const std::vector<ChatMessage>& messages, std::span<const ToolSchema> tools,
                    const ChatOptions& options) override;
  std::vector<Embedding> embed(const std::vector<std::string>& texts) override;
  std::string chat_model() const override { return config_.chat_model; }
  std::string embed_model() const override { return config_.embed_model; }

  /// Request/response bodies, exposed for wire-format tests.
  static json chat_request_body(const ProviderConfig& config,
                                const std::vector<ChatMessage>& messages,
                                std::span<const ToolSchema> tools, const ChatOptions& options);
  static ChatResponse parse_chat_response(const json& body);
  static std::vector<Embedding> parse_embedding_response(const json& body, std::size_t expected);

 private:
  json post(const std::string& path, const json& body);

  ProviderConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;
};

}  // namespace unirule::llm

#endif  // UNIRULE_LLM_HPP
