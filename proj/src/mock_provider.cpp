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
#include <cstdio>
#include <sstream>

#include "unirule/llm.hpp"
#include "unirule/prompts.hpp"

namespace unirule::llm {

MockProvider::MockProvider(std::size_t embed_dim) : embed_dim_(embed_dim) {
  if (embed_dim_ == 0) throw Error(Errc::InvalidArgument, "mock embedding dimension must be positive");
}

void MockProvider::add(ScriptEntry entry) {
  std::lock_guard lock(mutex_);
  script_.push_back(std::move(entry));
}

void MockProvider::reply(std::string match, std::string content, bool repeat) {
  add({std::move(match), ChatMessage::assistant(std::move(content)), repeat});
}

void MockProvider::tool_call(std::string match, std::string tool, json arguments) {
  add({std::move(match),
       ChatMessage::assistant("", {ToolCall{std::move(tool), arguments.dump(), ""}}),
       false});
}

void MockProvider::set_fallback(MockResponder responder) {
  std::lock_guard lock(mutex_);
  fallback_ = std::move(responder);
}

void MockProvider::inject_transient_failures(int count) {
  std::lock_guard lock(mutex_);
  pending_failures_ = count;
}

void MockProvider::load_script(const json& script) {
  if (!script.is_array()) throw Error(Errc::SchemaError, "mock script must be a JSON array");
  for (const auto& item : script) {
    ScriptEntry entry;
    entry.match = item.value("match", "");
    entry.repeat = item.value("repeat", false);
    std::vector<ToolCall> calls;
    if (const auto it = item.find("tool_calls"); it != item.end()) {
      for (const auto& call : *it) {
        const auto& args = call.at("arguments");
        calls.push_back({call.at("name").get<std::string>(),
                         args.is_string() ? args.get<std::string>() : args.dump(),
                         call.value("id", "")});
      }
    }
    entry.reply = ChatMessage::assistant(item.value("content", ""), std::move(calls));
    add(std::move(entry));
  }
}

namespace {

std::int64_t approx_tokens(std::size_t chars) { return static_cast<std::int64_t>((chars + 3) / 4); }

const ChatMessage* last_with_role(const std::vector<ChatMessage>& messages, Role role) {
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role == role) return &*it;
  }
  return nullptr;
}

}  // namespace

ChatResponse MockProvider::chat(const std::vector<ChatMessage>& messages,
                                std::span<const ToolSchema> tools, const ChatOptions&) {
  ChatMessage reply;
  {
    std::lock_guard lock(mutex_);
    ++chat_calls_;
    transcripts_.push_back(messages);
    if (pending_failures_ > 0) {
      --pending_failures_;
      throw ProviderFailure("injected transient failure", true);
    }
    const ChatMessage* last_user = last_with_role(messages, Role::User);
    const std::string_view probe = last_user ? std::string_view(last_user->content) : std::string_view();
    auto it = std::find_if(script_.begin(), script_.end(), [&](const ScriptEntry& entry) {
      return entry.match.empty() || probe.find(entry.match) != std::string_view::npos;
    });
    if (it != script_.end()) {
      reply = it->reply;
      if (!it->repeat) script_.erase(it);
    } else if (fallback_) {
      reply = fallback_(messages, tools);
    } else {
      throw ProviderFailure("mock script has no reply for this conversation", false);
    }
    for (auto& call : reply.tool_calls) {
      if (call.id.empty()) call.id = "call_" + std::to_string(++call_counter_);
    }
  }
  std::size_t prompt_chars = 0;
  for (const auto& m : messages) prompt_chars += m.content.size();
  TokenUsage usage{approx_tokens(prompt_chars), approx_tokens(reply.content.size())};
  return {std::move(reply), usage};
}

std::vector<Embedding> MockProvider::embed(const std::vector<std::string>& texts) {
  {
    std::lock_guard lock(mutex_);
    ++embed_calls_;
    if (pending_failures_ > 0) {
      --pending_failures_;
      throw ProviderFailure("injected transient failure", true);
    }
  }
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    const auto v = mock_embed(text, embed_dim_);
    out.emplace_back(v.begin(), v.end());
  }
  return out;
}

std::vector<std::vector<ChatMessage>> MockProvider::transcripts() const {
  std::lock_guard lock(mutex_);
  return transcripts_;
}

// ---------------------------------------------------------------------------
// Default deterministic behaviour for whole-pipeline runs without a model.

namespace {

std::string hex8(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 8);
}

// Value of a "Label: value" line in text, or empty.
std::string line_value(std::string_view text, std::string_view label) {
  const auto pos = text.find(label);
  if (pos == std::string_view::npos) return {};
  const auto start = pos + label.size();
  const auto end = text.find('\n', start);
  return trim(text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
}

// Text following "Detection context:" up to the next blank-line section.
std::string context_of(std::string_view text) {
  const std::string_view marker = "Detection context:\n";
  const auto pos = text.find(marker);
  if (pos == std::string_view::npos) return trim(text);
  auto body = text.substr(pos + marker.size());
  const auto refs = body.find("\nReference rules from the knowledge base:");
  if (refs != std::string_view::npos) body = body.substr(0, refs);
  return trim(body);
}

std::string sample_rule(std::string_view language, std::string_view seed_text, std::size_t refs) {
  const std::string tag = hex8(stable_hash(seed_text));
  std::ostringstream rule;
  if (language == "splunk") {
    rule << "| tstats count min(_time) as firstTime max(_time) as lastTime from datamodel=Endpoint.Processes "
         << "where Processes.process=\"*" << tag << "*\" by Processes.dest Processes.user"
         << (refs > 0 ? " | where count > " + std::to_string(refs) : std::string());
  } else if (language == "elastic") {
    rule << "process where host.os.type == \"windows\" and event.type == \"start\" and process.command_line : \"*"
         << tag << "*\"" << (refs > 0 ? " and process.parent.name != null" : "");
  } else if (language == "snort") {
    rule << "alert tcp $EXTERNAL_NET any -> $HOME_NET any (msg:\"Generated detection " << tag
         << "\"; flow:to_server,established; content:\"" << tag << "\"; sid:9"
         << (stable_hash(tag) % 900000 + 100000) << "; rev:" << (refs + 1) << ";)";
  } else {
    rule << "match " << tag;
  }
  return rule.str();
}

bool has_tool(std::span<const ToolSchema> tools, std::string_view name) {
  return std::any_of(tools.begin(), tools.end(), [&](const ToolSchema& t) { return t.name == name; });
}

}  // namespace

ChatMessage default_mock_reply(const std::vector<ChatMessage>& messages,
                               std::span<const ToolSchema> tools) {
  const ChatMessage* system = last_with_role(messages, Role::System);
  const ChatMessage* user = nullptr;
  // The first user message carries the task input; later ones are reprompts.
  for (const auto& m : messages) {
    if (m.role == Role::User) {
      user = &m;
      break;
    }
  }
  const std::string input = user ? user->content : std::string();
  const auto task = system ? prompts::detect_task(system->content) : std::nullopt;
  if (!task) return ChatMessage::assistant("ok");

  const std::uint64_t h = stable_hash(input);
  switch (*task) {
    case prompts::Task::TranslateIntent: {
      const std::string title = line_value(input, "Rule title:");
      const std::string subject = title.empty() ? "suspicious activity " + hex8(h) : title;
      return ChatMessage::assistant(
          "INTENT: Detect adversary activity described as " + subject + ".\n"
          "DETAIL: The rule targets an adversary objective associated with " + subject +
          ", flagging behaviour an attacker performs to gain access, persist or evade defences. "
          "Reference " + hex8(h) + ".");
    }
    case prompts::Task::TranslateLogic: {
      const std::string title = line_value(input, "Rule title:");
      const std::string language = line_value(input, "Rule language:");
      return ChatMessage::assistant(
          "LOGIC: Match " + language + " events that fit the pattern of " +
          (title.empty() ? hex8(h) : title) + ".\n"
          "DETAIL: The rule inspects " + language + " telemetry and raises an alert when the "
          "observed fields satisfy its matching conditions for " + (title.empty() ? hex8(h) : title) +
          ". Pattern " + hex8(h) + ".");
    }
    case prompts::Task::SynthesizeCti: {
      const std::string intent = line_value(input, "Threat intent:\n");
      const bool reprompted =
          std::count_if(messages.begin(), messages.end(), [](const ChatMessage& m) { return m.role == Role::User; }) > 1;
      if (reprompted) {
        // Rewritten without quoting the descriptions, which may echo rule text.
        return ChatMessage::assistant(
            "Responders attribute the activity to an operator who " +
            std::string(h % 2 ? "abused trusted tooling" : "staged payloads on compromised hosts") +
            " and moved quickly once inside. Defenders should hunt for related behaviour across endpoints "
            "and network sensors. Case " + hex8(h) + ".");
      }
      return ChatMessage::assistant(
          "Threat reporting from incident responders describes an intrusion set whose operators " +
          std::string(h % 2 ? "abused trusted tooling" : "staged payloads on compromised hosts") +
          ". Observed tradecraft is consistent with the following goal: " +
          (intent.empty() ? hex8(h) : intent.substr(0, 160)) +
          " Defenders should hunt for related behaviour across endpoints and network sensors. "
          "Case " + hex8(h) + ".");
    }
    case prompts::Task::GenerateAgent: {
      const std::string language = line_value(input, "Target language:");
      const std::string context = context_of(input);
      const std::size_t planned = (h % 2 == 0) ? 0 : 2;
      std::size_t issued = 0;
      std::size_t results = 0;
      for (const auto& m : messages) {
        if (m.role == Role::Assistant) issued += m.tool_calls.size();
        if (m.role == Role::Tool) results += std::count(m.content.begin(), m.content.end(), '{');
      }
      if (issued < planned) {
        const bool want_intent = issued == 0;
        std::string tool = want_intent ? "search_intent" : "search_logic";
        if (!has_tool(tools, tool)) tool = want_intent ? "search_logic" : "search_intent";
        if (has_tool(tools, tool)) {
          const json args{{"query", context.substr(0, 160)}, {"k", 3}};
          return ChatMessage::assistant("", {ToolCall{tool, args.dump(), ""}});
        }
      }
      return ChatMessage::assistant("```" + language + "\n" + sample_rule(language, context, results) +
                                    "\n```");
    }
    case prompts::Task::GenerateDirect: {
      const std::string language = line_value(input, "Target language:");
      const std::size_t refs =
          input.find("Reference rules from the knowledge base:") == std::string::npos ? 0 : 15;
      return ChatMessage::assistant("```" + language + "\n" +
                                    sample_rule(language, context_of(input) + std::to_string(refs), refs) +
                                    "\n```");
    }
    case prompts::Task::Judge: {
      static constexpr const char* kVerdicts[] = {"FIRST", "SECOND", "TIE", "TIE"};
      return ChatMessage::assistant("Both candidates were compared against the context.\nVERDICT: " +
                                    std::string(kVerdicts[h % 4]));
    }
  }
  return ChatMessage::assistant("ok");
}

}  // namespace unirule::llm
