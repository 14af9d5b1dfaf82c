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

#include "unirule/contexts.hpp"

#include <algorithm>
#include <unordered_set>

#include "unirule/prompts.hpp"

namespace unirule::contexts {

std::string_view to_string(ContextType type) {
  switch (type) {
    case ContextType::Context: return "context";
    case ContextType::Cti: return "cti";
    case ContextType::Intent: return "intent";
    case ContextType::Logic: return "logic";
  }
  return "context";
}

ContextType context_type_from_string(std::string_view text) {
  for (auto type : kContextTypes) {
    if (to_string(type) == text) return type;
  }
  throw Error(Errc::InvalidArgument, "unknown context type '" + std::string(text) + "'");
}

std::string_view to_string(Provenance provenance) {
  switch (provenance) {
    case Provenance::Native: return "native";
    case Provenance::Synthesized: return "synthesized";
    case Provenance::Translated: return "translated";
  }
  return "native";
}

Provenance provenance_from_string(std::string_view text) {
  if (text == "native") return Provenance::Native;
  if (text == "synthesized") return Provenance::Synthesized;
  if (text == "translated") return Provenance::Translated;
  throw Error(Errc::InvalidArgument, "unknown provenance '" + std::string(text) + "'");
}

std::string ContextSpec::scenario() const { return language.str() + "/" + std::string(to_string(type)); }

std::string ContextSpec::instance_id() const { return scenario() + "/" + rule_id; }

void ContextSpec::validate() const {
  if (trim(text).empty()) throw Error(Errc::InvalidArgument, "context for " + rule_id + " is empty");
  const bool ok = type == ContextType::Context   ? provenance == Provenance::Native
                  : type == ContextType::Cti     ? provenance == Provenance::Synthesized
                                                 : provenance == Provenance::Translated;
  if (!ok) {
    throw Error(Errc::InvalidArgument, "context type " + std::string(to_string(type)) +
                                           " cannot have provenance " + std::string(to_string(provenance)));
  }
}

json to_json(const ContextSpec& s) {
  return json{{"rule_id", s.rule_id},
              {"language", s.language.str()},
              {"context_type", to_string(s.type)},
              {"text", s.text},
              {"provenance", to_string(s.provenance)},
              {"seed", s.seed}};
}

ContextSpec context_from_json(const json& j) {
  try {
    ContextSpec s;
    s.rule_id = j.at("rule_id").get<std::string>();
    s.language = corpus::RuleLanguage(j.at("language").get<std::string>());
    s.type = context_type_from_string(j.at("context_type").get<std::string>());
    s.text = j.at("text").get<std::string>();
    s.provenance = provenance_from_string(j.at("provenance").get<std::string>());
    s.seed = j.value("seed", std::uint64_t{0});
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaError, std::string("bad context record: ") + e.what());
  }
}

void save_contexts(const std::filesystem::path& path, const std::vector<ContextSpec>& specs) {
  std::vector<json> rows;
  rows.reserve(specs.size());
  for (const auto& s : specs) rows.push_back(to_json(s));
  write_jsonl(path, rows);
}

std::vector<ContextSpec> load_contexts(const std::filesystem::path& path) {
  std::vector<ContextSpec> out;
  for (const auto& row : read_jsonl(path)) out.push_back(context_from_json(row));
  return out;
}

bool shares_substring(std::string_view a, std::string_view b, std::size_t min_length) {
  if (min_length == 0) return true;
  if (a.size() < min_length || b.size() < min_length) return false;
  if (a.size() > b.size()) std::swap(a, b);
  std::unordered_set<std::string_view> windows;
  windows.reserve(a.size() - min_length + 1);
  for (std::size_t i = 0; i + min_length <= a.size(); ++i) windows.insert(a.substr(i, min_length));
  for (std::size_t i = 0; i + min_length <= b.size(); ++i) {
    if (windows.count(b.substr(i, min_length))) return true;
  }
  return false;
}

std::string synthesize_cti(const corpus::DetectionRule& rule, const RuleDescriptions& descriptions,
                           llm::Gateway& gateway) {
  std::vector<llm::ChatMessage> messages = {
      llm::ChatMessage::system(prompts::get("cti_system")),
      llm::ChatMessage::user(prompts::fill(
          "cti_user", {{"intent", descriptions.intent.full_text}, {"logic", descriptions.logic.full_text}}))};
  for (int attempt = 1;; ++attempt) {
    const auto response = gateway.chat(messages);
    std::string text = trim(response.message.content);
    const bool leaked = shares_substring(text, rule.source_text, kCtiLeakLength);
    if (!text.empty() && !leaked) return text;
    if (attempt == 2) {
      if (text.empty()) throw Error(Errc::EmptyTranslation, "threat report for " + rule.id + " is empty");
      throw Error(Errc::CtiLeak, "threat report for " + rule.id + " still copies rule text after a retry");
    }
    messages.push_back(response.message);
    messages.push_back(llm::ChatMessage::user(prompts::get("cti_retry_user")));
  }
}

ContextSpec make_context(const corpus::DetectionRule& rule, ContextType type,
                         const RuleDescriptions& descriptions, llm::Gateway& gateway, std::uint64_t seed) {
  ContextSpec spec;
  spec.rule_id = rule.id;
  spec.language = rule.language;
  spec.type = type;
  spec.seed = seed;
  switch (type) {
    case ContextType::Context:
      if (trim(rule.description).empty()) {
        throw Error(Errc::MissingDescription, "rule " + rule.id + " has no description");
      }
      spec.text = rule.description;
      spec.provenance = Provenance::Native;
      break;
    case ContextType::Cti:
      spec.text = synthesize_cti(rule, descriptions, gateway);
      spec.provenance = Provenance::Synthesized;
      break;
    case ContextType::Intent:
      spec.text = descriptions.intent.full_text;
      spec.provenance = Provenance::Translated;
      break;
    case ContextType::Logic:
      spec.text = descriptions.logic.full_text;
      spec.provenance = Provenance::Translated;
      break;
  }
  spec.validate();
  return spec;
}

std::vector<ContextSpec> make_contexts(const corpus::DetectionRule& rule, const RuleDescriptions& descriptions,
                                       llm::Gateway& gateway, std::uint64_t seed) {
  std::vector<ContextSpec> out;
  for (auto type : kContextTypes) out.push_back(make_context(rule, type, descriptions, gateway, seed));
  return out;
}

std::vector<corpus::DetectionRule> sample_scenario_instances(const std::vector<corpus::DetectionRule>& test_set,
                                                             const corpus::RuleLanguage& language,
                                                             ContextType type, std::size_t n,
                                                             std::uint64_t seed) {
  std::vector<corpus::DetectionRule> eligible;
  for (const auto& rule : test_set) {
    if (rule.language != language) continue;
    if (type == ContextType::Context && trim(rule.description).empty()) continue;
    eligible.push_back(rule);
  }
  if (n > eligible.size()) {
    throw Error(Errc::InsufficientTestRules, "scenario " + language.str() + "/" + std::string(to_string(type)) +
                                                 " needs " + std::to_string(n) + " rules, " +
                                                 std::to_string(eligible.size()) + " eligible");
  }
  std::sort(eligible.begin(), eligible.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  Rng rng(mix_seed(seed, language.str() + "/" + std::string(to_string(type))));
  rng.shuffle(eligible);
  eligible.resize(n);
  std::sort(eligible.begin(), eligible.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return eligible;
}

std::vector<ContextSpec> build_scenario_contexts(const std::vector<corpus::DetectionRule>& test_set,
                                                 const std::map<std::string, RuleDescriptions>& descriptions,
                                                 llm::Gateway& gateway, const ScenarioGridOptions& options) {
  std::vector<corpus::RuleLanguage> languages = options.languages;
  if (languages.empty()) {
    for (const auto& rule : test_set) {
      if (std::find(languages.begin(), languages.end(), rule.language) == languages.end()) {
        languages.push_back(rule.language);
      }
    }
    std::sort(languages.begin(), languages.end());
  }
  std::vector<ContextType> types = options.types;
  if (types.empty()) types.assign(std::begin(kContextTypes), std::end(kContextTypes));

  std::vector<corpus::DetectionRule> chosen;
  std::vector<std::pair<std::size_t, ContextType>> picks;
  for (const auto& language : languages) {
    for (auto type : types) {
      for (auto& rule : sample_scenario_instances(test_set, language, type, options.n, options.seed)) {
        chosen.push_back(std::move(rule));
        picks.emplace_back(chosen.size() - 1, type);
      }
    }
  }
  std::vector<ContextSpec> out(picks.size());
  parallel_for(picks.size(), options.threads, [&](std::size_t i) {
    const auto& rule = chosen[picks[i].first];
    const auto it = descriptions.find(rule.id);
    if (it == descriptions.end()) {
      throw Error(Errc::InvalidArgument, "no intent/logic translations for test rule " + rule.id);
    }
    out[i] = make_context(rule, picks[i].second, it->second, gateway, options.seed);
  });
  return out;
}

}  // namespace unirule::contexts
