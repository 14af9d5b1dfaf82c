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

#include "unirule/prompts.hpp"

#include <vector>

#include "unirule/error.hpp"
#include "unirule/util.hpp"

namespace unirule::prompts {
namespace detail {
// Defined in the generated prompt_templates.cpp.
const std::map<std::string, std::string>& templates();
}  // namespace detail

std::string_view version() {
  static const std::string kVersion = trim(get("VERSION"));
  return kVersion;
}

const std::string& get(std::string_view name) {
  const auto& all = detail::templates();
  const auto it = all.find(std::string(name));
  if (it == all.end()) throw Error(Errc::InvalidArgument, "unknown prompt template '" + std::string(name) + "'");
  return it->second;
}

std::string render(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) break;
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) break;
    out.append(tmpl.substr(pos, open - pos));
    const std::string key(tmpl.substr(open + 2, close - open - 2));
    if (const auto it = values.find(key); it != values.end()) {
      out += it->second;
    } else {
      out.append(tmpl.substr(open, close + 2 - open));
    }
    pos = close + 2;
  }
  out.append(tmpl.substr(pos));
  return out;
}

std::string fill(std::string_view name, const std::map<std::string, std::string>& values) {
  return render(get(name), values);
}

std::optional<Task> detect_task(std::string_view system_prompt) {
  const auto eol = system_prompt.find('\n');
  const std::string first = trim(system_prompt.substr(0, eol));
  if (first == "Task: translate-intent") return Task::TranslateIntent;
  if (first == "Task: translate-logic") return Task::TranslateLogic;
  if (first == "Task: synthesize-cti") return Task::SynthesizeCti;
  if (first == "Task: generate-agent") return Task::GenerateAgent;
  if (first == "Task: generate-direct") return Task::GenerateDirect;
  if (first == "Task: judge-pair") return Task::Judge;
  return std::nullopt;
}

std::string fingerprint(Task task) {
  std::vector<std::string_view> names;
  switch (task) {
    case Task::TranslateIntent: names = {"translate_intent_system", "translate_user"}; break;
    case Task::TranslateLogic: names = {"translate_logic_system", "translate_user"}; break;
    case Task::SynthesizeCti: names = {"cti_system", "cti_user", "cti_retry_user"}; break;
    case Task::GenerateAgent: names = {"agent_system", "generate_user", "reformat_user"}; break;
    case Task::GenerateDirect:
      names = {"direct_system", "generate_user", "references_block", "reformat_user"};
      break;
    case Task::Judge: names = {"judge_system", "judge_user", "judge_retry_user"}; break;
  }
  std::string material(version());
  for (auto name : names) {
    material += '\0';
    material += get(name);
  }
  return sha256_hex(material);
}

}  // namespace unirule::prompts
