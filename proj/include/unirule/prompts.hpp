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

// Prompt templates. The text lives in prompts/*.txt and is compiled in at
// build time; placeholders are written {{name}}.

#ifndef UNIRULE_PROMPTS_HPP
#define UNIRULE_PROMPTS_HPP

#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace unirule::prompts {

enum class Task { TranslateIntent, TranslateLogic, SynthesizeCti, GenerateAgent, GenerateDirect, Judge };

/// Contents of prompts/VERSION.
std::string_view version();

/// Raw template by file stem, e.g. "judge_system". Throws InvalidArgument for
/// unknown names.
const std::string& get(std::string_view name);

/// Replaces every {{key}} with its value. Unknown placeholders are left as is.
std::string render(std::string_view tmpl, const std::map<std::string, std::string>& values);

/// Renders the named template.
std::string fill(std::string_view name, const std::map<std::string, std::string>& values);

/// The task a system prompt was rendered from (its first "Task:" line).
std::optional<Task> detect_task(std::string_view system_prompt);

/// SHA-256 over the templates a task uses plus the version; any text change
/// produces a new fingerprint.
std::string fingerprint(Task task);

}  // namespace unirule::prompts

#endif  // UNIRULE_PROMPTS_HPP
