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

// Evaluation inputs. Every test rule can be presented to a generator in four
// ways: its own description, a synthetic threat report, or its intent or
// logic translation.

#ifndef UNIRULE_CONTEXTS_HPP
#define UNIRULE_CONTEXTS_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "unirule/corpus.hpp"
#include "unirule/llm.hpp"
#include "unirule/semantic_kb.hpp"

namespace unirule::contexts {

enum class ContextType { Context, Cti, Intent, Logic };

std::string_view to_string(ContextType type);
ContextType context_type_from_string(std::string_view text);

inline constexpr ContextType kContextTypes[] = {ContextType::Context, ContextType::Cti,
                                                ContextType::Intent, ContextType::Logic};

enum class Provenance { Native, Synthesized, Translated };

std::string_view to_string(Provenance provenance);
Provenance provenance_from_string(std::string_view text);

struct ContextSpec {
  std::string rule_id;
  corpus::RuleLanguage language;  // of the source rule, also the target language
  ContextType type = ContextType::Context;
  std::string text;
  Provenance provenance = Provenance::Native;
  std::uint64_t seed = 0;

  /// "<language>/<type>/<rule_id>"
  std::string instance_id() const;
  /// "<language>/<type>"
  std::string scenario() const;
  /// Throws InvalidArgument when text is empty or provenance does not fit type.
  void validate() const;

  bool operator==(const ContextSpec&) const = default;
};

json to_json(const ContextSpec& spec);
ContextSpec context_from_json(const json& j);

void save_contexts(const std::filesystem::path& path, const std::vector<ContextSpec>& specs);
std::vector<ContextSpec> load_contexts(const std::filesystem::path& path);

struct RuleDescriptions {
  kb::SemanticDescription intent;
  kb::SemanticDescription logic;
};

/// True when a and b share a substring of at least min_length bytes.
bool shares_substring(std::string_view a, std::string_view b, std::size_t min_length);

inline constexpr std::size_t kCtiLeakLength = 40;

/// Synthesizes a threat report from the rule's translations. A draft that
/// shares a 40-byte run with the rule source is regenerated once; a second
/// leak throws CtiLeak.
std::string synthesize_cti(const corpus::DetectionRule& rule, const RuleDescriptions& descriptions,
                           llm::Gateway& gateway);

/// One context of the given type. Throws MissingDescription for the native
/// type when the rule has no description.
ContextSpec make_context(const corpus::DetectionRule& rule, ContextType type,
                         const RuleDescriptions& descriptions, llm::Gateway& gateway,
                         std::uint64_t seed = 0);

/// All four contexts in ContextType order.
std::vector<ContextSpec> make_contexts(const corpus::DetectionRule& rule,
                                       const RuleDescriptions& descriptions, llm::Gateway& gateway,
                                       std::uint64_t seed = 0);

/// Seeded sample of n test rules of one language eligible for the context
/// type, sorted by id. Rules without a description are not eligible for the
/// native type. Throws InsufficientTestRules when fewer than n are eligible.
std::vector<corpus::DetectionRule> sample_scenario_instances(const std::vector<corpus::DetectionRule>& test_set,
                                                             const corpus::RuleLanguage& language,
                                                             ContextType type, std::size_t n,
                                                             std::uint64_t seed);

struct ScenarioGridOptions {
  std::vector<corpus::RuleLanguage> languages;  // empty = languages present in the test set
  std::vector<ContextType> types;               // empty = all four
  std::size_t n = 100;
  std::uint64_t seed = 0;
  std::size_t threads = 4;
};

/// Samples and builds contexts for every (language, type) scenario. Output is
/// ordered by language, then type, then rule id.
std::vector<ContextSpec> build_scenario_contexts(const std::vector<corpus::DetectionRule>& test_set,
                                                 const std::map<std::string, RuleDescriptions>& descriptions,
                                                 llm::Gateway& gateway, const ScenarioGridOptions& options);

}  // namespace unirule::contexts

#endif  // UNIRULE_CONTEXTS_HPP
