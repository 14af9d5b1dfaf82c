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

// Offline knowledge construction. Each rule is described twice in natural
// language, once for what it is trying to catch (intent) and once for how it
// matches (logic); each description set is embedded into its own index.

#ifndef UNIRULE_SEMANTIC_KB_HPP
#define UNIRULE_SEMANTIC_KB_HPP

#include <cstddef>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "unirule/corpus.hpp"
#include "unirule/llm.hpp"

namespace unirule::kb {

enum class SemanticDimension { Intent, Logic };

std::string_view to_string(SemanticDimension dimension);
/// Accepts "intent" or "logic"; throws InvalidArgument otherwise.
SemanticDimension dimension_from_string(std::string_view text);

inline constexpr SemanticDimension kDimensions[] = {SemanticDimension::Intent,
                                                    SemanticDimension::Logic};

struct SemanticDescription {
  std::string rule_id;
  SemanticDimension dimension = SemanticDimension::Intent;
  std::string summary;    // one sentence
  std::string full_text;  // paragraph; never empty

  bool operator==(const SemanticDescription&) const = default;
};

json to_json(const SemanticDescription& description);
SemanticDescription description_from_json(const json& j);

/// Splits a translation reply of the form "<LABEL>: summary. DETAIL: text"
/// into summary and full text. Throws EmptyTranslation for blank replies.
SemanticDescription parse_translation(std::string_view reply, const std::string& rule_id,
                                      SemanticDimension dimension);

/// One LLM translation; a blank reply is retried once before EmptyTranslation.
SemanticDescription translate_rule(const corpus::DetectionRule& rule, SemanticDimension dimension,
                                   llm::Gateway& gateway);

struct SemanticIndexEntry {
  std::vector<float> vector;  // unit norm
  corpus::DetectionRule rule;
  corpus::RuleLanguage language;
  SemanticDescription description;

  bool operator==(const SemanticIndexEntry&) const = default;
};

/// Immutable after construction; safe to share across threads.
class SemanticIndex {
 public:
  SemanticIndex() = default;
  /// Normalizes every vector and sorts entries by rule id. Throws
  /// DimensionMismatch on a wrong vector length and InvalidArgument on
  /// duplicate ids, zero vectors or a description from the other dimension.
  SemanticIndex(SemanticDimension dimension, std::size_t embed_dim,
                std::vector<SemanticIndexEntry> entries);

  SemanticDimension dimension() const noexcept { return dimension_; }
  std::size_t embed_dim() const noexcept { return embed_dim_; }
  const std::vector<SemanticIndexEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const SemanticIndexEntry* find(std::string_view rule_id) const;

  bool operator==(const SemanticIndex&) const = default;

 private:
  SemanticDimension dimension_ = SemanticDimension::Intent;
  std::size_t embed_dim_ = 0;
  std::vector<SemanticIndexEntry> entries_;
};

/// Which description text is embedded.
enum class EmbedField { FullText, Summary };

/// Per-rule translation and embedding cache: one JSON file per (rule content,
/// dimension, prompt fingerprint, chat model). Changing a prompt template
/// changes the fingerprint and so misses the cache.
class TranslationCache {
 public:
  explicit TranslationCache(std::filesystem::path dir);

  std::string key(const corpus::DetectionRule& rule, SemanticDimension dimension,
                  std::string_view chat_model) const;
  /// Key for the raw-source embedding of a rule.
  std::string source_key(const corpus::DetectionRule& rule) const;
  std::optional<SemanticDescription> description(const std::string& key) const;
  void store_description(const std::string& key, const SemanticDescription& description,
                         std::string_view chat_model);
  std::optional<std::vector<float>> vector(const std::string& key, std::string_view slot) const;
  void store_vector(const std::string& key, std::string_view slot, const std::vector<float>& v);

  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path path_for(const std::string& key) const;
  json load(const std::string& key) const;

  std::filesystem::path dir_;
  mutable std::mutex mutex_;
};

struct BuildOptions {
  TranslationCache* cache = nullptr;
  EmbedField embed_field = EmbedField::FullText;
  std::size_t threads = 4;
};

/// Translates and embeds every rule. Completed work is written to the cache
/// as it finishes, so a failed build resumes where it stopped.
SemanticIndex build_index(const std::vector<corpus::DetectionRule>& rules, SemanticDimension dimension,
                          llm::Gateway& gateway, const BuildOptions& options = {});

/// Translations of every rule for one dimension, in input order, read from
/// and written to the cache when one is given.
std::vector<SemanticDescription> describe_rules(const std::vector<corpus::DetectionRule>& rules,
                                                SemanticDimension dimension, llm::Gateway& gateway,
                                                TranslationCache* cache, std::size_t threads);

inline constexpr int kIndexFormatVersion = 1;

void save_index(const SemanticIndex& index, const std::filesystem::path& path);
/// Throws Io, VersionMismatch or ChecksumMismatch.
SemanticIndex load_index(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Raw-source embeddings, used by the single-space retrieval baseline.

struct SourceIndexEntry {
  std::vector<float> vector;  // unit norm
  corpus::DetectionRule rule;

  bool operator==(const SourceIndexEntry&) const = default;
};

class SourceIndex {
 public:
  SourceIndex() = default;
  SourceIndex(std::size_t embed_dim, std::vector<SourceIndexEntry> entries);

  std::size_t embed_dim() const noexcept { return embed_dim_; }
  const std::vector<SourceIndexEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  bool operator==(const SourceIndex&) const = default;

 private:
  std::size_t embed_dim_ = 0;
  std::vector<SourceIndexEntry> entries_;
};

SourceIndex build_source_index(const std::vector<corpus::DetectionRule>& rules, llm::Gateway& gateway,
                               TranslationCache* cache = nullptr);
void save_source_index(const SourceIndex& index, const std::filesystem::path& path);
SourceIndex load_source_index(const std::filesystem::path& path);

/// Scales v to unit L2 norm (accumulated in double). Throws InvalidArgument
/// for the zero vector.
std::vector<float> normalized(const std::vector<float>& v);

}  // namespace unirule::kb

#endif  // UNIRULE_SEMANTIC_KB_HPP
