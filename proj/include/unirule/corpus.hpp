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

// Rule corpus ingestion: parsers for Splunk security-content YAML, Elastic
// detection-rules TOML and Snort rule text, directory loading, and the
// deterministic train/test split.

#ifndef UNIRULE_CORPUS_HPP
#define UNIRULE_CORPUS_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "unirule/util.hpp"

namespace unirule::corpus {

/// Lowercase, whitespace-free language token. The three built-in languages
/// have named constructors; any other token is accepted as an extension.
class RuleLanguage {
 public:
  RuleLanguage() = default;
  /// Normalizes case; throws InvalidArgument on empty or whitespace tokens.
  explicit RuleLanguage(std::string_view token);

  static RuleLanguage splunk() { return RuleLanguage("splunk"); }
  static RuleLanguage elastic() { return RuleLanguage("elastic"); }
  static RuleLanguage snort() { return RuleLanguage("snort"); }

  const std::string& str() const noexcept { return token_; }
  bool builtin() const noexcept;

  auto operator<=>(const RuleLanguage&) const = default;

 private:
  std::string token_;
};

/// The three languages of the evaluation grid, in report order.
const std::vector<RuleLanguage>& builtin_languages();

/// Metadata values are ordered lists; most keys hold exactly one value, but
/// repeated Snort options (e.g. several `content` matches) keep every
/// occurrence in signature order.
using Metadata = std::map<std::string, std::vector<std::string>>;

struct DetectionRule {
  std::string id;
  RuleLanguage language;
  std::string source_text;
  std::string title;
  std::string description;
  Metadata extra;

  /// First value stored under key, or empty.
  std::string meta(const std::string& key) const;

  bool operator==(const DetectionRule&) const = default;
};

json to_json(const DetectionRule& rule);
DetectionRule rule_from_json(const json& j);

/// Hex SHA-256 of the rule body; the id of rules whose source has none.
std::string content_id(std::string_view source_text);

DetectionRule parse_splunk(std::string_view document);
DetectionRule parse_elastic(std::string_view document);

/// One Snort option in source order. `value` is kept verbatim (quotes and
/// escapes included) so a rule can be rendered back token for token.
struct SnortOption {
  std::string key;
  std::optional<std::string> value;

  bool operator==(const SnortOption&) const = default;
};

struct SnortRule {
  std::string action;
  std::string protocol;
  std::string src_addr;
  std::string src_port;
  std::string direction;
  std::string dst_addr;
  std::string dst_port;
  std::vector<SnortOption> options;

  bool operator==(const SnortRule&) const = default;
};

/// Structural parse of one rule line. Returns nullopt for blank and comment
/// lines; throws MalformedHeader or UnbalancedOptions.
std::optional<SnortRule> parse_snort_structure(std::string_view line);
std::string render_snort(const SnortRule& rule);

/// Returns nullopt for blank and comment lines (skip, not an error).
std::optional<DetectionRule> parse_snort(std::string_view line);

/// Removes the surrounding quotes and Snort's own escapes (\; \" \\): "a\;b" -> a;b.
/// Other backslashes, as in PCRE bodies, are kept.
std::string unquote_snort_value(std::string_view value);

struct ParseFailure {
  std::string location;  // file path, with ":<line>" for Snort
  std::string error;
};

struct LoadResult {
  std::vector<DetectionRule> rules;  // sorted by id, ids unique
  std::vector<ParseFailure> failures;
};

/// Parses every .yml/.yaml (splunk), .toml (elastic) or .rules (snort) file
/// under root. Individual parse failures are collected, never fatal; only an
/// unreadable root raises Io. Duplicate ids keep the first file in path order
/// and report the rest.
LoadResult load_corpus(const std::filesystem::path& root, const RuleLanguage& language,
                       std::size_t threads = 1);

struct CorpusSplit {
  std::vector<DetectionRule> train;
  std::vector<DetectionRule> test;
  std::uint64_t seed = 0;
  double ratio = 0.0;
};

/// |train| = floor(ratio * N + 0.5) after a seeded shuffle.
std::size_t train_size(std::size_t n, double ratio);

/// Seeded Fisher-Yates shuffle then prefix split. Throws InvalidRatio unless
/// 0 < ratio < 1, and InvalidArgument for an empty input.
CorpusSplit split_corpus(std::vector<DetectionRule> rules, double ratio, std::uint64_t seed);

/// Corpus file: one JSON object per line, sorted by id.
void save_corpus(const std::filesystem::path& path, std::vector<DetectionRule> rules);
std::vector<DetectionRule> load_corpus_file(const std::filesystem::path& path);

}  // namespace unirule::corpus

#endif  // UNIRULE_CORPUS_HPP
