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

// Exhaustive cosine search over the intent and logic indexes, and a JSON-RPC
// tool server that exposes it.

#ifndef UNIRULE_RETRIEVAL_HPP
#define UNIRULE_RETRIEVAL_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <vector>

#include "unirule/corpus.hpp"
#include "unirule/llm.hpp"
#include "unirule/semantic_kb.hpp"

namespace unirule::retrieval {

struct SearchQuery {
  std::string query;
  kb::SemanticDimension space = kb::SemanticDimension::Intent;
  std::size_t k = 5;
  std::optional<corpus::RuleLanguage> language_filter;

  /// Throws InvalidArgument for an empty query or k == 0.
  void validate() const;
};

json to_json(const SearchQuery& query);

struct SearchResult {
  corpus::DetectionRule rule;
  corpus::RuleLanguage language;
  kb::SemanticDescription description;
  double score = 0.0;

  bool operator==(const SearchResult&) const = default;
};

/// Full record, used in traces.
json to_json(const SearchResult& result);
SearchResult result_from_json(const json& j);

/// Compact record sent to a model: rule_id, language, score rounded to six
/// decimals, description_summary and rule_source_text (cut to
/// max_source_chars when non-zero).
json to_tool_json(const SearchResult& result, std::size_t max_source_chars = 0);

struct DualIndex {
  kb::SemanticIndex intent;
  kb::SemanticIndex logic;

  const kb::SemanticIndex& get(kb::SemanticDimension space) const {
    return space == kb::SemanticDimension::Intent ? intent : logic;
  }
};

/// Dot product accumulated in double.
double dot(std::span<const float> a, std::span<const double> b);

/// Unit-norm double copy of an embedding.
std::vector<double> unit_query(const std::vector<float>& embedding);

/// Scores every entry passing the filter and returns the best
/// min(k, matches), by score descending then rule id ascending.
std::vector<SearchResult> search_index(const kb::SemanticIndex& index, std::span<const double> query,
                                       std::size_t k,
                                       const std::optional<corpus::RuleLanguage>& language_filter);

/// Embeds the query text once and searches the index for its space.
std::vector<SearchResult> search(const DualIndex& indexes, const SearchQuery& query, llm::Gateway& gateway);

struct SourceHit {
  const kb::SourceIndexEntry* entry = nullptr;
  double score = 0.0;
};

/// Same ranking contract as search_index, over raw-source embeddings.
std::vector<SourceHit> search_source(const kb::SourceIndex& index, std::span<const double> query, std::size_t k);

/// Search bound to a pair of indexes and a gateway. Thread-safe.
class Retriever {
 public:
  Retriever(std::shared_ptr<const DualIndex> indexes, llm::Gateway& gateway, bool cache_queries = false);

  std::vector<SearchResult> search(const SearchQuery& query);
  const DualIndex& indexes() const noexcept { return *indexes_; }

 private:
  std::vector<double> embed_query(const std::string& text);

  std::shared_ptr<const DualIndex> indexes_;
  llm::Gateway& gateway_;
  bool cache_queries_;
  std::mutex mutex_;
  std::map<std::string, std::vector<double>> query_cache_;
};

// ---------------------------------------------------------------------------
// JSON-RPC tool server

namespace rpc {
inline constexpr int kParseError = -32700;
inline constexpr int kInvalidRequest = -32600;
inline constexpr int kMethodNotFound = -32601;
inline constexpr int kInvalidParams = -32602;
inline constexpr int kProviderFailure = -32000;
}  // namespace rpc

inline constexpr const char* kSearchToolName = "search_rules";

/// Schema of the single advertised tool.
json search_tool_schema();

class McpServer {
 public:
  explicit McpServer(Retriever& retriever, std::size_t max_source_chars = 0);

  /// Handles one decoded request. Returns nullopt for notifications.
  std::optional<json> handle(const json& request);
  /// Decodes, handles and encodes one message body; parse failures become
  /// a -32700 error response.
  std::optional<std::string> handle_text(std::string_view body);

  /// Serves messages from in to out until end of input. Each message is
  /// either one JSON line or a Content-Length framed body; replies use the
  /// framing of the request.
  void serve_stream(std::istream& in, std::ostream& out);

  /// Listens on host:port (port 0 picks a free one) and serves each
  /// connection on its own thread with the same framing. on_listening
  /// receives the bound port. Returns when stop is requested.
  void serve_tcp(const std::string& host, std::uint16_t port, std::stop_token stop,
                 const std::function<void(std::uint16_t)>& on_listening = {});

 private:
  json call_tool(const json& params);

  Retriever& retriever_;
  std::size_t max_source_chars_;
};

}  // namespace unirule::retrieval

#endif  // UNIRULE_RETRIEVAL_HPP
