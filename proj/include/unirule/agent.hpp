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

// Rule generation: the tool-calling agent that searches the knowledge base
// on its own terms, and the fixed comparison generators.

#ifndef UNIRULE_AGENT_HPP
#define UNIRULE_AGENT_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "unirule/contexts.hpp"
#include "unirule/corpus.hpp"
#include "unirule/llm.hpp"
#include "unirule/retrieval.hpp"
#include "unirule/semantic_kb.hpp"

namespace unirule::agent {

enum class Method { Unirule, Baseline, RandomRag, StdRag, HumanAuthored, IntentOnly, LogicOnly };

std::string_view to_string(Method method);
Method method_from_string(std::string_view text);
/// Methods that run the search loop.
bool is_agentic(Method method);

/// The comparison set used for evaluation, in report order.
inline constexpr Method kEvaluatedMethods[] = {Method::Baseline, Method::RandomRag, Method::StdRag,
                                               Method::HumanAuthored, Method::Unirule};

struct RetrievalCall {
  int iteration = 0;
  std::string tool;
  retrieval::SearchQuery query;
  std::vector<retrieval::SearchResult> results;
};

struct GenerationTrace {
  contexts::ContextSpec context;
  corpus::RuleLanguage target_language;
  Method method = Method::Baseline;
  std::vector<RetrievalCall> calls;
  std::vector<std::string> retrieved_union;  // rule ids, first-seen order
  std::vector<std::string> references;       // rule ids injected by the RAG baselines
  std::string output_rule;
  llm::TokenUsage usage;
  std::size_t llm_calls = 0;
  std::size_t tool_errors = 0;
  std::optional<std::string> error;  // set when generation failed

  std::string instance_id() const { return context.instance_id(); }
  bool ok() const { return !error && !output_rule.empty(); }
};

json to_json(const GenerationTrace& trace);
GenerationTrace trace_from_json(const json& j);
void save_traces(const std::filesystem::path& path, const std::vector<GenerationTrace>& traces);
std::vector<GenerationTrace> load_traces(const std::filesystem::path& path);

struct AgentBudget {
  int max_iterations = 8;              // tool attempts, including failed ones
  std::size_t max_total_results = 64;  // across all calls of one trace
  std::optional<int> max_output_tokens;
  std::size_t max_reference_chars = 0;  // per retrieved rule source; 0 keeps it whole

  void validate() const;
};

/// The knowledge-base search the agent calls.
using SearchFn = std::function<std::vector<retrieval::SearchResult>(const retrieval::SearchQuery&)>;

/// Tools offered in a mode: search_intent and/or search_logic.
std::vector<llm::ToolSchema> agent_tools(Method mode);

/// Body of the single fenced block in text; nullopt when there is none,
/// more than one, or it is empty.
std::optional<std::string> extract_fenced_rule(std::string_view text);

/// Runs the search loop for Unirule, IntentOnly or LogicOnly. Throws
/// BudgetExceeded when the model asks for a tool after max_iterations
/// attempts and MalformedOutput when no rule block arrives after one reprompt.
GenerationTrace generate_unirule(const contexts::ContextSpec& context, const corpus::RuleLanguage& target,
                                 const SearchFn& search, llm::Gateway& gateway, const AgentBudget& budget,
                                 Method mode = Method::Unirule);

struct BaselineResources {
  const std::vector<corpus::DetectionRule>* train = nullptr;  // random_rag, std_rag
  const kb::SourceIndex* source_index = nullptr;              // std_rag
  const corpus::DetectionRule* ground_truth = nullptr;        // human_authored
  std::uint64_t seed = 0;
  std::size_t k = 15;
  std::size_t max_reference_chars = 0;
};

/// Reference rule ids random_rag would inject for this instance.
std::vector<std::string> random_references(const std::vector<corpus::DetectionRule>& train,
                                           std::string_view instance_id, std::uint64_t seed, std::size_t k);

GenerationTrace generate_baseline(const contexts::ContextSpec& context, const corpus::RuleLanguage& target,
                                  Method mode, const BaselineResources& resources, llm::Gateway& gateway,
                                  const AgentBudget& budget = {});

struct TraceSummary {
  std::string method;
  std::string scenario;  // "all" or "<language>/<type>"
  std::size_t traces = 0;
  double mean_calls = 0.0;
  double mean_rules_per_call = 0.0;
  double mean_union = 0.0;
};

json to_json(const TraceSummary& summary);

/// Per method, then per (method, scenario). Throws InvalidArgument when
/// traces is empty.
std::vector<TraceSummary> trace_stats(const std::vector<GenerationTrace>& traces);

struct GenerationPlan {
  std::vector<contexts::ContextSpec> contexts;
  std::vector<Method> methods;
  const std::vector<corpus::DetectionRule>* train = nullptr;
  const std::vector<corpus::DetectionRule>* test = nullptr;  // ground truth for human_authored
  const kb::SourceIndex* source_index = nullptr;
  SearchFn search;
  AgentBudget budget;
  std::uint64_t seed = 0;
  std::size_t threads = 4;
};

/// Runs every (context, method) pair. Failures are recorded in the trace
/// rather than thrown. Output order is contexts, then methods, as given.
std::vector<GenerationTrace> run_generation(const GenerationPlan& plan, llm::Gateway& gateway);

}  // namespace unirule::agent

#endif  // UNIRULE_AGENT_HPP
