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

#include "unirule/agent.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "unirule/prompts.hpp"

namespace unirule::agent {

namespace {

struct MethodName {
  Method method;
  std::string_view name;
};

constexpr MethodName kMethodNames[] = {
    {Method::Unirule, "unirule"},           {Method::Baseline, "baseline"},
    {Method::RandomRag, "random_rag"},      {Method::StdRag, "std_rag"},
    {Method::HumanAuthored, "human_authored"}, {Method::IntentOnly, "intent_only"},
    {Method::LogicOnly, "logic_only"},
};

constexpr std::string_view kIntentTool = "search_intent";
constexpr std::string_view kLogicTool = "search_logic";

}  // namespace

std::string_view to_string(Method method) {
  for (const auto& m : kMethodNames) {
    if (m.method == method) return m.name;
  }
  return "unknown";
}

Method method_from_string(std::string_view text) {
  for (const auto& m : kMethodNames) {
    if (m.name == text) return m.method;
  }
  throw Error(Errc::InvalidArgument, "unknown method '" + std::string(text) + "'");
}

bool is_agentic(Method method) {
  return method == Method::Unirule || method == Method::IntentOnly || method == Method::LogicOnly;
}

void AgentBudget::validate() const {
  if (max_iterations < 0) throw Error(Errc::InvalidArgument, "max_iterations must be >= 0");
  if (max_total_results == 0) throw Error(Errc::InvalidArgument, "max_total_results must be positive");
  if (max_output_tokens && *max_output_tokens <= 0) {
    throw Error(Errc::InvalidArgument, "max_output_tokens must be positive");
  }
}

// ---------------------------------------------------------------------------
// Trace records

json to_json(const GenerationTrace& t) {
  json calls = json::array();
  for (const auto& c : t.calls) {
    json results = json::array();
    for (const auto& r : c.results) results.push_back(retrieval::to_json(r));
    calls.push_back({{"iteration", c.iteration},
                     {"tool", c.tool},
                     {"query", retrieval::to_json(c.query)},
                     {"results", std::move(results)}});
  }
  json j{{"instance_id", t.instance_id()},
         {"context", contexts::to_json(t.context)},
         {"target_language", t.target_language.str()},
         {"method", to_string(t.method)},
         {"calls", std::move(calls)},
         {"retrieved_union", t.retrieved_union},
         {"references", t.references},
         {"output_rule", t.output_rule},
         {"token_usage",
          {{"prompt_tokens", t.usage.prompt_tokens}, {"completion_tokens", t.usage.completion_tokens}}},
         {"llm_calls", t.llm_calls},
         {"tool_errors", t.tool_errors}};
  j["error"] = t.error ? json(*t.error) : json(nullptr);
  return j;
}

GenerationTrace trace_from_json(const json& j) {
  try {
    GenerationTrace t;
    t.context = contexts::context_from_json(j.at("context"));
    t.target_language = corpus::RuleLanguage(j.at("target_language").get<std::string>());
    t.method = method_from_string(j.at("method").get<std::string>());
    for (const auto& c : j.at("calls")) {
      RetrievalCall call;
      call.iteration = c.at("iteration").get<int>();
      call.tool = c.at("tool").get<std::string>();
      const auto& q = c.at("query");
      call.query.query = q.at("query").get<std::string>();
      call.query.space = kb::dimension_from_string(q.at("space").get<std::string>());
      call.query.k = q.at("k").get<std::size_t>();
      if (!q.at("language").is_null()) {
        call.query.language_filter = corpus::RuleLanguage(q.at("language").get<std::string>());
      }
      for (const auto& r : c.at("results")) call.results.push_back(retrieval::result_from_json(r));
      t.calls.push_back(std::move(call));
    }
    t.retrieved_union = j.at("retrieved_union").get<std::vector<std::string>>();
    t.references = j.value("references", std::vector<std::string>{});
    t.output_rule = j.at("output_rule").get<std::string>();
    if (const auto usage = j.find("token_usage"); usage != j.end()) {
      t.usage.prompt_tokens = usage->value("prompt_tokens", std::int64_t{0});
      t.usage.completion_tokens = usage->value("completion_tokens", std::int64_t{0});
    }
    t.llm_calls = j.value("llm_calls", std::size_t{0});
    t.tool_errors = j.value("tool_errors", std::size_t{0});
    if (const auto err = j.find("error"); err != j.end() && err->is_string()) t.error = err->get<std::string>();
    return t;
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaError, std::string("bad trace record: ") + e.what());
  }
}

void save_traces(const std::filesystem::path& path, const std::vector<GenerationTrace>& traces) {
  std::vector<json> rows;
  rows.reserve(traces.size());
  for (const auto& t : traces) rows.push_back(to_json(t));
  write_jsonl(path, rows);
}

std::vector<GenerationTrace> load_traces(const std::filesystem::path& path) {
  std::vector<GenerationTrace> out;
  for (const auto& row : read_jsonl(path)) out.push_back(trace_from_json(row));
  return out;
}

// ---------------------------------------------------------------------------
// Shared pieces

std::vector<llm::ToolSchema> agent_tools(Method mode) {
  const auto schema = [](std::string_view name, std::string_view what) {
    return llm::ToolSchema{
        std::string(name),
        "Search the rule knowledge base by " + std::string(what) +
            ". Returns the most similar rules with their summaries and source.",
        json{{"type", "object"},
             {"properties",
              {{"query", {{"type", "string"}, {"description", "What to look for, in plain language"}}},
               {"k", {{"type", "integer"}, {"minimum", 1}, {"description", "Number of results (default 5)"}}},
               {"language", {{"type", "string"}, {"description", "Only return rules in this language"}}}}},
             {"required", {"query"}}}};
  };
  std::vector<llm::ToolSchema> tools;
  if (mode == Method::Unirule || mode == Method::IntentOnly) {
    tools.push_back(schema(kIntentTool, "detection intent (the adversarial goal a rule targets)"));
  }
  if (mode == Method::Unirule || mode == Method::LogicOnly) {
    tools.push_back(schema(kLogicTool, "detection logic (the matching pattern a rule implements)"));
  }
  if (tools.empty()) throw Error(Errc::InvalidArgument, "method " + std::string(to_string(mode)) + " has no tools");
  return tools;
}

std::optional<std::string> extract_fenced_rule(std::string_view text) {
  std::vector<std::string> blocks;
  std::size_t pos = 0;
  while (true) {
    const auto open = text.find("```", pos);
    if (open == std::string_view::npos) break;
    const auto body_start = text.find('\n', open);
    if (body_start == std::string_view::npos) return std::nullopt;
    const auto close = text.find("```", body_start + 1);
    if (close == std::string_view::npos) return std::nullopt;
    blocks.emplace_back(trim(text.substr(body_start + 1, close - body_start - 1)));
    pos = close + 3;
  }
  if (blocks.size() != 1 || blocks.front().empty()) return std::nullopt;
  return blocks.front();
}

namespace {

// Sends the conversation and insists on one fenced rule, reprompting once.
std::string converse_for_rule(std::vector<llm::ChatMessage>& messages, std::span<const llm::ToolSchema> tools,
                              const corpus::RuleLanguage& target, llm::Gateway& gateway,
                              const llm::ChatOptions& options, GenerationTrace& trace,
                              const std::function<bool(const llm::ChatMessage&)>& on_tool_calls) {
  bool reprompted = false;
  while (true) {
    const auto response = gateway.chat(messages, tools, options);
    ++trace.llm_calls;
    trace.usage += response.usage;
    messages.push_back(response.message);
    if (!response.message.tool_calls.empty() && on_tool_calls && on_tool_calls(response.message)) continue;
    if (auto rule = extract_fenced_rule(response.message.content)) return *rule;
    if (reprompted) {
      throw Error(Errc::MalformedOutput, "no single fenced rule block after a corrective reprompt");
    }
    reprompted = true;
    messages.push_back(llm::ChatMessage::user(prompts::fill("reformat_user", {{"language", target.str()}})));
  }
}

llm::ChatOptions options_for(const AgentBudget& budget) {
  llm::ChatOptions options;
  options.max_tokens = budget.max_output_tokens;
  return options;
}

std::string clip(const std::string& text, std::size_t limit) {
  if (limit == 0 || text.size() <= limit) return text;
  return text.substr(0, limit) + "\n...";
}

json tool_error(std::string message) { return json{{"error", std::move(message)}}; }

}  // namespace

// ---------------------------------------------------------------------------
// Agent loop

GenerationTrace generate_unirule(const contexts::ContextSpec& context, const corpus::RuleLanguage& target,
                                 const SearchFn& search, llm::Gateway& gateway, const AgentBudget& budget,
                                 Method mode) {
  if (!is_agentic(mode)) throw Error(Errc::InvalidArgument, "generate_unirule needs an agentic method");
  budget.validate();
  context.validate();
  const auto tools = agent_tools(mode);

  GenerationTrace trace;
  trace.context = context;
  trace.target_language = target;
  trace.method = mode;

  std::vector<llm::ChatMessage> messages = {
      llm::ChatMessage::system(prompts::fill("agent_system", {{"language", target.str()}})),
      llm::ChatMessage::user(prompts::fill(
          "generate_user", {{"language", target.str()}, {"context", context.text}, {"references", ""}}))};

  int attempts = 0;
  std::size_t results_seen = 0;
  std::set<std::string> seen;

  const auto run_tools = [&](const llm::ChatMessage& reply) {
    for (const auto& call : reply.tool_calls) {
      if (attempts >= budget.max_iterations) {
        throw Error(Errc::BudgetExceeded, "agent asked for tool call " + std::to_string(attempts + 1) +
                                              " with a budget of " + std::to_string(budget.max_iterations));
      }
      ++attempts;
      const bool offered = std::any_of(tools.begin(), tools.end(), [&](const auto& t) { return t.name == call.name; });
      if (!offered) {
        ++trace.tool_errors;
        messages.push_back(llm::ChatMessage::tool(call.id, tool_error("tool not found: " + call.name).dump()));
        continue;
      }
      retrieval::SearchQuery query;
      query.space = call.name == kIntentTool ? kb::SemanticDimension::Intent : kb::SemanticDimension::Logic;
      try {
        const json args = json::parse(call.arguments);
        query.query = args.at("query").get<std::string>();
        const auto k = args.value("k", std::int64_t{5});
        if (k < 1) throw Error(Errc::InvalidArgument, "k must be at least 1");
        query.k = static_cast<std::size_t>(k);
        if (const auto lang = args.find("language"); lang != args.end() && !lang->is_null()) {
          query.language_filter = corpus::RuleLanguage(lang->get<std::string>());
        }
        query.validate();
      } catch (const std::exception& e) {
        ++trace.tool_errors;
        messages.push_back(llm::ChatMessage::tool(call.id, tool_error(std::string("invalid arguments: ") + e.what()).dump()));
        continue;
      }
      const std::size_t remaining = budget.max_total_results - std::min(results_seen, budget.max_total_results);
      if (remaining == 0) {
        ++trace.tool_errors;
        messages.push_back(llm::ChatMessage::tool(call.id, tool_error("result budget exhausted").dump()));
        continue;
      }
      query.k = std::min(query.k, remaining);

      RetrievalCall record{attempts, call.name, query, search(query)};
      results_seen += record.results.size();
      json shown = json::array();
      std::size_t omitted = 0;
      for (const auto& r : record.results) {
        if (!seen.insert(r.rule.id).second) {
          ++omitted;
          continue;
        }
        trace.retrieved_union.push_back(r.rule.id);
        shown.push_back(retrieval::to_tool_json(r, budget.max_reference_chars));
      }
      json payload{{"results", std::move(shown)}};
      if (omitted > 0) payload["omitted_duplicates"] = omitted;
      messages.push_back(llm::ChatMessage::tool(call.id, payload.dump()));
      trace.calls.push_back(std::move(record));
    }
    return true;
  };

  trace.output_rule = converse_for_rule(messages, tools, target, gateway, options_for(budget), trace, run_tools);
  return trace;
}

// ---------------------------------------------------------------------------
// Comparison generators

std::vector<std::string> random_references(const std::vector<corpus::DetectionRule>& train,
                                           std::string_view instance_id, std::uint64_t seed, std::size_t k) {
  std::vector<std::string> ids;
  ids.reserve(train.size());
  for (const auto& r : train) ids.push_back(r.id);
  std::sort(ids.begin(), ids.end());
  Rng rng(mix_seed(seed, instance_id));
  rng.shuffle(ids);
  ids.resize(std::min(k, ids.size()));
  return ids;
}

namespace {

std::string format_references(const std::vector<const corpus::DetectionRule*>& refs, std::size_t max_chars) {
  std::string out;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& r = *refs[i];
    out += "[" + std::to_string(i + 1) + "] " + r.id + " (" + r.language.str() + ")";
    if (!r.title.empty()) out += ": " + r.title;
    out += "\n```\n" + clip(r.source_text, max_chars) + "\n```\n";
  }
  return out;
}

}  // namespace

GenerationTrace generate_baseline(const contexts::ContextSpec& context, const corpus::RuleLanguage& target,
                                  Method mode, const BaselineResources& resources, llm::Gateway& gateway,
                                  const AgentBudget& budget) {
  context.validate();
  GenerationTrace trace;
  trace.context = context;
  trace.target_language = target;
  trace.method = mode;

  if (mode == Method::HumanAuthored) {
    if (!resources.ground_truth) throw Error(Errc::InvalidArgument, "human_authored needs the test rule");
    trace.output_rule = resources.ground_truth->source_text;
    return trace;
  }

  std::vector<const corpus::DetectionRule*> refs;
  if (mode == Method::RandomRag || mode == Method::StdRag) {
    if (!resources.train || resources.train->empty()) {
      throw Error(Errc::InvalidArgument, std::string(to_string(mode)) + " needs the training collection");
    }
    if (mode == Method::RandomRag) {
      std::map<std::string_view, const corpus::DetectionRule*> by_id;
      for (const auto& r : *resources.train) by_id.emplace(r.id, &r);
      for (const auto& id : random_references(*resources.train, context.instance_id(), resources.seed, resources.k)) {
        refs.push_back(by_id.at(id));
      }
    } else {
      if (!resources.source_index) throw Error(Errc::InvalidArgument, "std_rag needs the source embedding index");
      const auto query = retrieval::unit_query(gateway.embed({context.text}).front());
      for (const auto& hit : retrieval::search_source(*resources.source_index, query, resources.k)) {
        refs.push_back(&hit.entry->rule);
      }
    }
    for (const auto* r : refs) trace.references.push_back(r->id);
  } else if (mode != Method::Baseline) {
    throw Error(Errc::InvalidArgument, "generate_baseline cannot run " + std::string(to_string(mode)));
  }

  const std::string references =
      refs.empty() ? std::string()
                   : prompts::fill("references_block",
                                   {{"references", format_references(refs, resources.max_reference_chars)}});
  std::vector<llm::ChatMessage> messages = {
      llm::ChatMessage::system(prompts::fill("direct_system", {{"language", target.str()}})),
      llm::ChatMessage::user(prompts::fill(
          "generate_user", {{"language", target.str()}, {"context", context.text}, {"references", references}}))};
  trace.output_rule = converse_for_rule(messages, {}, target, gateway, options_for(budget), trace, {});
  return trace;
}

// ---------------------------------------------------------------------------
// Statistics and batch runs

json to_json(const TraceSummary& s) {
  return json{{"method", s.method},
              {"scenario", s.scenario},
              {"traces", s.traces},
              {"mean_calls", s.mean_calls},
              {"mean_rules_per_call", s.mean_rules_per_call},
              {"mean_union", s.mean_union}};
}

std::vector<TraceSummary> trace_stats(const std::vector<GenerationTrace>& traces) {
  if (traces.empty()) throw Error(Errc::InvalidArgument, "no traces to summarize");
  struct Acc {
    std::size_t traces = 0, calls = 0, results = 0, union_size = 0;
  };
  std::vector<std::string> method_order;
  std::map<std::string, Acc> per_method;
  std::map<std::pair<std::string, std::string>, Acc> per_cell;
  for (const auto& t : traces) {
    const std::string method(to_string(t.method));
    if (!per_method.count(method)) method_order.push_back(method);
    std::size_t results = 0;
    for (const auto& c : t.calls) results += c.results.size();
    for (Acc* acc : {&per_method[method], &per_cell[{method, t.context.scenario()}]}) {
      ++acc->traces;
      acc->calls += t.calls.size();
      acc->results += results;
      acc->union_size += t.retrieved_union.size();
    }
  }
  const auto summarize = [](std::string method, std::string scenario, const Acc& a) {
    TraceSummary s{std::move(method), std::move(scenario), a.traces};
    s.mean_calls = static_cast<double>(a.calls) / static_cast<double>(a.traces);
    s.mean_rules_per_call = a.calls == 0 ? 0.0 : static_cast<double>(a.results) / static_cast<double>(a.calls);
    s.mean_union = static_cast<double>(a.union_size) / static_cast<double>(a.traces);
    return s;
  };
  std::vector<TraceSummary> out;
  for (const auto& m : method_order) out.push_back(summarize(m, "all", per_method.at(m)));
  for (const auto& m : method_order) {
    for (const auto& [key, acc] : per_cell) {
      if (key.first == m) out.push_back(summarize(m, key.second, acc));
    }
  }
  return out;
}

std::vector<GenerationTrace> run_generation(const GenerationPlan& plan, llm::Gateway& gateway) {
  plan.budget.validate();
  std::map<std::string, const corpus::DetectionRule*> truth;
  if (plan.test) {
    for (const auto& r : *plan.test) truth.emplace(r.id, &r);
  }
  const std::size_t jobs = plan.contexts.size() * plan.methods.size();
  std::vector<GenerationTrace> out(jobs);
  parallel_for(jobs, plan.threads, [&](std::size_t i) {
    const auto& context = plan.contexts[i / plan.methods.size()];
    const Method method = plan.methods[i % plan.methods.size()];
    try {
      if (is_agentic(method)) {
        if (!plan.search) throw Error(Errc::InvalidArgument, "agentic generation needs the knowledge base");
        out[i] = generate_unirule(context, context.language, plan.search, gateway, plan.budget, method);
      } else {
        BaselineResources resources;
        resources.train = plan.train;
        resources.source_index = plan.source_index;
        const auto it = truth.find(context.rule_id);
        resources.ground_truth = it == truth.end() ? nullptr : it->second;
        resources.seed = plan.seed;
        resources.max_reference_chars = plan.budget.max_reference_chars;
        out[i] = generate_baseline(context, context.language, method, resources, gateway, plan.budget);
      }
    } catch (const Error& e) {
      if (e.code() == Errc::InvalidArgument) throw;
      GenerationTrace failed;
      failed.context = context;
      failed.target_language = context.language;
      failed.method = method;
      failed.error = e.what();
      out[i] = std::move(failed);
    }
  });
  return out;
}

}  // namespace unirule::agent
