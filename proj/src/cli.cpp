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

#include "unirule/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "unirule/agent.hpp"
#include "unirule/annotate.hpp"
#include "unirule/arena.hpp"
#include "unirule/contexts.hpp"
#include "unirule/corpus.hpp"
#include "unirule/error.hpp"
#include "unirule/formal.hpp"
#include "unirule/llm.hpp"
#include "unirule/retrieval.hpp"
#include "unirule/semantic_kb.hpp"

namespace unirule::cli {
namespace {

namespace fs = std::filesystem;

std::atomic<bool> g_interrupted{false};

extern "C" void on_interrupt(int) { g_interrupted.store(true); }

struct GlobalOptions {
  std::string provider = "mock";
  std::string mock_script;
  std::size_t threads = 4;
  std::string base_url;
  std::string chat_model;
  std::string embed_model;
};

std::unique_ptr<llm::Gateway> make_gateway(const GlobalOptions& g) {
  if (g.provider == "mock") {
    auto mock = std::make_shared<llm::MockProvider>();
    if (!g.mock_script.empty()) {
      json script;
      try {
        script = json::parse(read_file(g.mock_script));
      } catch (const json::exception& e) {
        throw Error(Errc::SchemaError, "mock script " + g.mock_script + ": " + e.what());
      }
      mock->load_script(script);
    }
    mock->set_fallback(llm::default_mock_reply);
    llm::ProviderConfig config;
    config.max_parallel_requests = std::max<std::size_t>(1, g.threads);
    return std::make_unique<llm::Gateway>(config, mock);
  }
  auto config = llm::ProviderConfig::from_env();
  if (!g.base_url.empty()) config.base_url = g.base_url;
  if (!g.chat_model.empty()) config.chat_model = g.chat_model;
  if (!g.embed_model.empty()) config.embed_model = g.embed_model;
  config.max_parallel_requests = std::max<std::size_t>(1, g.threads);
  if (config.chat_model.empty() || config.embed_model.empty()) {
    throw Error(Errc::InvalidArgument, "openai provider needs --chat-model and --embed-model "
                                       "(or UNIRULE_CHAT_MODEL and UNIRULE_EMBED_MODEL)");
  }
  config.validate();
  auto provider = std::make_shared<llm::OpenAiProvider>(config);
  return std::make_unique<llm::Gateway>(config, provider);
}

// "%.6f" without the negative zero.
std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", std::fabs(v) < 5e-7 ? 0.0 : v);
  return buf;
}

std::vector<corpus::DetectionRule> load_corpora(const std::vector<std::string>& paths) {
  std::vector<corpus::DetectionRule> rules;
  std::set<std::string> seen;
  for (const auto& p : paths) {
    for (auto& r : corpus::load_corpus_file(p)) {
      if (!seen.insert(r.id).second) {
        throw Error(Errc::InvalidArgument, "rule id " + r.id + " appears in more than one corpus file");
      }
      rules.push_back(std::move(r));
    }
  }
  std::sort(rules.begin(), rules.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return rules;
}

const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (auto m : {agent::Method::Unirule, agent::Method::Baseline, agent::Method::RandomRag,
                   agent::Method::StdRag, agent::Method::HumanAuthored, agent::Method::IntentOnly,
                   agent::Method::LogicOnly}) {
      out.emplace_back(agent::to_string(m));
    }
    return out;
  }();
  return names;
}

std::vector<std::string> default_methods() {
  std::vector<std::string> out;
  for (auto m : agent::kEvaluatedMethods) out.emplace_back(agent::to_string(m));
  return out;
}

std::shared_ptr<retrieval::DualIndex> load_dual_index(const fs::path& dir) {
  auto indexes = std::make_shared<retrieval::DualIndex>();
  indexes->intent = kb::load_index(dir / "intent.index");
  indexes->logic = kb::load_index(dir / "logic.index");
  return indexes;
}

// Polls the interrupt flag until it is set or `done` becomes true.
void wait_for_interrupt(const std::function<void()>& on_stop, std::stop_token done) {
  while (!done.stop_requested()) {
    if (g_interrupted.load()) {
      on_stop();
      return;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
}

void print_fit(std::ostream& out, const arena::BTFit& fit) {
  out << "anchor: " << fit.anchor << "\n";
  std::size_t width = 0;
  for (const auto& m : fit.methods) width = std::max(width, m.size());
  for (std::size_t i = 0; i < fit.methods.size(); ++i) {
    std::string name = fit.methods[i];
    name.resize(width, ' ');
    out << name << "  xi = " << fixed6(fit.xi[i]) << " ± " << fixed6(fit.se[i]) << "  95% CI ["
        << fixed6(fit.ci_low[i]) << ", " << fixed6(fit.ci_high[i]) << "]"
        << (fit.significant(i) ? "  significant" : "") << "\n";
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-language detection rule generation and pairwise evaluation", "unirule"};
  app.set_config("--config", "", "TOML or INI file with option defaults; flags override it");
  app.require_subcommand(1);
  app.fallthrough();
  app.failure_message(CLI::FailureMessage::help);

  GlobalOptions g;
  app.add_option("--provider", g.provider, "Model backend")
      ->check(CLI::IsMember({"mock", "openai"}))
      ->capture_default_str();
  app.add_option("--mock-script", g.mock_script, "JSON array of canned replies for the mock provider");
  app.add_option("--threads", g.threads, "Worker threads and concurrent model requests")
      ->check(CLI::Range(1, 256))
      ->capture_default_str();
  app.add_option("--base-url", g.base_url, "OpenAI-compatible endpoint (overrides UNIRULE_API_BASE)");
  app.add_option("--chat-model", g.chat_model, "Chat model name");
  app.add_option("--embed-model", g.embed_model, "Embedding model name");

  std::function<void()> action;

  // ingest
  std::string ingest_root, ingest_language, ingest_out;
  bool ingest_strict = false;
  auto* ingest = app.add_subcommand("ingest", "Parse a rule repository into a corpus file");
  ingest->add_option("--root", ingest_root, "Repository directory")->required();
  ingest->add_option("--language", ingest_language, "splunk, elastic, snort or another token")->required();
  ingest->add_option("--out", ingest_out, "Corpus file (JSON lines)")->required();
  ingest->add_flag("--strict", ingest_strict, "Fail when any file does not parse");
  ingest->callback([&] {
    action = [&] {
      const corpus::RuleLanguage language(ingest_language);
      auto result = corpus::load_corpus(ingest_root, language, g.threads);
      for (const auto& f : result.failures) err << "skip " << f.location << ": " << f.error << "\n";
      corpus::save_corpus(ingest_out, result.rules);
      out << "ingested " << result.rules.size() << " " << language.str() << " rules, " << result.failures.size()
          << " skipped\n";
      if (ingest_strict && !result.failures.empty()) {
        throw Error(Errc::MalformedDocument, std::to_string(result.failures.size()) + " files did not parse");
      }
    };
  });

  // split
  std::vector<std::string> split_corpus_paths;
  double split_ratio = 0.8;
  std::uint64_t split_seed = 42;
  std::string split_train, split_test;
  auto* split = app.add_subcommand("split", "Seeded per-language train/test split");
  split->add_option("--corpus", split_corpus_paths, "Corpus files, one per language")->required();
  split->add_option("--ratio", split_ratio, "Training fraction")->capture_default_str();
  split->add_option("--seed", split_seed, "Shuffle seed")->capture_default_str();
  split->add_option("--train", split_train, "Output training corpus")->required();
  split->add_option("--test", split_test, "Output test corpus")->required();
  split->callback([&] {
    action = [&] {
      std::map<corpus::RuleLanguage, std::vector<corpus::DetectionRule>> by_language;
      for (auto& r : load_corpora(split_corpus_paths)) by_language[r.language].push_back(std::move(r));
      if (by_language.empty()) throw Error(Errc::InvalidArgument, "no rules in the input corpora");
      std::vector<corpus::DetectionRule> train, test;
      for (auto& [language, rules] : by_language) {
        auto s = corpus::split_corpus(std::move(rules), split_ratio, mix_seed(split_seed, language.str()));
        out << language.str() << ": " << s.train.size() << " train, " << s.test.size() << " test\n";
        for (auto& r : s.train) train.push_back(std::move(r));
        for (auto& r : s.test) test.push_back(std::move(r));
      }
      corpus::save_corpus(split_train, std::move(train));
      corpus::save_corpus(split_test, std::move(test));
    };
  });

  // translate
  std::vector<std::string> translate_corpus;
  std::string translate_cache, translate_dimension = "both", translate_out;
  auto* translate = app.add_subcommand("translate", "Describe rules as intent and logic text");
  translate->add_option("--corpus", translate_corpus, "Corpus files")->required();
  translate->add_option("--cache", translate_cache, "Translation cache directory")->required();
  translate->add_option("--dimension", translate_dimension, "Which descriptions to produce")
      ->check(CLI::IsMember({"intent", "logic", "both"}))
      ->capture_default_str();
  translate->add_option("--out", translate_out, "Descriptions file (JSON lines)");
  translate->callback([&] {
    action = [&] {
      auto gateway = make_gateway(g);
      const auto rules = load_corpora(translate_corpus);
      kb::TranslationCache cache(translate_cache);
      std::vector<json> rows;
      for (auto d : kb::kDimensions) {
        if (translate_dimension != "both" && translate_dimension != kb::to_string(d)) continue;
        const auto descriptions = kb::describe_rules(rules, d, *gateway, &cache, g.threads);
        for (const auto& desc : descriptions) rows.push_back(kb::to_json(desc));
        out << kb::to_string(d) << ": " << descriptions.size() << " descriptions\n";
      }
      if (!translate_out.empty()) write_jsonl(translate_out, rows);
    };
  });

  // index
  std::vector<std::string> index_corpus;
  std::string index_cache, index_out_dir, index_field = "full_text";
  bool index_no_source = false;
  auto* index = app.add_subcommand("index", "Build the intent, logic and raw-source indexes");
  index->add_option("--corpus", index_corpus, "Training corpus files")->required();
  index->add_option("--cache", index_cache, "Translation cache directory");
  index->add_option("--out-dir", index_out_dir, "Directory for intent.index, logic.index and source.index")
      ->required();
  index->add_option("--embed-field", index_field, "Description text to embed")
      ->check(CLI::IsMember({"full_text", "summary"}))
      ->capture_default_str();
  index->add_flag("--no-source", index_no_source, "Skip the raw-source index");
  index->callback([&] {
    action = [&] {
      auto gateway = make_gateway(g);
      const auto rules = load_corpora(index_corpus);
      std::optional<kb::TranslationCache> cache;
      if (!index_cache.empty()) cache.emplace(index_cache);
      kb::BuildOptions options;
      options.cache = cache ? &*cache : nullptr;
      options.embed_field = index_field == "summary" ? kb::EmbedField::Summary : kb::EmbedField::FullText;
      options.threads = g.threads;
      fs::create_directories(index_out_dir);
      for (auto d : kb::kDimensions) {
        const auto built = kb::build_index(rules, d, *gateway, options);
        kb::save_index(built, fs::path(index_out_dir) / (std::string(kb::to_string(d)) + ".index"));
        out << kb::to_string(d) << ".index: " << built.size() << " entries, dim " << built.embed_dim() << "\n";
      }
      if (!index_no_source) {
        const auto source = kb::build_source_index(rules, *gateway, options.cache);
        kb::save_source_index(source, fs::path(index_out_dir) / "source.index");
        out << "source.index: " << source.size() << " entries\n";
      }
    };
  });

  // serve-mcp
  std::string mcp_index_dir, mcp_tcp;
  std::size_t mcp_max_source = 0;
  bool mcp_cache_queries = false;
  auto* mcp = app.add_subcommand("serve-mcp", "Serve the search tool over JSON-RPC");
  mcp->add_option("--index-dir", mcp_index_dir, "Directory written by index")->required();
  mcp->add_option("--tcp", mcp_tcp, "host:port to listen on instead of stdio");
  mcp->add_option("--max-source-chars", mcp_max_source, "Cut rule sources in results (0 keeps them whole)");
  mcp->add_flag("--cache-queries", mcp_cache_queries, "Reuse query embeddings");
  mcp->callback([&] {
    action = [&] {
      auto gateway = make_gateway(g);
      retrieval::Retriever retriever(load_dual_index(mcp_index_dir), *gateway, mcp_cache_queries);
      retrieval::McpServer server(retriever, mcp_max_source);
      if (mcp_tcp.empty()) {
        server.serve_stream(std::cin, std::cout);
        return;
      }
      const auto colon = mcp_tcp.rfind(':');
      if (colon == std::string::npos) throw Error(Errc::InvalidArgument, "--tcp expects host:port");
      const std::string host = mcp_tcp.substr(0, colon);
      int port = 0;
      try {
        port = std::stoi(mcp_tcp.substr(colon + 1));
      } catch (const std::exception&) {
        port = -1;
      }
      if (port < 0 || port > 65535) throw Error(Errc::InvalidArgument, "bad port in --tcp " + mcp_tcp);
      std::signal(SIGINT, on_interrupt);
      std::signal(SIGTERM, on_interrupt);
      std::stop_source stop;
      std::jthread watcher([&](std::stop_token done) { wait_for_interrupt([&] { stop.request_stop(); }, done); });
      server.serve_tcp(host, static_cast<std::uint16_t>(port), stop.get_token(), [&](std::uint16_t bound) {
        out << "listening on " << host << ":" << bound << std::endl;
      });
    };
  });

  // contexts
  std::vector<std::string> ctx_test;
  std::string ctx_cache, ctx_out;
  std::vector<std::string> ctx_languages, ctx_types;
  std::size_t ctx_n = 100;
  std::uint64_t ctx_seed = 42;
  auto* ctx = app.add_subcommand("contexts", "Sample test rules and build their four contexts");
  ctx->add_option("--test", ctx_test, "Test corpus files")->required();
  ctx->add_option("--cache", ctx_cache, "Translation cache directory");
  ctx->add_option("--languages", ctx_languages, "Languages to include (default: all in the test set)")
      ->delimiter(',');
  ctx->add_option("--types", ctx_types, "Context types (default: all four)")
      ->delimiter(',')
      ->check(CLI::IsMember({"context", "cti", "intent", "logic"}));
  ctx->add_option("--n", ctx_n, "Instances per scenario")->check(CLI::PositiveNumber)->capture_default_str();
  ctx->add_option("--seed", ctx_seed, "Sampling seed")->capture_default_str();
  ctx->add_option("--out", ctx_out, "Contexts file (JSON lines)")->required();
  ctx->callback([&] {
    action = [&] {
      auto gateway = make_gateway(g);
      const auto test = load_corpora(ctx_test);
      std::optional<kb::TranslationCache> cache;
      if (!ctx_cache.empty()) cache.emplace(ctx_cache);
      contexts::ScenarioGridOptions options;
      for (const auto& l : ctx_languages) options.languages.emplace_back(l);
      for (const auto& t : ctx_types) options.types.push_back(contexts::context_type_from_string(t));
      options.n = ctx_n;
      options.seed = ctx_seed;
      options.threads = g.threads;

      // Only rules that can be sampled need translating.
      std::set<corpus::RuleLanguage> wanted(options.languages.begin(), options.languages.end());
      std::vector<corpus::DetectionRule> subset;
      for (const auto& r : test) {
        if (wanted.empty() || wanted.count(r.language)) subset.push_back(r);
      }
      const auto intents = kb::describe_rules(subset, kb::SemanticDimension::Intent, *gateway,
                                              cache ? &*cache : nullptr, g.threads);
      const auto logics = kb::describe_rules(subset, kb::SemanticDimension::Logic, *gateway,
                                             cache ? &*cache : nullptr, g.threads);
      std::map<std::string, contexts::RuleDescriptions> descriptions;
      for (std::size_t i = 0; i < subset.size(); ++i) descriptions[subset[i].id] = {intents[i], logics[i]};

      const auto specs = contexts::build_scenario_contexts(test, descriptions, *gateway, options);
      contexts::save_contexts(ctx_out, specs);
      std::map<std::string, std::size_t> per_scenario;
      for (const auto& s : specs) ++per_scenario[s.scenario()];
      for (const auto& [scenario, count] : per_scenario) out << scenario << ": " << count << "\n";
    };
  });

  // generate
  std::string gen_contexts, gen_index_dir, gen_out, gen_stats;
  std::vector<std::string> gen_train, gen_test;
  std::vector<std::string> gen_methods = default_methods();
  std::uint64_t gen_seed = 42;
  agent::AgentBudget gen_budget;
  auto* gen = app.add_subcommand("generate", "Generate rules for every context with each method");
  gen->add_option("--contexts", gen_contexts, "Contexts file")->required();
  gen->add_option("--train", gen_train, "Training corpus files (reference pool)")->required();
  gen->add_option("--test", gen_test, "Test corpus files (ground truth for human_authored)")->required();
  gen->add_option("--index-dir", gen_index_dir, "Directory written by index")->required();
  gen->add_option("--methods", gen_methods, "Methods to run")
      ->delimiter(',')
      ->check(CLI::IsMember(method_names()))
      ->capture_default_str();
  gen->add_option("--seed", gen_seed, "Seed for reference sampling")->capture_default_str();
  gen->add_option("--max-iterations", gen_budget.max_iterations, "Tool calls per trace")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen->add_option("--max-results", gen_budget.max_total_results, "Retrieved rules per trace")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen->add_option("--reference-chars", gen_budget.max_reference_chars,
                  "Cut each retrieved or injected rule source (0 keeps it whole)");
  gen->add_option("--out", gen_out, "Traces file (JSON lines)")->required();
  gen->add_option("--stats", gen_stats, "Retrieval statistics (JSON)");
  gen->callback([&] {
    action = [&] {
      auto gateway = make_gateway(g);
      const auto specs = contexts::load_contexts(gen_contexts);
      const auto train = load_corpora(gen_train);
      const auto test = load_corpora(gen_test);
      retrieval::Retriever retriever(load_dual_index(gen_index_dir), *gateway, true);
      agent::GenerationPlan plan;
      plan.contexts = specs;
      for (const auto& m : gen_methods) plan.methods.push_back(agent::method_from_string(m));
      std::optional<kb::SourceIndex> source;
      if (std::find(plan.methods.begin(), plan.methods.end(), agent::Method::StdRag) != plan.methods.end()) {
        source = kb::load_source_index(fs::path(gen_index_dir) / "source.index");
      }
      plan.train = &train;
      plan.test = &test;
      plan.source_index = source ? &*source : nullptr;
      plan.search = [&](const retrieval::SearchQuery& q) { return retriever.search(q); };
      plan.budget = gen_budget;
      plan.seed = gen_seed;
      plan.threads = g.threads;
      const auto traces = agent::run_generation(plan, *gateway);
      agent::save_traces(gen_out, traces);
      std::size_t failed = 0;
      for (const auto& t : traces) failed += !t.ok();
      out << traces.size() << " traces, " << failed << " failed\n";
      if (!traces.empty()) {
        const auto stats = agent::trace_stats(traces);
        for (const auto& s : stats) {
          if (s.scenario != "all") continue;
          out << s.method << ": mean calls " << fixed6(s.mean_calls) << ", rules/call "
              << fixed6(s.mean_rules_per_call) << ", union " << fixed6(s.mean_union) << "\n";
        }
        if (!gen_stats.empty()) {
          json rows = json::array();
          for (const auto& s : stats) rows.push_back(agent::to_json(s));
          write_file(gen_stats, rows.dump(2) + "\n");
        }
      }
    };
  });

  // judge
  std::string judge_traces, judge_out;
  std::vector<std::string> judge_methods = default_methods();
  std::uint64_t judge_seed = 42;
  auto* judge = app.add_subcommand("judge", "Blind pairwise judging of generated rules");
  judge->add_option("--traces", judge_traces, "Traces file")->required();
  judge->add_option("--methods", judge_methods, "Methods to compare")
      ->delimiter(',')
      ->check(CLI::IsMember(method_names()))
      ->capture_default_str();
  judge->add_option("--seed", judge_seed, "Seed for presentation order")->capture_default_str();
  judge->add_option("--out", judge_out, "Judgments file (JSON lines)")->required();
  judge->callback([&] {
    action = [&] {
      auto gateway = make_gateway(g);
      const auto traces = agent::load_traces(judge_traces);
      const auto judgments = arena::judge_traces(traces, judge_methods, *gateway, judge_seed, g.threads);
      arena::save_judgments(judge_out, judgments);
      out << judgments.size() << " judgments\n";
      const auto bias = arena::position_bias(judgments);
      if (bias.warning) err << "warning: first position won " << fixed6(bias.first_share) << " of decisive judgments\n";
    };
  });

  // fit
  std::string fit_judgments, fit_anchor = "baseline", fit_scenario;
  std::vector<std::string> fit_methods;
  auto* fit = app.add_subcommand("fit", "Bradley-Terry strengths with robust standard errors");
  fit->add_option("--judgments", fit_judgments, "Judgments file")->required();
  fit->add_option("--anchor", fit_anchor, "Method fixed at zero")->capture_default_str();
  fit->add_option("--methods", fit_methods, "Restrict to these methods")->delimiter(',');
  fit->add_option("--scenario", fit_scenario, "Only judgments of this language/type scenario");
  fit->callback([&] {
    action = [&] {
      auto judgments = arena::load_judgments(fit_judgments);
      if (!fit_scenario.empty()) {
        std::erase_if(judgments, [&](const auto& j) { return j.scenario.key() != fit_scenario; });
      }
      if (!fit_methods.empty()) {
        const std::set<std::string> keep(fit_methods.begin(), fit_methods.end());
        std::erase_if(judgments, [&](const auto& j) { return !keep.count(j.method_a) || !keep.count(j.method_b); });
      }
      if (judgments.empty()) throw Error(Errc::InvalidArgument, "no judgments to fit");
      const auto result = arena::fit_judgments(judgments, fit_anchor, fit_methods);
      out << judgments.size() << " judgments\n";
      print_fit(out, result);
    };
  });

  // report
  std::string report_judgments, report_anchor = "baseline", report_json, report_csv;
  std::vector<std::string> report_methods;
  auto* report = app.add_subcommand("report", "Per-scenario, per-language, per-type and overall fits");
  report->add_option("--judgments", report_judgments, "Judgments file")->required();
  report->add_option("--anchor", report_anchor, "Method fixed at zero")->capture_default_str();
  report->add_option("--methods", report_methods, "Method order")->delimiter(',');
  report->add_option("--out-json", report_json, "Report file (JSON)");
  report->add_option("--out-csv", report_csv, "Report file (CSV)");
  report->callback([&] {
    action = [&] {
      const auto judgments = arena::load_judgments(report_judgments);
      const auto result = arena::scenario_report(judgments, report_anchor, report_methods);
      std::size_t fitted = 0;
      for (const auto& c : result.cells) {
        if (c.fit) {
          ++fitted;
        } else {
          err << "cell " << c.group << " " << c.key << ": " << c.error.value_or("not fitted") << "\n";
        }
      }
      out << fitted << " of " << result.cells.size() << " cells fitted\n";
      if (result.bias.warning) {
        err << "warning: first position won " << fixed6(result.bias.first_share) << " of decisive judgments\n";
      }
      if (!report_json.empty()) write_file(report_json, arena::to_json(result).dump(2) + "\n");
      if (!report_csv.empty()) write_file(report_csv, arena::to_csv(result));
      if (report_json.empty() && report_csv.empty()) out << arena::to_csv(result);
    };
  });

  // formal
  bool formal_witness = false;
  std::size_t formal_verify = 0, formal_search = 0, formal_alphabet = 3;
  auto* formal_cmd = app.add_subcommand("formal", "Toy behaviour-set model: witness and exhaustive checks");
  formal_cmd->add_flag("--witness", formal_witness, "Print and check the bundled witness");
  formal_cmd->add_option("--verify", formal_verify, "Exhaustively check universes up to this size")
      ->check(CLI::Range(1, 8));
  formal_cmd->add_option("--search", formal_search, "Find a witness over a universe of this size")
      ->check(CLI::Range(1, 6));
  formal_cmd->add_option("--alphabet", formal_alphabet, "Surface alphabet size for --search")
      ->check(CLI::Range(1, 4))
      ->capture_default_str();
  formal_cmd->callback([&] {
    action = [&] {
      if (!formal_witness && formal_verify == 0 && formal_search == 0) {
        formal_witness = true;
        formal_verify = 5;
      }
      bool ok = true;
      if (formal_witness) {
        const auto w = formal::sim_failure_witness();
        const auto r = formal::verify_witness(w);
        formal::print_witness(out, w, r);
        ok = ok && r.valid();
      }
      if (formal_search > 0) {
        const auto w = formal::find_witness(formal_search, formal_alphabet);
        const auto r = formal::verify_witness(w);
        formal::print_witness(out, w, r);
        ok = ok && r.valid();
      }
      if (formal_verify > 0) {
        out << "|U|  cases     nonneg  zero<->opt  partition  monotone\n";
        std::size_t previous = 0;
        for (std::size_t n = 1; n <= formal_verify; ++n) {
          const auto s = formal::verify_exhaustive(n);
          char line[128];
          std::snprintf(line, sizeof(line), "%-4zu %-9zu %-7zu %-11zu %-10zu %zu\n", n, s.cases - previous,
                        s.nonnegative_failures, s.zero_iff_optimal_failures, s.partition_failures,
                        s.monotonicity_failures);
          out << line;
          previous = s.cases;
          ok = ok && s.passed();
        }
        out << (ok ? "PASS" : "FAIL") << "\n";
      }
      if (!ok) throw Error(Errc::InvalidArgument, "formal check failed");
    };
  });

  // annotate-serve
  std::string ann_judgments, ann_traces, ann_host = "127.0.0.1", ann_static, ann_labels;
  int ann_port = 8080;
  std::size_t ann_annotators = 3, ann_sample = 0;
  std::uint64_t ann_seed = 42;
  auto* ann = app.add_subcommand("annotate-serve", "HTTP backend for human labelling of judged pairs");
  ann->add_option("--judgments", ann_judgments, "Judgments to label")->required();
  ann->add_option("--traces", ann_traces, "Traces holding the contexts and rules")->required();
  ann->add_option("--host", ann_host, "Bind address")->capture_default_str();
  ann->add_option("--port", ann_port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535))->capture_default_str();
  ann->add_option("--static", ann_static, "Directory of UI assets served at /");
  ann->add_option("--annotators", ann_annotators, "Expected annotators")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  ann->add_option("--labels", ann_labels, "Label log, replayed on start and appended to");
  ann->add_option("--sample", ann_sample, "Label a seeded sample of this many judgments (0 = all)");
  ann->add_option("--seed", ann_seed, "Sampling seed")->capture_default_str();
  ann->callback([&] {
    action = [&] {
      auto judgments = arena::load_judgments(ann_judgments);
      if (ann_sample > 0 && ann_sample < judgments.size()) {
        Rng rng(ann_seed);
        std::vector<std::size_t> order(judgments.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        order.resize(ann_sample);
        std::sort(order.begin(), order.end());
        std::vector<arena::PairwiseJudgment> sample;
        for (auto i : order) sample.push_back(judgments[i]);
        judgments = std::move(sample);
      }
      const auto traces = agent::load_traces(ann_traces);
      annotate::AnnotationService service(annotate::build_tasks(judgments, traces), ann_annotators);
      if (!ann_labels.empty()) {
        if (fs::exists(ann_labels)) service.load_labels(ann_labels);
        service.set_label_log(ann_labels);
      }
      annotate::ServerOptions options;
      options.host = ann_host;
      options.port = ann_port;
      if (!ann_static.empty()) options.static_dir = ann_static;
      annotate::AnnotationServer server(service, options);
      const int port = server.bind();
      out << "serving " << service.task_count() << " tasks on http://" << ann_host << ":" << port << std::endl;
      std::signal(SIGINT, on_interrupt);
      std::signal(SIGTERM, on_interrupt);
      std::jthread watcher([&](std::stop_token done) { wait_for_interrupt([&] { server.stop(); }, done); });
      server.listen();
    };
  });

  // agreement
  std::string agree_a, agree_b;
  auto* agree = app.add_subcommand("agreement", "Cohen's kappa between two judgment files");
  agree->add_option("first", agree_a, "Judgments file")->required();
  agree->add_option("second", agree_b, "Judgments file")->required();
  agree->callback([&] {
    action = [&] {
      const auto result = arena::judgment_agreement(arena::load_judgments(agree_a), arena::load_judgments(agree_b));
      out << "matched: " << result.matched << "\n";
      if (result.matched > 0) out << "agreement: " << fixed6(result.agreement) << "\n";
      if (!result.kappa) throw Error(Errc::DegenerateMarginals, result.error.value_or("kappa undefined"));
      out << "kappa: " << fixed6(*result.kappa) << "\n";
    };
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const std::string command = app.get_subcommands().empty() ? "" : app.get_subcommands().front()->get_name();
  auto diagnostic = [&](std::string_view kind, std::string_view message) {
    json line = {{"error", kind}, {"command", command}, {"message", message}};
    err << line.dump() << "\n";
  };
  try {
    if (action) action();
    return kExitOk;
  } catch (const Error& e) {
    diagnostic(to_string(e.code()), e.what());
  } catch (const json::exception& e) {
    diagnostic("SchemaError", e.what());
  } catch (const fs::filesystem_error& e) {
    diagnostic("Io", e.what());
  } catch (const std::exception& e) {
    diagnostic("Internal", e.what());
  }
  return kExitFailure;
}

}  // namespace unirule::cli
