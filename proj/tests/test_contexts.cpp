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

#include <doctest.h>

#include "support.hpp"
#include "unirule/contexts.hpp"
#include "unirule/error.hpp"

using namespace unirule;
using namespace unirule::contexts;
using unirule::testing::TempDir;

namespace {

template <typename F>
Errc error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::InvalidArgument;
}

std::vector<corpus::DetectionRule> all_rules() {
  std::vector<corpus::DetectionRule> rules;
  for (const auto& lang : corpus::builtin_languages()) {
    auto loaded = corpus::load_corpus(unirule::testing::fixtures() / "corpus" / lang.str(), lang);
    rules.insert(rules.end(), loaded.rules.begin(), loaded.rules.end());
  }
  return rules;
}

RuleDescriptions describe(const corpus::DetectionRule& rule) {
  return {{rule.id, kb::SemanticDimension::Intent, "Catches a thing", "Catches a thing in detail."},
          {rule.id, kb::SemanticDimension::Logic, "Matches a field", "Matches a field against a value."}};
}

}  // namespace

TEST_SUITE("contexts") {

TEST_CASE("shared substring detection") {
  CHECK(shares_substring("abcdefgh", "xxcdefyy", 4));
  CHECK_FALSE(shares_substring("abcdefgh", "xxcdeyy", 4));
  CHECK_FALSE(shares_substring("", "abc", 1));
  const std::string long_run(40, 'q');
  CHECK(shares_substring("left " + long_run + " right", "other" + long_run, kCtiLeakLength));
  CHECK_FALSE(shares_substring("left " + long_run.substr(1) + " right", "other" + long_run.substr(1),
                               kCtiLeakLength));
}

TEST_CASE("each type has its provenance") {
  const auto rules = all_rules();
  const auto& rule = rules.front();
  auto m = unirule::testing::mock_gateway();
  const auto specs = make_contexts(rule, describe(rule), *m.gateway, 9);
  REQUIRE(specs.size() == 4);
  CHECK(specs[0].provenance == Provenance::Native);
  CHECK(specs[0].text == rule.description);
  CHECK(specs[1].provenance == Provenance::Synthesized);
  CHECK(specs[2].text == "Catches a thing in detail.");
  CHECK(specs[3].provenance == Provenance::Translated);
  CHECK(specs[3].instance_id() == rule.language.str() + "/logic/" + rule.id);
  CHECK(specs[3].scenario() == rule.language.str() + "/logic");
  for (const auto& s : specs) {
    CHECK(s.seed == 9);
    CHECK(context_from_json(to_json(s)) == s);
  }
}

TEST_CASE("spec validation") {
  ContextSpec s;
  s.rule_id = "r";
  s.language = corpus::RuleLanguage::splunk();
  s.type = ContextType::Cti;
  s.text = "report";
  s.provenance = Provenance::Synthesized;
  CHECK_NOTHROW(s.validate());
  s.provenance = Provenance::Native;
  CHECK(error_of([&] { s.validate(); }) == Errc::InvalidArgument);
  s.provenance = Provenance::Synthesized;
  s.text = "";
  CHECK(error_of([&] { s.validate(); }) == Errc::InvalidArgument);
}

TEST_CASE("rule without description has no native context") {
  auto rule = all_rules().front();
  rule.description = "  ";
  auto m = unirule::testing::mock_gateway();
  CHECK(error_of([&] { make_context(rule, ContextType::Context, describe(rule), *m.gateway); }) ==
        Errc::MissingDescription);
  CHECK_NOTHROW(make_context(rule, ContextType::Intent, describe(rule), *m.gateway));
}

TEST_CASE("leaking threat report is regenerated, then rejected") {
  const auto rule = all_rules().front();
  const std::string leak = "Report quoting the rule: " + rule.source_text.substr(0, 60);
  REQUIRE(rule.source_text.size() >= 60);

  auto m = unirule::testing::mock_gateway();
  m.provider->reply("", leak);
  const auto text = synthesize_cti(rule, describe(rule), *m.gateway);
  CHECK_FALSE(shares_substring(text, rule.source_text, kCtiLeakLength));
  CHECK(m.provider->chat_calls() == 2);

  auto twice = unirule::testing::mock_gateway();
  twice.provider->reply("", leak);
  twice.provider->reply("", leak);
  CHECK(error_of([&] { synthesize_cti(rule, describe(rule), *twice.gateway); }) == Errc::CtiLeak);
}

TEST_CASE("scenario sampling") {
  const auto rules = all_rules();
  const auto a = sample_scenario_instances(rules, corpus::RuleLanguage::elastic(), ContextType::Logic, 5, 42);
  const auto b = sample_scenario_instances(rules, corpus::RuleLanguage::elastic(), ContextType::Logic, 5, 42);
  CHECK(a == b);
  REQUIRE(a.size() == 5);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].language == corpus::RuleLanguage::elastic());
    if (i) CHECK(a[i - 1].id < a[i].id);
  }
  // Different seeds reach different subsets eventually.
  bool differs = false;
  for (std::uint64_t seed = 0; seed < 20 && !differs; ++seed) {
    differs = sample_scenario_instances(rules, corpus::RuleLanguage::elastic(), ContextType::Logic, 5, seed) != a;
  }
  CHECK(differs);
  CHECK(error_of([&] {
          sample_scenario_instances(rules, corpus::RuleLanguage::snort(), ContextType::Cti, 13, 1);
        }) == Errc::InsufficientTestRules);
}

TEST_CASE("rules without description are not eligible for the native type") {
  auto rules = all_rules();
  std::size_t splunk = 0;
  for (auto& r : rules) {
    if (r.language != corpus::RuleLanguage::splunk()) continue;
    if (splunk++ % 2 == 0) r.description.clear();
  }
  CHECK(error_of([&] {
          sample_scenario_instances(rules, corpus::RuleLanguage::splunk(), ContextType::Context, 7, 1);
        }) == Errc::InsufficientTestRules);
  for (const auto& r : sample_scenario_instances(rules, corpus::RuleLanguage::splunk(), ContextType::Context, 6, 1)) {
    CHECK_FALSE(r.description.empty());
  }
}

TEST_CASE("scenario grid is ordered and complete") {
  const auto rules = all_rules();
  std::map<std::string, RuleDescriptions> descriptions;
  for (const auto& r : rules) descriptions[r.id] = describe(r);
  auto m = unirule::testing::mock_gateway();
  ScenarioGridOptions options;
  options.n = 3;
  options.seed = 4;
  const auto specs = build_scenario_contexts(rules, descriptions, *m.gateway, options);
  CHECK(specs.size() == 3 * 4 * 3);
  std::map<std::string, int> per_scenario;
  for (const auto& s : specs) ++per_scenario[s.scenario()];
  CHECK(per_scenario.size() == 12);
  for (const auto& [scenario, count] : per_scenario) CHECK(count == 3);

  options.threads = 1;
  auto single = unirule::testing::mock_gateway(1);
  CHECK(build_scenario_contexts(rules, descriptions, *single.gateway, options) == specs);

  TempDir dir;
  save_contexts(dir / "contexts.jsonl", specs);
  CHECK(load_contexts(dir / "contexts.jsonl") == specs);
}

}  // TEST_SUITE
