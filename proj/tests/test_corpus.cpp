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

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "support.hpp"
#include "unirule/corpus.hpp"
#include "unirule/error.hpp"

using namespace unirule;
using namespace unirule::corpus;
using unirule::testing::fixtures;
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

std::vector<DetectionRule> make_rules(std::size_t n, Rng& rng) {
  std::vector<DetectionRule> rules;
  for (std::size_t i = 0; i < n; ++i) {
    DetectionRule r;
    r.id = "r" + std::to_string(i) + "-" + std::to_string(rng.below(1000000));
    r.language = RuleLanguage::splunk();
    r.source_text = "search " + r.id;
    rules.push_back(r);
  }
  return rules;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("language tokens are normalized") {
  CHECK(RuleLanguage("  Splunk ").str() == "splunk");
  CHECK(RuleLanguage("sigma").builtin() == false);
  CHECK(RuleLanguage::snort().builtin());
  CHECK(error_of([] { RuleLanguage(""); }) == Errc::InvalidArgument);
  CHECK(error_of([] { RuleLanguage("a b"); }) == Errc::InvalidArgument);
}

TEST_CASE("splunk minimal documents") {
  const auto r = parse_splunk("name: Foo\ndescription: bar\nsearch: '| tstats count from datamodel=Endpoint'\n");
  CHECK(r.title == "Foo");
  CHECK(r.description == "bar");
  CHECK(r.source_text == "| tstats count from datamodel=Endpoint");
  CHECK(r.language == RuleLanguage::splunk());
  CHECK(r.id == content_id(r.source_text));

  const auto bare = parse_splunk("search: index=main sourcetype=syslog\n");
  CHECK(bare.title.empty());
  CHECK(bare.description.empty());

  CHECK(error_of([] { parse_splunk("name: Foo\ndescription: no query\n"); }) == Errc::MissingQuery);
  CHECK(error_of([] { parse_splunk("- just\n- a list\n"); }) == Errc::MalformedDocument);
}

TEST_CASE("elastic minimal documents") {
  const auto r = parse_elastic("[rule]\nname = \"Foo\"\ndescription = \"bar\"\nquery = '''\nprocess where true\n'''\n");
  CHECK(r.title == "Foo");
  CHECK(r.description == "bar");
  CHECK(r.source_text == "process where true\n");
  const auto bare = parse_elastic("[rule]\nquery = \"event.code:4625\"\n");
  CHECK(bare.title.empty());
  CHECK(bare.id == content_id("event.code:4625"));
  CHECK(error_of([] { parse_elastic(""); }) == Errc::MalformedDocument);
  CHECK(error_of([] { parse_elastic("[rule]\nname = \"x\"\n"); }) == Errc::MissingQuery);
}

TEST_CASE("snort line grammar") {
  const auto r = parse_snort("alert tcp $EXTERNAL_NET any -> $HOME_NET 22 (msg:\"SSH scan\"; sid:1000001; rev:1;)");
  REQUIRE(r);
  CHECK(r->meta("action") == "alert");
  CHECK(r->meta("protocol") == "tcp");
  CHECK(r->id.find("1000001") != std::string::npos);
  CHECK(r->meta("msg") == "SSH scan");
  CHECK(r->title == "SSH scan");
  CHECK(r->description == "SSH scan");

  CHECK_FALSE(parse_snort("# comment line"));
  CHECK_FALSE(parse_snort("   "));
  CHECK(error_of([] { parse_snort("alert tcp -> ()"); }) == Errc::MalformedHeader);
  CHECK(error_of([] { parse_snort("alert tcp a b -> c d (msg:\"x\"; sid:1;"); }) == Errc::UnbalancedOptions);

  const auto multi = parse_snort(
      "alert tcp any any -> any 80 (msg:\"m\"; content:\"a\"; content:\"b\\;c\"; content:\"d\"; sid:7;)");
  REQUIRE(multi);
  CHECK(multi->extra.at("content") == std::vector<std::string>{"a", "b;c", "d"});
  CHECK(multi->id == "snort:1:7");
}

TEST_CASE("snort unquoting keeps non-snort escapes") {
  CHECK(unquote_snort_value("\"a\\;b\"") == "a;b");
  CHECK(unquote_snort_value("\"say \\\"hi\\\"\"") == "say \"hi\"");
  CHECK(unquote_snort_value("\"c:\\\\temp\"") == "c:\\temp");
  CHECK(unquote_snort_value("\"/\\d+\\s/\"") == "/\\d+\\s/");
  CHECK(unquote_snort_value("plain") == "plain");
}

TEST_CASE("snort round trip over fixture files") {
  std::size_t lines = 0;
  for (const auto& entry : std::filesystem::directory_iterator(fixtures() / "corpus" / "snort")) {
    std::istringstream in(read_file(entry.path()));
    std::string line;
    while (std::getline(in, line)) {
      const auto parsed = parse_snort_structure(line);
      if (!parsed) continue;
      ++lines;
      CHECK(split_whitespace(render_snort(*parsed)) == split_whitespace(line));
      CHECK(parse_snort_structure(render_snort(*parsed)) == parsed);
    }
  }
  CHECK(lines == 12);
}

TEST_CASE("fixture corpus matches the hand-written expectations") {
  const json expected = json::parse(read_file(fixtures() / "expected.json"));
  std::map<std::string, DetectionRule> by_id;
  for (const auto& language : builtin_languages()) {
    const auto result = load_corpus(fixtures() / "corpus" / language.str(), language, 2);
    CHECK(result.failures.empty());
    CHECK(result.rules.size() == expected["counts"][language.str()].get<std::size_t>());
    for (const auto& r : result.rules) {
      CHECK(r.language == language);
      CHECK_FALSE(r.source_text.empty());
      CHECK_FALSE(r.title.empty());
      by_id[r.id] = r;
    }
  }
  for (const auto& e : expected["rules"]) {
    const std::string id = e["id"];
    INFO(id);
    REQUIRE(by_id.count(id));
    const auto& r = by_id[id];
    CHECK(r.title == e["title"].get<std::string>());
    if (e.contains("description")) CHECK(r.description == e["description"].get<std::string>());
    if (e.contains("source_prefix")) {
      CHECK(r.source_text.rfind(e["source_prefix"].get<std::string>(), 0) == 0);
    }
    for (const auto& [key, values] : e["meta"].items()) {
      INFO(key);
      REQUIRE(r.extra.count(key));
      CHECK(r.extra.at(key) == values.get<std::vector<std::string>>());
    }
  }
  for (const auto& id : expected["absent_ids"]) CHECK(by_id.count(id.get<std::string>()) == 0);
}

TEST_CASE("malformed files are reported and never abort ingestion") {
  const json expected = json::parse(read_file(fixtures() / "expected.json"));
  std::map<std::string, std::string> failures;
  std::vector<std::string> survivors;
  for (const auto& language : builtin_languages()) {
    const auto dir = fixtures() / "malformed" / language.str();
    const auto result = load_corpus(dir, language);
    for (const auto& f : result.failures) {
      const auto rel = std::filesystem::path(f.location).lexically_relative(fixtures() / "malformed").generic_string();
      failures[rel] = f.error.substr(0, f.error.find(':'));
    }
    for (const auto& r : result.rules) survivors.push_back(r.id);
  }
  CHECK(failures.size() == expected["malformed"].size());
  for (const auto& m : expected["malformed"]) {
    const std::string file = m["file"];
    INFO(file);
    REQUIRE(failures.count(file));
    CHECK(failures[file] == m["error"].get<std::string>());
  }
  CHECK(survivors == expected["malformed_survivors"]["snort"].get<std::vector<std::string>>());
}

TEST_CASE("five valid snort files and one broken file") {
  TempDir dir;
  for (int i = 0; i < 5; ++i) {
    std::ofstream(dir / ("ok" + std::to_string(i) + ".rules"))
        << "alert tcp any any -> any 80 (msg:\"rule " << i << "\"; sid:" << 100 + i << ";)\n";
  }
  std::ofstream(dir / "bad.rules") << "alert tcp any -> any 80 (msg:\"x\"; sid:1;)\n";
  const auto result = load_corpus(dir.path(), RuleLanguage::snort());
  CHECK(result.rules.size() == 5);
  CHECK(result.failures.size() == 1);

  TempDir empty;
  const auto none = load_corpus(empty.path(), RuleLanguage::snort());
  CHECK(none.rules.empty());
  CHECK(none.failures.empty());
  CHECK(error_of([&] { load_corpus(empty / "missing", RuleLanguage::snort()); }) == Errc::Io);
}

TEST_CASE("duplicate ids keep the first file") {
  TempDir dir;
  std::ofstream(dir / "a.rules") << "alert tcp any any -> any 80 (msg:\"first\"; sid:5;)\n";
  std::ofstream(dir / "b.rules") << "alert tcp any any -> any 81 (msg:\"second\"; sid:5;)\n";
  const auto result = load_corpus(dir.path(), RuleLanguage::snort());
  REQUIRE(result.rules.size() == 1);
  CHECK(result.rules[0].title == "first");
  CHECK(result.failures.size() == 1);
}

TEST_CASE("parsing is pure") {
  const std::string doc = read_file(fixtures() / "corpus" / "elastic" / "impact_mass_file_rename.toml");
  CHECK(parse_elastic(doc) == parse_elastic(doc));
}

TEST_CASE("split sizes follow round-half-up") {
  CHECK(train_size(1890, 0.8) == 1512);
  CHECK(1890 - train_size(1890, 0.8) == 378);
  CHECK(train_size(561, 0.8) == 449);  // 448.8 rounds up
  CHECK(train_size(7, 0.5) == 4);
  CHECK(train_size(6, 0.5) == 3);
  CHECK(train_size(10, 0.25) == 3);  // 2.5 rounds up
}

TEST_CASE("split rejects bad ratios and empty input") {
  Rng rng(1);
  const auto rules = make_rules(5, rng);
  for (double bad : {0.0, 1.0, -0.5, 1.5, std::nan("")}) {
    CHECK(error_of([&] { split_corpus(rules, bad, 1); }) == Errc::InvalidRatio);
  }
  CHECK(error_of([] { split_corpus({}, 0.5, 1); }) == Errc::InvalidArgument);
}

TEST_CASE("split is deterministic and independent of input order") {
  Rng rng(11);
  auto rules = make_rules(10, rng);
  const auto a = split_corpus(rules, 0.8, 1);
  std::reverse(rules.begin(), rules.end());
  const auto b = split_corpus(rules, 0.8, 1);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  TempDir dir;
  save_corpus(dir / "a.jsonl", a.train);
  save_corpus(dir / "b.jsonl", b.train);
  CHECK(read_file(dir / "a.jsonl") == read_file(dir / "b.jsonl"));
}

TEST_CASE("split partitions every random corpus") {
  Rng rng(20260101);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(500);
    const double ratio = 0.01 + 0.98 * rng.uniform();
    const auto rules = make_rules(n, rng);
    const auto s = split_corpus(rules, ratio, rng.below(1u << 30));
    std::set<std::string> train, test, all;
    for (const auto& r : s.train) train.insert(r.id);
    for (const auto& r : s.test) test.insert(r.id);
    for (const auto& r : rules) all.insert(r.id);
    CHECK(s.train.size() == train_size(n, ratio));
    for (const auto& id : train) CHECK(test.count(id) == 0);
    std::set<std::string> joined = train;
    joined.insert(test.begin(), test.end());
    CHECK(joined == all);
  }
}

TEST_CASE("corpus files round trip") {
  TempDir dir;
  const auto result = load_corpus(fixtures() / "corpus" / "snort", RuleLanguage::snort());
  save_corpus(dir / "snort.jsonl", result.rules);
  CHECK(load_corpus_file(dir / "snort.jsonl") == result.rules);
  std::ofstream(dir / "broken.jsonl") << "{\"id\": 3}\n";
  CHECK(error_of([&] { load_corpus_file(dir / "broken.jsonl"); }) == Errc::SchemaError);
}

}  // TEST_SUITE
