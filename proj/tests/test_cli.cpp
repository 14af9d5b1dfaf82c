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

#include <sstream>

#include <doctest.h>

#include "support.hpp"
#include "unirule/arena.hpp"
#include "unirule/cli.hpp"
#include "unirule/corpus.hpp"

using namespace unirule;
using unirule::testing::TempDir;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 2") {
  CHECK(run({}).code == cli::kExitUsage);
  CHECK(run({"fit", "--bogus"}).code == cli::kExitUsage);
  CHECK(run({"teleport"}).code == cli::kExitUsage);
  CHECK(run({"fit"}).code == cli::kExitUsage);  // --judgments is required
  CHECK(run({"--threads", "0", "formal"}).code == cli::kExitUsage);
  const auto help = run({"--help"});
  CHECK(help.code == cli::kExitOk);
  CHECK(help.out.find("annotate-serve") != std::string::npos);
}

TEST_CASE("operational errors exit 1 with one JSON line") {
  TempDir dir;
  const auto r = run({"ingest", "--root", (dir / "absent").string(), "--language", "splunk", "--out",
                      (dir / "c.jsonl").string()});
  CHECK(r.code == cli::kExitFailure);
  const auto line = json::parse(r.err.substr(0, r.err.find('\n')));
  CHECK(line["command"] == "ingest");
  CHECK(line["error"] == "IoError");
}

TEST_CASE("ingest and split") {
  TempDir dir;
  const auto corpus = (dir / "splunk.jsonl").string();
  auto r = run({"ingest", "--root", (unirule::testing::fixtures() / "corpus" / "splunk").string(), "--language",
                "splunk", "--out", corpus});
  REQUIRE(r.code == 0);
  CHECK(r.out == "ingested 12 splunk rules, 0 skipped\n");
  CHECK(corpus::load_corpus_file(corpus).size() == 12);

  r = run({"split", "--corpus", corpus, "--train", (dir / "train.jsonl").string(), "--test",
           (dir / "test.jsonl").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out == "splunk: 10 train, 2 test\n");
}

TEST_CASE("strict ingest fails on any skipped file") {
  TempDir dir;
  const auto root = (unirule::testing::fixtures() / "malformed" / "splunk").string();
  CHECK(run({"ingest", "--root", root, "--language", "splunk", "--out", (dir / "c.jsonl").string()}).code == 0);
  CHECK(run({"ingest", "--root", root, "--language", "splunk", "--out", (dir / "c.jsonl").string(), "--strict"})
            .code == cli::kExitFailure);
}

TEST_CASE("fit prints the closed-form strength") {
  TempDir dir;
  std::vector<arena::PairwiseJudgment> js;
  unirule::testing::append(js, unirule::testing::judgments("unirule", "baseline", arena::Outcome::A, 75));
  unirule::testing::append(js, unirule::testing::judgments("unirule", "baseline", arena::Outcome::B, 25));
  arena::save_judgments(dir / "j.jsonl", js);
  const auto r = run({"fit", "--judgments", (dir / "j.jsonl").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("unirule   xi = 1.098612") != std::string::npos);
  CHECK(r.out.find("baseline  xi = 0.000000") != std::string::npos);

  const auto bad = run({"fit", "--judgments", (dir / "j.jsonl").string(), "--anchor", "nobody"});
  CHECK(bad.code == cli::kExitFailure);
  CHECK(json::parse(bad.err)["error"] == "InconsistentMethods");
}

TEST_CASE("formal witness") {
  const auto r = run({"formal", "--witness", "--verify", "3"});
  CHECK(r.code == 0);
  CHECK(r.out.find("PASS") != std::string::npos);
  CHECK(r.out.find("FAIL") == std::string::npos);
}

TEST_CASE("agreement between judgment files") {
  TempDir dir;
  auto a = unirule::testing::judgments("x", "y", arena::Outcome::A, 4);
  unirule::testing::append(a, unirule::testing::judgments("x", "z", arena::Outcome::B, 4));
  for (std::size_t i = 4; i < a.size(); ++i) a[i].instance_id += "b";
  arena::save_judgments(dir / "a.jsonl", a);
  arena::save_judgments(dir / "b.jsonl", a);
  const auto r = run({"agreement", (dir / "a.jsonl").string(), (dir / "b.jsonl").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("matched: 8") != std::string::npos);
  CHECK(r.out.find("1.000000") != std::string::npos);
}

}  // TEST_SUITE
