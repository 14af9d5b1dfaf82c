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

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <future>
#include <set>
#include <sstream>
#include <thread>

#include <doctest.h>

#include "support.hpp"
#include "unirule/error.hpp"
#include "unirule/retrieval.hpp"

using namespace unirule;
using namespace unirule::retrieval;
using kb::SemanticDimension;

namespace {

std::vector<std::string> ids_of(const std::vector<SearchResult>& results) {
  std::vector<std::string> ids;
  for (const auto& r : results) ids.push_back(r.rule.id);
  return ids;
}

// Intent and logic indexes over the whole fixture corpus, built with the mock.
struct Fixture {
  unirule::testing::MockSetup mock = unirule::testing::mock_gateway();
  std::shared_ptr<DualIndex> indexes = std::make_shared<DualIndex>();

  Fixture() {
    std::vector<corpus::DetectionRule> rules;
    for (const auto& lang : corpus::builtin_languages()) {
      auto loaded = corpus::load_corpus(unirule::testing::fixtures() / "corpus" / lang.str(), lang);
      rules.insert(rules.end(), loaded.rules.begin(), loaded.rules.end());
    }
    indexes->intent = kb::build_index(rules, SemanticDimension::Intent, *mock.gateway);
    indexes->logic = kb::build_index(rules, SemanticDimension::Logic, *mock.gateway);
  }
};

json call(McpServer& server, const json& arguments, int id = 1) {
  return *server.handle({{"jsonrpc", "2.0"},
                         {"id", id},
                         {"method", "tools/call"},
                         {"params", {{"name", kSearchToolName}, {"arguments", arguments}}}});
}

}  // namespace

TEST_SUITE("retrieval") {

TEST_CASE("query validation") {
  SearchQuery q;
  q.query = "lsass";
  CHECK_NOTHROW(q.validate());
  q.k = 0;
  CHECK_THROWS_AS(q.validate(), Error);
  q.k = 3;
  q.query = "   ";
  CHECK_THROWS_AS(q.validate(), Error);
}

TEST_CASE("ranking matches a brute-force sort, ties broken by id") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto index = unirule::testing::discrete_index(200, 4, SemanticDimension::Intent, rng);
    const auto q = unit_query(unirule::testing::discrete_query(4, rng));
    for (std::size_t k : {1u, 5u, 15u, 200u, 500u}) {
      const auto got = search_index(index, q, k, std::nullopt);
      CHECK(got.size() == std::min<std::size_t>(k, 200));
      std::vector<std::string> ids;
      for (const auto& r : got) ids.push_back(r.rule.id);
      CHECK(ids == unirule::testing::brute_force_top_k(index, q, k, std::nullopt));
    }
  }
}

TEST_CASE("language filter only returns that language") {
  Rng rng(5);
  const auto index = unirule::testing::discrete_index(90, 4, SemanticDimension::Logic, rng);
  const auto q = unit_query(unirule::testing::discrete_query(4, rng));
  for (const auto& lang : corpus::builtin_languages()) {
    const auto got = search_index(index, q, 50, lang);
    CHECK(got.size() == 30);
    for (const auto& r : got) CHECK(r.language == lang);
    CHECK(ids_of(got) == unirule::testing::brute_force_top_k(index, q, 50, lang));
  }
  CHECK(search_index(index, q, 5, corpus::RuleLanguage("sigma")).empty());
}

TEST_CASE("scores are cosine similarities") {
  Rng rng(3);
  const auto index = unirule::testing::discrete_index(30, 6, SemanticDimension::Intent, rng);
  const auto raw = unirule::testing::discrete_query(6, rng);
  const auto got = search_index(index, unit_query(raw), 30, std::nullopt);
  for (const auto& r : got) {
    const auto& v = index.find(r.rule.id)->vector;
    long double dot = 0, nv = 0, nq = 0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      dot += (long double)v[i] * raw[i];
      nv += (long double)v[i] * v[i];
      nq += (long double)raw[i] * raw[i];
    }
    CHECK(r.score == doctest::Approx(double(dot / std::sqrt(nv * nq))).epsilon(1e-6));
  }
}

TEST_CASE("retriever search equals direct index search") {
  Fixture f;
  Retriever retriever(f.indexes, *f.mock.gateway);
  SearchQuery q;
  q.query = "credential dumping from lsass memory";
  q.k = 5;
  for (auto space : kb::kDimensions) {
    q.space = space;
    const auto via = retriever.search(q);
    const auto embedded = f.mock.gateway->embed({q.query});
    const auto direct = search_index(f.indexes->get(space), unit_query(embedded[0]), 5, std::nullopt);
    CHECK(via == direct);
  }
}

TEST_CASE("query cache skips repeat embeddings") {
  Fixture f;
  Retriever retriever(f.indexes, *f.mock.gateway, true);
  SearchQuery q;
  q.query = "scheduled task persistence";
  const auto before = f.mock.provider->embed_calls();
  const auto a = retriever.search(q);
  const auto b = retriever.search(q);
  CHECK(a == b);
  CHECK(f.mock.provider->embed_calls() == before + 1);
}

TEST_CASE("tools/list advertises one search tool") {
  Fixture f;
  Retriever retriever(f.indexes, *f.mock.gateway);
  McpServer server(retriever);
  const auto reply = *server.handle({{"jsonrpc", "2.0"}, {"id", 7}, {"method", "tools/list"}});
  CHECK(reply["id"] == 7);
  REQUIRE(reply["result"]["tools"].size() == 1);
  const auto& tool = reply["result"]["tools"][0];
  CHECK(tool["name"] == kSearchToolName);
  CHECK(tool["inputSchema"]["required"] == json({"query", "space", "k"}));
  CHECK(tool["inputSchema"]["properties"]["space"]["enum"] == json({"intent", "logic"}));
}

TEST_CASE("tool call results equal direct search") {
  Fixture f;
  Retriever retriever(f.indexes, *f.mock.gateway);
  McpServer server(retriever);
  for (const char* space : {"intent", "logic"}) {
    const auto reply = call(server, {{"query", "encoded powershell"}, {"space", space}, {"k", 4}, {"language", "splunk"}});
    REQUIRE(reply.contains("result"));
    const auto& results = reply["result"]["structuredContent"]["results"];
    SearchQuery q;
    q.query = "encoded powershell";
    q.space = kb::dimension_from_string(space);
    q.k = 4;
    q.language_filter = corpus::RuleLanguage::splunk();
    const auto direct = retriever.search(q);
    REQUIRE(results.size() == direct.size());
    for (std::size_t i = 0; i < direct.size(); ++i) {
      CHECK(results[i]["rule_id"] == direct[i].rule.id);
      CHECK(results[i]["language"] == "splunk");
      CHECK(results[i]["score"].get<double>() == doctest::Approx(direct[i].score).epsilon(1e-6));
      CHECK(results[i]["rule_source_text"] == direct[i].rule.source_text);
    }
    CHECK(json::parse(reply["result"]["content"][0]["text"].get<std::string>()) == results);
  }
}

TEST_CASE("invalid arguments are -32602") {
  Fixture f;
  Retriever retriever(f.indexes, *f.mock.gateway);
  McpServer server(retriever);
  auto code = [&](const json& args) { return call(server, args)["error"]["code"].get<int>(); };
  CHECK(code({{"query", "x"}, {"space", "syntax"}, {"k", 3}}) == rpc::kInvalidParams);
  CHECK(code({{"query", "x"}, {"k", 3}}) == rpc::kInvalidParams);
  CHECK(code({{"query", ""}, {"space", "intent"}, {"k", 3}}) == rpc::kInvalidParams);
  CHECK(code({{"query", "x"}, {"space", "intent"}, {"k", 0}}) == rpc::kInvalidParams);
  CHECK(code({{"query", "x"}, {"space", "intent"}, {"k", "3"}}) == rpc::kInvalidParams);
  CHECK(code({{"query", "x"}, {"space", "intent"}, {"k", 3}, {"language", 4}}) == rpc::kInvalidParams);

  const auto unknown = *server.handle({{"jsonrpc", "2.0"}, {"id", 1}, {"method", "resources/list"}});
  CHECK(unknown["error"]["code"] == rpc::kMethodNotFound);
  CHECK(json::parse(*server.handle_text("{not json"))["error"]["code"] == rpc::kParseError);
  CHECK(server.handle({{"jsonrpc", "2.0"}, {"method", "notifications/initialized"}}) == std::nullopt);
  CHECK((*server.handle({{"id", 2}, {"method", "ping"}}))["error"]["code"] == rpc::kInvalidRequest);
}

TEST_CASE("source text can be truncated") {
  Fixture f;
  Retriever retriever(f.indexes, *f.mock.gateway);
  McpServer server(retriever, 10);
  const auto reply = call(server, {{"query", "dns"}, {"space", "intent"}, {"k", 1}});
  const auto text = reply["result"]["structuredContent"]["results"][0]["rule_source_text"].get<std::string>();
  CHECK(text.size() == 14);
  CHECK(text.substr(10) == " ...");
}

TEST_CASE("stream replies keep the request framing") {
  Fixture f;
  Retriever retriever(f.indexes, *f.mock.gateway);
  McpServer server(retriever);
  const std::string body = R"({"jsonrpc":"2.0","id":2,"method":"tools/list"})";
  std::istringstream in(R"({"jsonrpc":"2.0","id":1,"method":"ping"})" "\n"
                        "Content-Length: " + std::to_string(body.size()) + "\r\n\r\n" + body +
                        "\n" R"({"jsonrpc":"2.0","method":"notifications/initialized"})" "\n");
  std::ostringstream out;
  server.serve_stream(in, out);
  const std::string text = out.str();
  const auto first_eol = text.find('\n');
  CHECK(json::parse(text.substr(0, first_eol))["id"] == 1);
  const std::string rest = text.substr(first_eol + 1);
  REQUIRE(rest.rfind("Content-Length: ", 0) == 0);
  const auto sep = rest.find("\r\n\r\n");
  const auto length = std::stoul(rest.substr(16, sep - 16));
  CHECK(rest.size() == sep + 4 + length);
  CHECK(json::parse(rest.substr(sep + 4))["id"] == 2);
}

TEST_CASE("tcp server answers line requests") {
  Fixture f;
  Retriever retriever(f.indexes, *f.mock.gateway);
  McpServer server(retriever);
  std::promise<std::uint16_t> bound;
  std::jthread thread([&](std::stop_token stop) {
    server.serve_tcp("127.0.0.1", 0, stop, [&](std::uint16_t port) { bound.set_value(port); });
  });
  const auto port = bound.get_future().get();

  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
  REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0);
  const std::string request =
      json{{"jsonrpc", "2.0"}, {"id", 9}, {"method", "tools/call"},
           {"params", {{"name", kSearchToolName}, {"arguments", {{"query", "rdp"}, {"space", "logic"}, {"k", 2}}}}}}
          .dump() + "\n";
  ::send(fd, request.data(), request.size(), 0);
  std::string reply;
  char buf[4096];
  while (reply.find('\n') == std::string::npos) {
    const auto got = ::recv(fd, buf, sizeof buf, 0);
    if (got <= 0) break;
    reply.append(buf, static_cast<std::size_t>(got));
  }
  ::close(fd);
  const auto parsed = json::parse(reply.substr(0, reply.find('\n')));
  CHECK(parsed["id"] == 9);
  CHECK(parsed["result"]["structuredContent"]["results"].size() == 2);
  thread.request_stop();
}

}  // TEST_SUITE
