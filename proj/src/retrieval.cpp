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

#include "unirule/retrieval.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <set>
#include <thread>

namespace unirule::retrieval {

void SearchQuery::validate() const {
  if (trim(query).empty()) throw Error(Errc::InvalidArgument, "search query is empty");
  if (k < 1) throw Error(Errc::InvalidArgument, "k must be at least 1");
}

json to_json(const SearchQuery& q) {
  json j{{"query", q.query}, {"space", kb::to_string(q.space)}, {"k", q.k}};
  j["language"] = q.language_filter ? json(q.language_filter->str()) : json(nullptr);
  return j;
}

json to_json(const SearchResult& r) {
  return json{{"rule", corpus::to_json(r.rule)},
              {"language", r.language.str()},
              {"description", kb::to_json(r.description)},
              {"score", r.score}};
}

SearchResult result_from_json(const json& j) {
  try {
    return SearchResult{corpus::rule_from_json(j.at("rule")),
                        corpus::RuleLanguage(j.at("language").get<std::string>()),
                        kb::description_from_json(j.at("description")), j.at("score").get<double>()};
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaError, std::string("bad search result record: ") + e.what());
  }
}

namespace {

double round6(double x) { return std::round(x * 1e6) / 1e6; }

bool ranks_before(double score_a, std::string_view id_a, double score_b, std::string_view id_b) {
  if (score_a != score_b) return score_a > score_b;
  return id_a < id_b;
}

}  // namespace

json to_tool_json(const SearchResult& r, std::size_t max_source_chars) {
  std::string source = r.rule.source_text;
  if (max_source_chars > 0 && source.size() > max_source_chars) {
    source = source.substr(0, max_source_chars) + " ...";
  }
  return json{{"rule_id", r.rule.id},
              {"language", r.language.str()},
              {"score", round6(r.score)},
              {"description_summary", r.description.summary},
              {"rule_source_text", source}};
}

double dot(std::span<const float> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += static_cast<double>(a[i]) * b[i];
  return sum;
}

std::vector<double> unit_query(const std::vector<float>& embedding) {
  double norm_sq = 0.0;
  for (float x : embedding) norm_sq += static_cast<double>(x) * x;
  if (!(norm_sq > 0.0) || !std::isfinite(norm_sq)) {
    throw Error(Errc::InvalidArgument, "query embedding is zero or non-finite");
  }
  const double norm = std::sqrt(norm_sq);
  std::vector<double> out(embedding.size());
  for (std::size_t i = 0; i < embedding.size(); ++i) out[i] = embedding[i] / norm;
  return out;
}

std::vector<SearchResult> search_index(const kb::SemanticIndex& index, std::span<const double> query,
                                       std::size_t k,
                                       const std::optional<corpus::RuleLanguage>& language_filter) {
  if (k < 1) throw Error(Errc::InvalidArgument, "k must be at least 1");
  if (!index.empty() && query.size() != index.embed_dim()) {
    throw Error(Errc::DimensionMismatch, "query has dimension " + std::to_string(query.size()) +
                                             ", index has " + std::to_string(index.embed_dim()));
  }
  struct Scored {
    const kb::SemanticIndexEntry* entry;
    double score;
  };
  std::vector<Scored> scored;
  scored.reserve(index.size());
  for (const auto& entry : index.entries()) {
    if (language_filter && entry.language != *language_filter) continue;
    scored.push_back({&entry, dot(entry.vector, query)});
  }
  const std::size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(),
                    [](const Scored& a, const Scored& b) {
                      return ranks_before(a.score, a.entry->rule.id, b.score, b.entry->rule.id);
                    });
  std::vector<SearchResult> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    const auto& e = *scored[i].entry;
    out.push_back({e.rule, e.language, e.description, scored[i].score});
  }
  return out;
}

std::vector<SearchResult> search(const DualIndex& indexes, const SearchQuery& query, llm::Gateway& gateway) {
  query.validate();
  const auto embedding = gateway.embed({query.query});
  return search_index(indexes.get(query.space), unit_query(embedding.front()), query.k,
                      query.language_filter);
}

std::vector<SourceHit> search_source(const kb::SourceIndex& index, std::span<const double> query,
                                     std::size_t k) {
  if (k < 1) throw Error(Errc::InvalidArgument, "k must be at least 1");
  if (index.size() > 0 && query.size() != index.embed_dim()) {
    throw Error(Errc::DimensionMismatch, "query dimension does not match the source index");
  }
  std::vector<SourceHit> hits;
  hits.reserve(index.size());
  for (const auto& entry : index.entries()) hits.push_back({&entry, dot(entry.vector, query)});
  const std::size_t take = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(take), hits.end(),
                    [](const SourceHit& a, const SourceHit& b) {
                      return ranks_before(a.score, a.entry->rule.id, b.score, b.entry->rule.id);
                    });
  hits.resize(take);
  return hits;
}

Retriever::Retriever(std::shared_ptr<const DualIndex> indexes, llm::Gateway& gateway, bool cache_queries)
    : indexes_(std::move(indexes)), gateway_(gateway), cache_queries_(cache_queries) {
  if (!indexes_) throw Error(Errc::InvalidArgument, "retriever needs indexes");
}

std::vector<double> Retriever::embed_query(const std::string& text) {
  if (cache_queries_) {
    std::lock_guard lock(mutex_);
    if (const auto it = query_cache_.find(text); it != query_cache_.end()) return it->second;
  }
  auto v = unit_query(gateway_.embed({text}).front());
  if (cache_queries_) {
    std::lock_guard lock(mutex_);
    query_cache_.emplace(text, v);
  }
  return v;
}

std::vector<SearchResult> Retriever::search(const SearchQuery& query) {
  query.validate();
  const auto v = embed_query(query.query);
  return search_index(indexes_->get(query.space), v, query.k, query.language_filter);
}

// ---------------------------------------------------------------------------
// JSON-RPC

json search_tool_schema() {
  return json{
      {"name", kSearchToolName},
      {"description",
       "Search the detection rule knowledge base by detection intent or detection logic. Returns the "
       "top-k rules ranked by cosine similarity."},
      {"inputSchema",
       {{"type", "object"},
        {"properties",
         {{"query", {{"type", "string"}, {"description", "Natural-language search text"}}},
          {"space", {{"type", "string"}, {"enum", {"intent", "logic"}}}},
          {"k", {{"type", "integer"}, {"minimum", 1}}},
          {"language", {{"type", "string"}, {"description", "Optional rule language filter"}}}}},
        {"required", {"query", "space", "k"}}}}};
}

McpServer::McpServer(Retriever& retriever, std::size_t max_source_chars)
    : retriever_(retriever), max_source_chars_(max_source_chars) {}

namespace {

struct RpcError {
  int code;
  std::string message;
};

json error_response(const json& id, int code, const std::string& message) {
  return json{{"jsonrpc", "2.0"}, {"id", id}, {"error", {{"code", code}, {"message", message}}}};
}

}  // namespace

json McpServer::call_tool(const json& params) {
  if (!params.is_object()) throw RpcError{rpc::kInvalidParams, "params must be an object"};
  if (params.value("name", "") != kSearchToolName) {
    throw RpcError{rpc::kInvalidParams, "unknown tool '" + params.value("name", "") + "'"};
  }
  const json args = params.value("arguments", json::object());
  if (!args.is_object()) throw RpcError{rpc::kInvalidParams, "arguments must be an object"};

  SearchQuery q;
  const auto query = args.find("query");
  if (query == args.end() || !query->is_string() || trim(query->get<std::string>()).empty()) {
    throw RpcError{rpc::kInvalidParams, "query must be a non-empty string"};
  }
  q.query = query->get<std::string>();
  const auto space = args.find("space");
  if (space == args.end() || !space->is_string()) throw RpcError{rpc::kInvalidParams, "space is required"};
  const auto space_text = space->get<std::string>();
  if (space_text != "intent" && space_text != "logic") {
    throw RpcError{rpc::kInvalidParams, "space must be \"intent\" or \"logic\", got \"" + space_text + "\""};
  }
  q.space = kb::dimension_from_string(space_text);
  const auto k = args.find("k");
  if (k == args.end() || !k->is_number_integer() || k->get<std::int64_t>() < 1) {
    throw RpcError{rpc::kInvalidParams, "k must be an integer >= 1"};
  }
  q.k = static_cast<std::size_t>(k->get<std::int64_t>());
  if (const auto lang = args.find("language"); lang != args.end() && !lang->is_null()) {
    if (!lang->is_string()) throw RpcError{rpc::kInvalidParams, "language must be a string"};
    try {
      q.language_filter = corpus::RuleLanguage(lang->get<std::string>());
    } catch (const Error& e) {
      throw RpcError{rpc::kInvalidParams, e.what()};
    }
  }

  std::vector<SearchResult> results;
  try {
    results = retriever_.search(q);
  } catch (const Error& e) {
    if (e.code() == Errc::InvalidArgument) throw RpcError{rpc::kInvalidParams, e.what()};
    throw RpcError{rpc::kProviderFailure, e.what()};
  }
  json items = json::array();
  for (const auto& r : results) items.push_back(to_tool_json(r, max_source_chars_));
  return json{{"content", {{{"type", "text"}, {"text", items.dump()}}}},
              {"structuredContent", {{"results", items}}},
              {"isError", false}};
}

std::optional<json> McpServer::handle(const json& request) {
  if (!request.is_object() || request.value("jsonrpc", "") != "2.0" || !request.contains("method") ||
      !request.at("method").is_string()) {
    const json id = request.is_object() && request.contains("id") ? request.at("id") : json(nullptr);
    return error_response(id, rpc::kInvalidRequest, "invalid JSON-RPC 2.0 request");
  }
  const bool notification = !request.contains("id");
  const json id = notification ? json(nullptr) : request.at("id");
  const std::string method = request.at("method").get<std::string>();
  const json params = request.value("params", json::object());

  json result;
  try {
    if (method == "initialize") {
      result = {{"protocolVersion", params.value("protocolVersion", "2024-11-05")},
                {"capabilities", {{"tools", json::object()}}},
                {"serverInfo", {{"name", "unirule"}, {"version", "1.0.0"}}}};
    } else if (method == "tools/list") {
      result = {{"tools", json::array({search_tool_schema()})}};
    } else if (method == "tools/call") {
      result = call_tool(params);
    } else if (method == "ping") {
      result = json::object();
    } else if (method.rfind("notifications/", 0) == 0) {
      return std::nullopt;
    } else {
      throw RpcError{rpc::kMethodNotFound, "method not found: " + method};
    }
  } catch (const RpcError& e) {
    if (notification) return std::nullopt;
    return error_response(id, e.code, e.message);
  }
  if (notification) return std::nullopt;
  return json{{"jsonrpc", "2.0"}, {"id", id}, {"result", std::move(result)}};
}

std::optional<std::string> McpServer::handle_text(std::string_view body) {
  json request;
  try {
    request = json::parse(body);
  } catch (const json::parse_error& e) {
    return error_response(nullptr, rpc::kParseError, std::string("parse error: ") + e.what()).dump();
  }
  if (request.is_array()) {
    json batch = json::array();
    for (const auto& item : request) {
      if (auto reply = handle(item)) batch.push_back(std::move(*reply));
    }
    if (batch.empty()) return std::nullopt;
    return batch.dump();
  }
  auto reply = handle(request);
  if (!reply) return std::nullopt;
  return reply->dump();
}

namespace {

// Reads framed messages from a byte source. A message is either a
// Content-Length header block followed by a body, or a single JSON line.
class Framer {
 public:
  using ReadLine = std::function<std::optional<std::string>()>;
  using ReadExact = std::function<std::optional<std::string>(std::size_t)>;
  using Write = std::function<void(std::string_view)>;

  Framer(ReadLine read_line, ReadExact read_exact, Write write)
      : read_line_(std::move(read_line)), read_exact_(std::move(read_exact)), write_(std::move(write)) {}

  void run(McpServer& server) {
    while (auto line = read_line_()) {
      std::string text = *line;
      if (!text.empty() && text.back() == '\r') text.pop_back();
      if (trim(text).empty()) continue;
      if (to_lower(text).rfind("content-length:", 0) == 0) {
        std::size_t length = 0;
        try {
          length = std::stoul(text.substr(15));
        } catch (const std::exception&) {
          write_line(server.handle_text("").value_or(""));
          continue;
        }
        // Skip remaining headers up to the blank separator line.
        while (auto header = read_line_()) {
          if (trim(*header).empty()) break;
        }
        const auto body = read_exact_(length);
        if (!body) return;
        if (auto reply = server.handle_text(*body)) {
          write_("Content-Length: " + std::to_string(reply->size()) + "\r\n\r\n" + *reply);
        }
      } else {
        if (auto reply = server.handle_text(text)) write_line(*reply);
      }
    }
  }

 private:
  void write_line(const std::string& reply) {
    if (!reply.empty()) write_(reply + "\n");
  }

  ReadLine read_line_;
  ReadExact read_exact_;
  Write write_;
};

class SocketReader {
 public:
  explicit SocketReader(int fd) : fd_(fd) {}

  std::optional<std::string> read_line() {
    for (;;) {
      if (const auto eol = buffer_.find('\n'); eol != std::string::npos) {
        std::string line = buffer_.substr(0, eol);
        buffer_.erase(0, eol + 1);
        return line;
      }
      if (!fill()) {
        if (buffer_.empty()) return std::nullopt;
        return std::exchange(buffer_, {});
      }
    }
  }

  std::optional<std::string> read_exact(std::size_t n) {
    while (buffer_.size() < n) {
      if (!fill()) return std::nullopt;
    }
    std::string out = buffer_.substr(0, n);
    buffer_.erase(0, n);
    return out;
  }

 private:
  bool fill() {
    char chunk[4096];
    for (;;) {
      const ssize_t got = ::recv(fd_, chunk, sizeof(chunk), 0);
      if (got > 0) {
        buffer_.append(chunk, static_cast<std::size_t>(got));
        return true;
      }
      if (got < 0 && errno == EINTR) continue;
      return false;
    }
  }

  int fd_;
  std::string buffer_;
};

void send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t sent = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (sent < 0) {
      if (errno == EINTR) continue;
      return;
    }
    data.remove_prefix(static_cast<std::size_t>(sent));
  }
}

}  // namespace

void McpServer::serve_stream(std::istream& in, std::ostream& out) {
  Framer framer(
      [&]() -> std::optional<std::string> {
        std::string line;
        if (!std::getline(in, line)) return std::nullopt;
        return line;
      },
      [&](std::size_t n) -> std::optional<std::string> {
        std::string body(n, '\0');
        in.read(body.data(), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n) return std::nullopt;
        return body;
      },
      [&](std::string_view data) {
        out << data;
        out.flush();
      });
  framer.run(*this);
}

void McpServer::serve_tcp(const std::string& host, std::uint16_t port, std::stop_token stop,
                          const std::function<void(std::uint16_t)>& on_listening) {
  const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listener < 0) throw Error(Errc::Io, std::string("socket: ") + std::strerror(errno));
  const int on = 1;
  ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &on, sizeof(on));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(listener);
    throw Error(Errc::InvalidArgument, "host must be an IPv4 address: " + host);
  }
  if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
      ::listen(listener, 16) != 0) {
    const std::string reason = std::strerror(errno);
    ::close(listener);
    throw Error(Errc::Io, "cannot listen on " + host + ":" + std::to_string(port) + ": " + reason);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &len);
  if (on_listening) on_listening(ntohs(addr.sin_port));

  std::mutex open_mutex;
  std::set<int> open_clients;
  std::vector<std::jthread> connections;
  while (!stop.stop_requested()) {
    pollfd pfd{listener, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, 100);
    if (ready <= 0) continue;
    const int client = ::accept(listener, nullptr, nullptr);
    if (client < 0) continue;
    {
      std::lock_guard lock(open_mutex);
      open_clients.insert(client);
    }
    connections.emplace_back([this, client, &open_mutex, &open_clients] {
      SocketReader reader(client);
      Framer framer([&] { return reader.read_line(); }, [&](std::size_t n) { return reader.read_exact(n); },
                    [&](std::string_view data) { send_all(client, data); });
      framer.run(*this);
      std::lock_guard lock(open_mutex);
      open_clients.erase(client);
      ::close(client);
    });
  }
  ::close(listener);
  {
    std::lock_guard lock(open_mutex);
    for (int fd : open_clients) ::shutdown(fd, SHUT_RDWR);
  }
  for (auto& t : connections) {
    if (t.joinable()) t.join();
  }
}

}  // namespace unirule::retrieval
