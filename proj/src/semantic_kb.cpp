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

#include "unirule/semantic_kb.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "unirule/prompts.hpp"

namespace unirule::kb {

std::string_view to_string(SemanticDimension dimension) {
  return dimension == SemanticDimension::Intent ? "intent" : "logic";
}

SemanticDimension dimension_from_string(std::string_view text) {
  if (text == "intent") return SemanticDimension::Intent;
  if (text == "logic") return SemanticDimension::Logic;
  throw Error(Errc::InvalidArgument, "unknown semantic dimension '" + std::string(text) + "'");
}

json to_json(const SemanticDescription& d) {
  return json{{"rule_id", d.rule_id},
              {"dimension", to_string(d.dimension)},
              {"summary", d.summary},
              {"full_text", d.full_text}};
}

SemanticDescription description_from_json(const json& j) {
  try {
    SemanticDescription d;
    d.rule_id = j.at("rule_id").get<std::string>();
    d.dimension = dimension_from_string(j.at("dimension").get<std::string>());
    d.summary = j.value("summary", "");
    d.full_text = j.at("full_text").get<std::string>();
    if (d.full_text.empty()) throw Error(Errc::SchemaError, "empty full_text");
    return d;
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaError, std::string("bad description record: ") + e.what());
  }
}

namespace {

std::string strip_label(std::string text) {
  text = trim(text);
  for (std::string_view label : {"INTENT:", "LOGIC:", "SUMMARY:"}) {
    if (text.rfind(label, 0) == 0) return trim(std::string_view(text).substr(label.size()));
  }
  return text;
}

std::string strip_final_period(std::string text) {
  if (!text.empty() && text.back() == '.') text.pop_back();
  return trim(text);
}

std::string first_sentence(std::string_view text) {
  std::size_t end = text.size();
  for (std::string_view stop : {". ", ".\n", "\n"}) {
    end = std::min(end, text.find(stop));
  }
  return std::string(text.substr(0, end));
}

}  // namespace

SemanticDescription parse_translation(std::string_view reply, const std::string& rule_id,
                                      SemanticDimension dimension) {
  const std::string text = trim(reply);
  if (text.empty()) throw Error(Errc::EmptyTranslation, "blank translation for " + rule_id);

  SemanticDescription d;
  d.rule_id = rule_id;
  d.dimension = dimension;
  const auto detail = text.find("DETAIL:");
  if (detail != std::string::npos) {
    d.summary = strip_final_period(strip_label(text.substr(0, detail)));
    d.full_text = trim(std::string_view(text).substr(detail + 7));
    if (d.full_text.empty()) d.full_text = d.summary;
  } else {
    d.full_text = strip_label(text);
    d.summary = strip_final_period(first_sentence(d.full_text));
  }
  if (d.full_text.empty()) throw Error(Errc::EmptyTranslation, "blank translation for " + rule_id);
  return d;
}

SemanticDescription translate_rule(const corpus::DetectionRule& rule, SemanticDimension dimension,
                                   llm::Gateway& gateway) {
  if (rule.source_text.empty()) throw Error(Errc::InvalidArgument, "rule " + rule.id + " has no source text");
  const std::string system = prompts::get(dimension == SemanticDimension::Intent
                                              ? "translate_intent_system"
                                              : "translate_logic_system");
  const std::string user = prompts::fill(
      "translate_user",
      {{"language", rule.language.str()}, {"title", rule.title}, {"rule", rule.source_text}});
  const std::vector<llm::ChatMessage> messages = {llm::ChatMessage::system(system),
                                                  llm::ChatMessage::user(user)};
  constexpr int kAttempts = 2;
  for (int attempt = 1;; ++attempt) {
    const auto response = gateway.chat(messages);
    try {
      return parse_translation(response.message.content, rule.id, dimension);
    } catch (const Error& e) {
      if (e.code() != Errc::EmptyTranslation || attempt >= kAttempts) throw;
    }
  }
}

std::vector<float> normalized(const std::vector<float>& v) {
  double norm_sq = 0.0;
  for (float x : v) norm_sq += static_cast<double>(x) * static_cast<double>(x);
  if (!(norm_sq > 0.0) || !std::isfinite(norm_sq)) {
    throw Error(Errc::InvalidArgument, "cannot normalize a zero or non-finite vector");
  }
  const double norm = std::sqrt(norm_sq);
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = static_cast<float>(static_cast<double>(v[i]) / norm);
  }
  return out;
}

SemanticIndex::SemanticIndex(SemanticDimension dimension, std::size_t embed_dim,
                             std::vector<SemanticIndexEntry> entries)
    : dimension_(dimension), embed_dim_(embed_dim), entries_(std::move(entries)) {
  if (embed_dim_ == 0) throw Error(Errc::InvalidArgument, "embedding dimension must be positive");
  for (auto& entry : entries_) {
    if (entry.vector.size() != embed_dim_) {
      throw Error(Errc::DimensionMismatch, "entry " + entry.rule.id + " has dimension " +
                                               std::to_string(entry.vector.size()) + ", index expects " +
                                               std::to_string(embed_dim_));
    }
    if (entry.description.dimension != dimension_) {
      throw Error(Errc::InvalidArgument, "entry " + entry.rule.id + " carries a " +
                                             std::string(to_string(entry.description.dimension)) +
                                             " description");
    }
    entry.vector = normalized(entry.vector);
  }
  std::sort(entries_.begin(), entries_.end(),
            [](const auto& a, const auto& b) { return a.rule.id < b.rule.id; });
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    if (entries_[i].rule.id == entries_[i - 1].rule.id) {
      throw Error(Errc::InvalidArgument, "duplicate rule id " + entries_[i].rule.id + " in index");
    }
  }
}

const SemanticIndexEntry* SemanticIndex::find(std::string_view rule_id) const {
  const auto it = std::lower_bound(entries_.begin(), entries_.end(), rule_id,
                                   [](const auto& e, std::string_view id) { return e.rule.id < id; });
  return it != entries_.end() && it->rule.id == rule_id ? &*it : nullptr;
}

// ---------------------------------------------------------------------------
// Cache

TranslationCache::TranslationCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw Error(Errc::Io, "cannot create cache directory " + dir_.string() + ": " + ec.message());
}

std::string TranslationCache::key(const corpus::DetectionRule& rule, SemanticDimension dimension,
                                  std::string_view chat_model) const {
  const auto task = dimension == SemanticDimension::Intent ? prompts::Task::TranslateIntent
                                                           : prompts::Task::TranslateLogic;
  std::string material = corpus::content_id(rule.source_text);
  material += '\0';
  material += rule.language.str();
  material += '\0';
  material += rule.title;
  material += '\0';
  material += to_string(dimension);
  material += '\0';
  material += prompts::fingerprint(task);
  material += '\0';
  material += chat_model;
  return sha256_hex(material);
}

std::string TranslationCache::source_key(const corpus::DetectionRule& rule) const {
  return sha256_hex("source\0" + corpus::content_id(rule.source_text));
}

std::filesystem::path TranslationCache::path_for(const std::string& key) const {
  return dir_ / key.substr(0, 2) / (key + ".json");
}

json TranslationCache::load(const std::string& key) const {
  const auto path = path_for(key);
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return json::object();
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error&) {
    return json::object();  // a torn write is treated as a miss
  }
}

std::optional<SemanticDescription> TranslationCache::description(const std::string& key) const {
  std::lock_guard lock(mutex_);
  const json entry = load(key);
  if (!entry.contains("description")) return std::nullopt;
  return description_from_json(entry.at("description"));
}

void TranslationCache::store_description(const std::string& key, const SemanticDescription& description,
                                         std::string_view chat_model) {
  std::lock_guard lock(mutex_);
  json entry = load(key);
  entry["description"] = to_json(description);
  entry["chat_model"] = chat_model;
  entry["prompt_version"] = prompts::version();
  write_file(path_for(key), entry.dump(2));
}

std::optional<std::vector<float>> TranslationCache::vector(const std::string& key,
                                                           std::string_view slot) const {
  std::lock_guard lock(mutex_);
  const json entry = load(key);
  const auto vectors = entry.find("vectors");
  if (vectors == entry.end()) return std::nullopt;
  const auto it = vectors->find(std::string(slot));
  if (it == vectors->end()) return std::nullopt;
  return decode_f32(it->get<std::string>());
}

void TranslationCache::store_vector(const std::string& key, std::string_view slot,
                                    const std::vector<float>& v) {
  std::lock_guard lock(mutex_);
  json entry = load(key);
  entry["vectors"][std::string(slot)] = encode_f32(v);
  write_file(path_for(key), entry.dump(2));
}

// ---------------------------------------------------------------------------
// Building

std::vector<SemanticDescription> describe_rules(const std::vector<corpus::DetectionRule>& rules,
                                                SemanticDimension dimension, llm::Gateway& gateway,
                                                TranslationCache* cache, std::size_t threads) {
  std::vector<SemanticDescription> out(rules.size());
  const std::string model = gateway.chat_model();
  parallel_for(rules.size(), threads, [&](std::size_t i) {
    const auto& rule = rules[i];
    if (cache) {
      const std::string key = cache->key(rule, dimension, model);
      if (auto hit = cache->description(key)) {
        hit->rule_id = rule.id;
        out[i] = std::move(*hit);
        return;
      }
      out[i] = translate_rule(rule, dimension, gateway);
      cache->store_description(key, out[i], model);
    } else {
      out[i] = translate_rule(rule, dimension, gateway);
    }
  });
  return out;
}

namespace {

// Embeds texts[i] for every i not already satisfied by `lookup`, batch by
// batch, handing each finished batch to `store` before the next starts.
std::vector<std::vector<float>> embed_with_cache(
    const std::vector<std::string>& texts, llm::Gateway& gateway, std::size_t threads,
    const std::function<std::optional<std::vector<float>>(std::size_t)>& lookup,
    const std::function<void(std::size_t, const std::vector<float>&)>& store) {
  std::vector<std::vector<float>> out(texts.size());
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (auto hit = lookup(i)) {
      out[i] = std::move(*hit);
    } else {
      missing.push_back(i);
    }
  }
  const std::size_t batch = gateway.config().embed_batch_size;
  const std::size_t batches = (missing.size() + batch - 1) / batch;
  parallel_for(batches, threads, [&](std::size_t b) {
    const std::size_t begin = b * batch;
    const std::size_t end = std::min(missing.size(), begin + batch);
    std::vector<std::string> chunk;
    for (std::size_t m = begin; m < end; ++m) chunk.push_back(texts[missing[m]]);
    auto vectors = gateway.embed(chunk);
    for (std::size_t m = begin; m < end; ++m) {
      out[missing[m]] = std::move(vectors[m - begin]);
      store(missing[m], out[missing[m]]);
    }
  });
  return out;
}

}  // namespace

SemanticIndex build_index(const std::vector<corpus::DetectionRule>& rules, SemanticDimension dimension,
                          llm::Gateway& gateway, const BuildOptions& options) {
  if (rules.empty()) throw Error(Errc::InvalidArgument, "cannot build an index from zero rules");
  const auto descriptions = describe_rules(rules, dimension, gateway, options.cache, options.threads);

  std::vector<std::string> texts;
  texts.reserve(rules.size());
  for (const auto& d : descriptions) {
    texts.push_back(options.embed_field == EmbedField::FullText || d.summary.empty() ? d.full_text
                                                                                     : d.summary);
  }
  const std::string model = gateway.chat_model();
  const std::string slot = gateway.embed_model() +
                           (options.embed_field == EmbedField::FullText ? "|full_text" : "|summary");
  auto* cache = options.cache;
  const auto vectors = embed_with_cache(
      texts, gateway, options.threads,
      [&](std::size_t i) -> std::optional<std::vector<float>> {
        if (!cache) return std::nullopt;
        return cache->vector(cache->key(rules[i], dimension, model), slot);
      },
      [&](std::size_t i, const std::vector<float>& v) {
        if (cache) cache->store_vector(cache->key(rules[i], dimension, model), slot, v);
      });

  std::vector<SemanticIndexEntry> entries;
  entries.reserve(rules.size());
  for (std::size_t i = 0; i < rules.size(); ++i) {
    entries.push_back({vectors[i], rules[i], rules[i].language, descriptions[i]});
  }
  return SemanticIndex(dimension, vectors.front().size(), std::move(entries));
}

SourceIndex::SourceIndex(std::size_t embed_dim, std::vector<SourceIndexEntry> entries)
    : embed_dim_(embed_dim), entries_(std::move(entries)) {
  if (embed_dim_ == 0) throw Error(Errc::InvalidArgument, "embedding dimension must be positive");
  for (auto& entry : entries_) {
    if (entry.vector.size() != embed_dim_) {
      throw Error(Errc::DimensionMismatch, "entry " + entry.rule.id + " has the wrong dimension");
    }
    entry.vector = normalized(entry.vector);
  }
  std::sort(entries_.begin(), entries_.end(),
            [](const auto& a, const auto& b) { return a.rule.id < b.rule.id; });
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    if (entries_[i].rule.id == entries_[i - 1].rule.id) {
      throw Error(Errc::InvalidArgument, "duplicate rule id " + entries_[i].rule.id + " in index");
    }
  }
}

SourceIndex build_source_index(const std::vector<corpus::DetectionRule>& rules, llm::Gateway& gateway,
                               TranslationCache* cache) {
  if (rules.empty()) throw Error(Errc::InvalidArgument, "cannot build an index from zero rules");
  std::vector<std::string> texts;
  for (const auto& rule : rules) texts.push_back(rule.source_text);
  const std::string slot = gateway.embed_model() + "|source";
  const auto vectors = embed_with_cache(
      texts, gateway, gateway.config().max_parallel_requests,
      [&](std::size_t i) -> std::optional<std::vector<float>> {
        if (!cache) return std::nullopt;
        return cache->vector(cache->source_key(rules[i]), slot);
      },
      [&](std::size_t i, const std::vector<float>& v) {
        if (cache) cache->store_vector(cache->source_key(rules[i]), slot, v);
      });
  std::vector<SourceIndexEntry> entries;
  for (std::size_t i = 0; i < rules.size(); ++i) entries.push_back({vectors[i], rules[i]});
  return SourceIndex(vectors.front().size(), std::move(entries));
}

// ---------------------------------------------------------------------------
// Persistence: a JSON header line, then one JSON record per entry. The header
// checksum is the SHA-256 of every byte after the header line.

namespace {

constexpr std::string_view kSemanticFormat = "unirule-semantic-index";
constexpr std::string_view kSourceFormat = "unirule-source-index";

void write_index_file(const std::filesystem::path& path, json header, const std::vector<json>& records) {
  std::string body;
  for (const auto& record : records) {
    body += record.dump();
    body += '\n';
  }
  header["version"] = kIndexFormatVersion;
  header["count"] = records.size();
  header["checksum"] = sha256_hex(body);
  write_file(path, header.dump() + "\n" + body);
}

struct IndexFile {
  json header;
  std::vector<json> records;
};

IndexFile read_index_file(const std::filesystem::path& path, std::string_view format) {
  const std::string text = read_file(path);
  const auto eol = text.find('\n');
  IndexFile file;
  try {
    file.header = json::parse(text.substr(0, eol));
  } catch (const json::parse_error&) {
    throw Error(Errc::ChecksumMismatch, path.string() + ": unreadable header");
  }
  if (!file.header.is_object() || file.header.value("format", "") != format) {
    throw Error(Errc::SchemaError, path.string() + ": not a " + std::string(format) + " file");
  }
  const int version = file.header.value("version", 0);
  if (version != kIndexFormatVersion) {
    throw Error(Errc::VersionMismatch, path.string() + ": format version " + std::to_string(version) +
                                           ", this build reads " + std::to_string(kIndexFormatVersion));
  }
  const std::string_view body =
      eol == std::string::npos ? std::string_view() : std::string_view(text).substr(eol + 1);
  if (sha256_hex(body) != file.header.value("checksum", "")) {
    throw Error(Errc::ChecksumMismatch, path.string() + ": body checksum does not match header");
  }
  std::istringstream in{std::string(body)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) file.records.push_back(json::parse(line));
  }
  if (file.records.size() != file.header.value("count", std::size_t{0})) {
    throw Error(Errc::ChecksumMismatch, path.string() + ": entry count does not match header");
  }
  return file;
}

}  // namespace

void save_index(const SemanticIndex& index, const std::filesystem::path& path) {
  std::vector<json> records;
  records.reserve(index.size());
  for (const auto& e : index.entries()) {
    records.push_back({{"rule", corpus::to_json(e.rule)},
                       {"language", e.language.str()},
                       {"description", to_json(e.description)},
                       {"vector", encode_f32(e.vector)}});
  }
  write_index_file(path,
                   {{"format", kSemanticFormat},
                    {"dimension", to_string(index.dimension())},
                    {"embed_dim", index.embed_dim()}},
                   records);
}

SemanticIndex load_index(const std::filesystem::path& path) {
  const auto file = read_index_file(path, kSemanticFormat);
  try {
    const auto dimension = dimension_from_string(file.header.at("dimension").get<std::string>());
    const auto embed_dim = file.header.at("embed_dim").get<std::size_t>();
    std::vector<SemanticIndexEntry> entries;
    entries.reserve(file.records.size());
    for (const auto& r : file.records) {
      entries.push_back({decode_f32(r.at("vector").get<std::string>()),
                         corpus::rule_from_json(r.at("rule")),
                         corpus::RuleLanguage(r.at("language").get<std::string>()),
                         description_from_json(r.at("description"))});
    }
    return SemanticIndex(dimension, embed_dim, std::move(entries));
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaError, path.string() + ": " + e.what());
  }
}

void save_source_index(const SourceIndex& index, const std::filesystem::path& path) {
  std::vector<json> records;
  for (const auto& e : index.entries()) {
    records.push_back({{"rule", corpus::to_json(e.rule)}, {"vector", encode_f32(e.vector)}});
  }
  write_index_file(path, {{"format", kSourceFormat}, {"embed_dim", index.embed_dim()}}, records);
}

SourceIndex load_source_index(const std::filesystem::path& path) {
  const auto file = read_index_file(path, kSourceFormat);
  try {
    std::vector<SourceIndexEntry> entries;
    for (const auto& r : file.records) {
      entries.push_back({decode_f32(r.at("vector").get<std::string>()), corpus::rule_from_json(r.at("rule"))});
    }
    return SourceIndex(file.header.at("embed_dim").get<std::size_t>(), std::move(entries));
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaError, path.string() + ": " + e.what());
  }
}

}  // namespace unirule::kb
