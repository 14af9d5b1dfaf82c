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

#include "unirule/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "toml_reader.hpp"
#include "unirule/error.hpp"

namespace unirule::corpus {

RuleLanguage::RuleLanguage(std::string_view token) : token_(to_lower(trim(token))) {
  if (token_.empty()) throw Error(Errc::InvalidArgument, "empty rule language");
  for (unsigned char c : token_) {
    if (std::isspace(c)) throw Error(Errc::InvalidArgument, "rule language contains whitespace");
  }
}

bool RuleLanguage::builtin() const noexcept {
  return token_ == "splunk" || token_ == "elastic" || token_ == "snort";
}

const std::vector<RuleLanguage>& builtin_languages() {
  static const std::vector<RuleLanguage> kLanguages = {
      RuleLanguage::splunk(), RuleLanguage::elastic(), RuleLanguage::snort()};
  return kLanguages;
}

std::string DetectionRule::meta(const std::string& key) const {
  const auto it = extra.find(key);
  if (it == extra.end() || it->second.empty()) return {};
  return it->second.front();
}

json to_json(const DetectionRule& rule) {
  json extra = json::object();
  for (const auto& [key, values] : rule.extra) {
    extra[key] = values.size() == 1 ? json(values.front()) : json(values);
  }
  return json{{"id", rule.id},
              {"language", rule.language.str()},
              {"source_text", rule.source_text},
              {"title", rule.title},
              {"description", rule.description},
              {"extra", std::move(extra)}};
}

DetectionRule rule_from_json(const json& j) {
  try {
    DetectionRule rule;
    rule.id = j.at("id").get<std::string>();
    rule.language = RuleLanguage(j.at("language").get<std::string>());
    rule.source_text = j.at("source_text").get<std::string>();
    rule.title = j.value("title", "");
    rule.description = j.value("description", "");
    if (j.contains("extra")) {
      for (const auto& [key, value] : j.at("extra").items()) {
        if (value.is_array()) {
          rule.extra[key] = value.get<std::vector<std::string>>();
        } else {
          rule.extra[key] = {value.get<std::string>()};
        }
      }
    }
    if (rule.source_text.empty()) throw Error(Errc::SchemaError, "empty source_text");
    return rule;
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaError, std::string("bad rule record: ") + e.what());
  }
}

std::string content_id(std::string_view source_text) { return sha256_hex(source_text); }

namespace {

// ---------------------------------------------------------------------------
// Splunk security_content YAML

void flatten_yaml(const YAML::Node& node, const std::string& prefix, Metadata& out) {
  if (node.IsScalar()) {
    out[prefix].push_back(node.Scalar());
  } else if (node.IsSequence()) {
    for (const auto& item : node) {
      if (item.IsScalar()) out[prefix].push_back(item.Scalar());
    }
  } else if (node.IsMap()) {
    for (const auto& kv : node) {
      const std::string key = kv.first.as<std::string>();
      flatten_yaml(kv.second, prefix.empty() ? key : prefix + "." + key, out);
    }
  }
}

std::string yaml_scalar(const YAML::Node& doc, const char* key) {
  const auto node = doc[key];
  if (!node || node.IsNull()) return {};
  if (!node.IsScalar()) throw Error(Errc::MalformedDocument, std::string("field '") + key + "' is not a scalar");
  return node.Scalar();
}

// ---------------------------------------------------------------------------
// Elastic detection-rules TOML

std::string json_string(const json& table, const char* key) {
  const auto it = table.find(key);
  if (it == table.end() || it->is_null()) return {};
  if (it->is_string()) return it->get<std::string>();
  return it->dump();
}

void flatten_json(const json& node, const std::string& prefix, Metadata& out) {
  if (node.is_object()) {
    for (const auto& [key, value] : node.items()) {
      flatten_json(value, prefix.empty() ? key : prefix + "." + key, out);
    }
  } else if (node.is_array()) {
    for (const auto& item : node) {
      if (item.is_primitive()) flatten_json(item, prefix, out);
    }
  } else if (node.is_string()) {
    out[prefix].push_back(node.get<std::string>());
  } else if (!node.is_null()) {
    out[prefix].push_back(node.dump());
  }
}

void collect_elastic_threats(const json& rule, Metadata& out) {
  const auto threats = rule.find("threat");
  if (threats == rule.end() || !threats->is_array()) return;
  for (const auto& threat : *threats) {
    if (const auto tactic = threat.find("tactic"); tactic != threat.end() && tactic->is_object()) {
      out["mitre_tactic"].push_back(json_string(*tactic, "name"));
    }
    if (const auto techniques = threat.find("technique");
        techniques != threat.end() && techniques->is_array()) {
      for (const auto& technique : *techniques) {
        out["mitre_technique"].push_back(json_string(technique, "id"));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Snort

struct OptionScan {
  std::vector<SnortOption> options;
  std::size_t end = 0;  // index of the closing ')'
};

// Splits the option body on unquoted, unescaped ';'. The scan starts just
// after '(' and stops at the first ')' outside a quoted value.
OptionScan scan_options(std::string_view text, std::size_t begin) {
  OptionScan scan;
  std::size_t i = begin;
  while (true) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= text.size()) throw Error(Errc::UnbalancedOptions, "missing ')'");
    if (text[i] == ')') {
      scan.end = i;
      return scan;
    }
    const std::size_t key_start = i;
    while (i < text.size() && text[i] != ':' && text[i] != ';' && text[i] != ')') ++i;
    if (i >= text.size()) throw Error(Errc::UnbalancedOptions, "unterminated option");
    SnortOption option;
    option.key = trim(text.substr(key_start, i - key_start));
    if (option.key.empty()) throw Error(Errc::UnbalancedOptions, "option without a keyword");
    if (text[i] == ')') throw Error(Errc::UnbalancedOptions, "option '" + option.key + "' is not terminated by ';'");
    if (text[i] == ':') {
      ++i;
      const std::size_t value_start = i;
      bool quoted = false;
      while (i < text.size()) {
        const char c = text[i];
        if (c == '\\' && i + 1 < text.size()) {
          i += 2;
          continue;
        }
        if (c == '"') quoted = !quoted;
        if (!quoted && c == ';') break;
        ++i;
      }
      if (i >= text.size()) {
        throw Error(Errc::UnbalancedOptions,
                    quoted ? "unterminated quoted value in option '" + option.key + "'"
                           : "option '" + option.key + "' is not terminated by ';'");
      }
      option.value = trim(text.substr(value_start, i - value_start));
    }
    ++i;  // ';'
    scan.options.push_back(std::move(option));
  }
}

}  // namespace

DetectionRule parse_splunk(std::string_view document) {
  YAML::Node doc;
  try {
    doc = YAML::Load(std::string(document));
  } catch (const YAML::Exception& e) {
    throw Error(Errc::MalformedDocument, std::string("yaml: ") + e.what());
  }
  if (!doc.IsMap()) throw Error(Errc::MalformedDocument, "document is not a YAML mapping");

  DetectionRule rule;
  rule.language = RuleLanguage::splunk();
  rule.source_text = yaml_scalar(doc, "search");
  if (trim(rule.source_text).empty()) rule.source_text = yaml_scalar(doc, "query");
  if (trim(rule.source_text).empty()) throw Error(Errc::MissingQuery, "no search field");
  rule.title = yaml_scalar(doc, "name");
  rule.description = trim(yaml_scalar(doc, "description"));
  rule.id = yaml_scalar(doc, "id");
  if (rule.id.empty()) rule.id = content_id(rule.source_text);

  for (const auto& kv : doc) {
    const std::string key = kv.first.as<std::string>();
    if (key == "search" || key == "query" || key == "name" || key == "description" || key == "id") {
      continue;
    }
    flatten_yaml(kv.second, key, rule.extra);
  }
  return rule;
}

DetectionRule parse_elastic(std::string_view document) {
  if (trim(document).empty()) throw Error(Errc::MalformedDocument, "empty document");
  const json doc = detail::parse_toml(document);
  const auto rule_table = doc.find("rule");
  if (rule_table == doc.end() || !rule_table->is_object()) {
    throw Error(Errc::MalformedDocument, "no [rule] table");
  }
  const json& table = *rule_table;

  DetectionRule rule;
  rule.language = RuleLanguage::elastic();
  rule.source_text = json_string(table, "query");
  if (trim(rule.source_text).empty()) throw Error(Errc::MissingQuery, "no rule.query field");
  rule.title = json_string(table, "name");
  rule.description = trim(json_string(table, "description"));
  rule.id = json_string(table, "rule_id");
  if (rule.id.empty()) rule.id = content_id(rule.source_text);

  for (const auto& [key, value] : table.items()) {
    if (key == "query" || key == "name" || key == "description" || key == "rule_id" ||
        key == "threat") {
      continue;
    }
    flatten_json(value, key, rule.extra);
  }
  collect_elastic_threats(table, rule.extra);
  if (const auto meta = doc.find("metadata"); meta != doc.end()) {
    flatten_json(*meta, "metadata", rule.extra);
  }
  return rule;
}

std::optional<SnortRule> parse_snort_structure(std::string_view line) {
  const std::string trimmed = trim(line);
  if (trimmed.empty() || trimmed.front() == '#') return std::nullopt;

  const auto open = trimmed.find('(');
  const auto header = split_whitespace(std::string_view(trimmed).substr(0, open));
  if (header.size() != 7) {
    throw Error(Errc::MalformedHeader,
                "expected 7 header tokens, found " + std::to_string(header.size()));
  }
  if (open == std::string::npos) throw Error(Errc::UnbalancedOptions, "missing '('");

  SnortRule rule{header[0], header[1], header[2], header[3], header[4], header[5], header[6], {}};
  auto scan = scan_options(trimmed, open + 1);
  if (!trim(std::string_view(trimmed).substr(scan.end + 1)).empty()) {
    throw Error(Errc::UnbalancedOptions, "trailing text after ')'");
  }
  rule.options = std::move(scan.options);
  return rule;
}

std::string render_snort(const SnortRule& rule) {
  std::ostringstream out;
  out << rule.action << ' ' << rule.protocol << ' ' << rule.src_addr << ' ' << rule.src_port
      << ' ' << rule.direction << ' ' << rule.dst_addr << ' ' << rule.dst_port << " (";
  for (std::size_t i = 0; i < rule.options.size(); ++i) {
    const auto& option = rule.options[i];
    if (i > 0) out << ' ';
    out << option.key;
    if (option.value) out << ':' << *option.value;
    out << ';';
  }
  out << ')';
  return out.str();
}

std::string unquote_snort_value(std::string_view value) {
  std::string_view body = value;
  if (body.size() >= 2 && body.front() == '"' && body.back() == '"') {
    body = body.substr(1, body.size() - 2);
  }
  std::string out;
  out.reserve(body.size());
  for (std::size_t i = 0; i < body.size(); ++i) {
    // Only the three characters Snort itself escapes; PCRE escapes stay.
    const char next = i + 1 < body.size() ? body[i + 1] : '\0';
    if (body[i] == '\\' && (next == ';' || next == '"' || next == '\\')) {
      out.push_back(body[++i]);
    } else {
      out.push_back(body[i]);
    }
  }
  return out;
}

std::optional<DetectionRule> parse_snort(std::string_view line) {
  const auto parsed = parse_snort_structure(line);
  if (!parsed) return std::nullopt;

  DetectionRule rule;
  rule.language = RuleLanguage::snort();
  rule.source_text = trim(line);
  rule.extra["action"] = {parsed->action};
  rule.extra["protocol"] = {parsed->protocol};
  rule.extra["src_addr"] = {parsed->src_addr};
  rule.extra["src_port"] = {parsed->src_port};
  rule.extra["direction"] = {parsed->direction};
  rule.extra["dst_addr"] = {parsed->dst_addr};
  rule.extra["dst_port"] = {parsed->dst_port};
  for (const auto& option : parsed->options) {
    rule.extra[option.key].push_back(option.value ? unquote_snort_value(*option.value) : "");
  }
  // The msg option is the only native prose a Snort rule carries.
  rule.title = rule.meta("msg");
  rule.description = rule.title;
  const std::string sid = rule.meta("sid");
  if (!sid.empty()) {
    const std::string gid = rule.meta("gid");
    rule.id = "snort:" + (gid.empty() ? std::string("1") : gid) + ":" + sid;
  } else {
    rule.id = content_id(rule.source_text);
  }
  return rule;
}

namespace {

bool has_extension(const std::filesystem::path& path, const RuleLanguage& language) {
  const std::string ext = to_lower(path.extension().string());
  if (language == RuleLanguage::splunk()) return ext == ".yml" || ext == ".yaml";
  if (language == RuleLanguage::elastic()) return ext == ".toml";
  if (language == RuleLanguage::snort()) return ext == ".rules";
  return false;
}

struct FileResult {
  std::vector<DetectionRule> rules;
  std::vector<ParseFailure> failures;
};

FileResult parse_snort_file(const std::filesystem::path& path) {
  FileResult result;
  std::istringstream in(read_file(path));
  std::string physical;
  std::string logical;
  std::size_t line_no = 0;
  std::size_t start_line = 0;
  while (std::getline(in, physical)) {
    ++line_no;
    if (!physical.empty() && physical.back() == '\r') physical.pop_back();
    if (logical.empty()) start_line = line_no;
    // Backslash at end of line continues the rule.
    if (!physical.empty() && physical.back() == '\\') {
      logical += physical.substr(0, physical.size() - 1);
      continue;
    }
    logical += physical;
    try {
      if (auto rule = parse_snort(logical)) result.rules.push_back(std::move(*rule));
    } catch (const Error& e) {
      result.failures.push_back({path.string() + ":" + std::to_string(start_line), e.what()});
    }
    logical.clear();
  }
  if (!trim(logical).empty()) {
    result.failures.push_back({path.string() + ":" + std::to_string(start_line),
                               "UnbalancedOptions: dangling line continuation"});
  }
  return result;
}

FileResult parse_file(const std::filesystem::path& path, const RuleLanguage& language) {
  if (language == RuleLanguage::snort()) return parse_snort_file(path);
  FileResult result;
  try {
    const std::string text = read_file(path);
    result.rules.push_back(language == RuleLanguage::splunk() ? parse_splunk(text)
                                                              : parse_elastic(text));
  } catch (const Error& e) {
    result.failures.push_back({path.string(), e.what()});
  }
  return result;
}

}  // namespace

LoadResult load_corpus(const std::filesystem::path& root, const RuleLanguage& language,
                       std::size_t threads) {
  if (!language.builtin()) {
    throw Error(Errc::InvalidArgument, "no parser for language '" + language.str() + "'");
  }
  std::error_code ec;
  if (!std::filesystem::is_directory(root, ec)) {
    throw Error(Errc::Io, "cannot read corpus root " + root.string());
  }
  std::vector<std::filesystem::path> files;
  std::filesystem::recursive_directory_iterator it(root, ec);
  if (ec) throw Error(Errc::Io, "cannot read corpus root " + root.string() + ": " + ec.message());
  for (const auto& entry : it) {
    if (entry.is_regular_file() && has_extension(entry.path(), language)) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());

  std::vector<FileResult> per_file(files.size());
  parallel_for(files.size(), threads,
               [&](std::size_t i) { per_file[i] = parse_file(files[i], language); });

  LoadResult out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < files.size(); ++i) {
    for (auto& rule : per_file[i].rules) {
      if (!seen.insert(rule.id).second) {
        out.failures.push_back({files[i].string(), "duplicate rule id " + rule.id});
        continue;
      }
      out.rules.push_back(std::move(rule));
    }
    for (auto& failure : per_file[i].failures) out.failures.push_back(std::move(failure));
  }
  std::sort(out.rules.begin(), out.rules.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

std::size_t train_size(std::size_t n, double ratio) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 0.5));
}

CorpusSplit split_corpus(std::vector<DetectionRule> rules, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw Error(Errc::InvalidRatio, "ratio must lie in (0, 1), got " + std::to_string(ratio));
  }
  if (rules.empty()) throw Error(Errc::InvalidArgument, "cannot split an empty corpus");
  // Canonical order first, so the split depends on content, not input order.
  std::sort(rules.begin(), rules.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < rules.size(); ++i) {
    if (rules[i].id == rules[i - 1].id) {
      throw Error(Errc::InvalidArgument, "duplicate rule id " + rules[i].id);
    }
  }
  Rng rng(seed);
  rng.shuffle(rules);
  const std::size_t cut = train_size(rules.size(), ratio);

  CorpusSplit split;
  split.seed = seed;
  split.ratio = ratio;
  split.train.assign(std::make_move_iterator(rules.begin()),
                     std::make_move_iterator(rules.begin() + static_cast<std::ptrdiff_t>(cut)));
  split.test.assign(std::make_move_iterator(rules.begin() + static_cast<std::ptrdiff_t>(cut)),
                    std::make_move_iterator(rules.end()));
  const auto by_id = [](const auto& a, const auto& b) { return a.id < b.id; };
  std::sort(split.train.begin(), split.train.end(), by_id);
  std::sort(split.test.begin(), split.test.end(), by_id);
  return split;
}

void save_corpus(const std::filesystem::path& path, std::vector<DetectionRule> rules) {
  std::sort(rules.begin(), rules.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::vector<json> rows;
  rows.reserve(rules.size());
  for (const auto& rule : rules) rows.push_back(to_json(rule));
  write_jsonl(path, rows);
}

std::vector<DetectionRule> load_corpus_file(const std::filesystem::path& path) {
  std::vector<DetectionRule> rules;
  for (const auto& row : read_jsonl(path)) rules.push_back(rule_from_json(row));
  return rules;
}

}  // namespace unirule::corpus
