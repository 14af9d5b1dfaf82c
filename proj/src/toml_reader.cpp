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

#include "toml_reader.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "unirule/error.hpp"

namespace unirule::detail {
namespace {

bool is_bare_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xc0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xe0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else {
    out.push_back(static_cast<char>(0xf0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  }
}

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  json parse() {
    json root = json::object();
    json* current = &root;
    while (true) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        current = parse_table_header(root);
      } else {
        parse_key_value(*current);
      }
      expect_line_end();
    }
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(Errc::MalformedDocument, "toml line " + std::to_string(line_) + ": " + what);
  }

  bool eof() const { return pos_ >= text_.size(); }
  char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < text_.size() ? text_[pos_ + ahead] : '\0';
  }
  bool starts_with(std::string_view s) const { return text_.substr(pos_, s.size()) == s; }
  char advance() {
    const char c = text_[pos_++];
    if (c == '\n') ++line_;
    return c;
  }

  void skip_spaces() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) advance();
  }

  void skip_comment() {
    if (peek() == '#') {
      while (!eof() && peek() != '\n') advance();
    }
  }

  void skip_blank_lines() {
    while (!eof()) {
      skip_spaces();
      skip_comment();
      if (peek() == '\n') {
        advance();
      } else if (peek() == '\r' && peek(1) == '\n') {
        advance();
        advance();
      } else {
        break;
      }
    }
  }

  // Whitespace, comments and newlines inside arrays.
  void skip_array_space() {
    while (!eof()) {
      skip_spaces();
      skip_comment();
      if (peek() == '\n' || peek() == '\r') {
        advance();
      } else {
        break;
      }
    }
  }

  void expect_line_end() {
    skip_spaces();
    skip_comment();
    if (eof()) return;
    if (peek() == '\r') advance();
    if (eof()) return;
    if (peek() != '\n') fail(std::string("unexpected character '") + peek() + "'");
    advance();
  }

  std::vector<std::string> parse_key() {
    std::vector<std::string> parts;
    while (true) {
      skip_spaces();
      if (peek() == '"') {
        parts.push_back(parse_basic_string());
      } else if (peek() == '\'') {
        parts.push_back(parse_literal_string());
      } else {
        const std::size_t start = pos_;
        while (!eof() && is_bare_key_char(peek())) advance();
        if (pos_ == start) fail("expected a key");
        parts.emplace_back(text_.substr(start, pos_ - start));
      }
      skip_spaces();
      if (peek() != '.') break;
      advance();
    }
    return parts;
  }

  // Resolves a dotted path for a table header. Arrays of tables resolve to
  // their most recent element, so [a.b] after [[a]] extends the last a.
  json* descend(json& root, const std::vector<std::string>& path, std::size_t count) {
    json* node = &root;
    for (std::size_t i = 0; i < count; ++i) {
      json& child = (*node)[path[i]];
      if (child.is_null()) child = json::object();
      if (child.is_array()) {
        if (child.empty() || !child.back().is_object()) fail("key '" + path[i] + "' is not a table");
        node = &child.back();
      } else if (child.is_object()) {
        node = &child;
      } else {
        fail("key '" + path[i] + "' is not a table");
      }
    }
    return node;
  }

  json* parse_table_header(json& root) {
    advance();  // '['
    const bool array_of_tables = peek() == '[';
    if (array_of_tables) advance();
    const auto path = parse_key();
    if (peek() != ']') fail("unterminated table header");
    advance();
    if (array_of_tables) {
      if (peek() != ']') fail("unterminated array-of-tables header");
      advance();
    }
    json* parent = descend(root, path, path.size() - 1);
    json& target = (*parent)[path.back()];
    if (array_of_tables) {
      if (target.is_null()) target = json::array();
      if (!target.is_array()) fail("key '" + path.back() + "' is not an array of tables");
      target.push_back(json::object());
      return &target.back();
    }
    if (target.is_null()) target = json::object();
    if (target.is_array() && !target.empty() && target.back().is_object()) return &target.back();
    if (!target.is_object()) fail("key '" + path.back() + "' redefined as a table");
    return &target;
  }

  void parse_key_value(json& table) {
    const auto path = parse_key();
    if (peek() != '=') fail("expected '=' after key");
    advance();
    skip_spaces();
    json value = parse_value();
    json* node = &table;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      json& child = (*node)[path[i]];
      if (child.is_null()) child = json::object();
      if (!child.is_object()) fail("dotted key '" + path[i] + "' is not a table");
      node = &child;
    }
    if (node->contains(path.back())) fail("duplicate key '" + path.back() + "'");
    (*node)[path.back()] = std::move(value);
  }

  json parse_value() {
    const char c = peek();
    if (c == '"') {
      return starts_with("\"\"\"") ? json(parse_multiline_basic()) : json(parse_basic_string());
    }
    if (c == '\'') {
      return starts_with("'''") ? json(parse_multiline_literal()) : json(parse_literal_string());
    }
    if (c == '[') return parse_array();
    if (c == '{') return parse_inline_table();
    if (starts_with("true")) {
      pos_ += 4;
      return true;
    }
    if (starts_with("false")) {
      pos_ += 5;
      return false;
    }
    return parse_scalar();
  }

  std::uint32_t parse_hex_digits(int count) {
    std::uint32_t cp = 0;
    for (int i = 0; i < count; ++i) {
      const char h = peek();
      if (!std::isxdigit(static_cast<unsigned char>(h))) fail("bad unicode escape");
      advance();
      cp = cp * 16 + static_cast<std::uint32_t>(
                         std::isdigit(static_cast<unsigned char>(h)) ? h - '0'
                                                                     : (std::tolower(h) - 'a' + 10));
    }
    return cp;
  }

  void parse_escape(std::string& out) {
    const char e = advance();
    switch (e) {
      case 'b': out.push_back('\b'); break;
      case 't': out.push_back('\t'); break;
      case 'n': out.push_back('\n'); break;
      case 'f': out.push_back('\f'); break;
      case 'r': out.push_back('\r'); break;
      case '"': out.push_back('"'); break;
      case '\\': out.push_back('\\'); break;
      case 'u': append_utf8(out, parse_hex_digits(4)); break;
      case 'U': append_utf8(out, parse_hex_digits(8)); break;
      default: fail(std::string("invalid escape \\") + e);
    }
  }

  std::string parse_basic_string() {
    advance();  // '"'
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      const char c = advance();
      if (c == '"') return out;
      if (c == '\\') {
        parse_escape(out);
      } else {
        out.push_back(c);
      }
    }
  }

  std::string parse_literal_string() {
    advance();  // '\''
    const std::size_t start = pos_;
    while (!eof() && peek() != '\'' && peek() != '\n') advance();
    if (peek() != '\'') fail("unterminated literal string");
    std::string out(text_.substr(start, pos_ - start));
    advance();
    return out;
  }

  void trim_leading_newline() {
    if (peek() == '\n') {
      advance();
    } else if (peek() == '\r' && peek(1) == '\n') {
      advance();
      advance();
    }
  }

  std::string parse_multiline_basic() {
    pos_ += 3;
    trim_leading_newline();
    std::string out;
    while (true) {
      if (eof()) fail("unterminated multi-line string");
      if (starts_with("\"\"\"")) {
        pos_ += 3;
        // Up to two quotes may directly precede the closing delimiter.
        while (peek() == '"') {
          out.push_back('"');
          advance();
        }
        return out;
      }
      const char c = advance();
      if (c != '\\') {
        out.push_back(c);
        continue;
      }
      // Line-ending backslash swallows the newline and following whitespace.
      std::size_t look = pos_;
      while (look < text_.size() && (text_[look] == ' ' || text_[look] == '\t')) ++look;
      if (look < text_.size() && (text_[look] == '\n' || text_[look] == '\r')) {
        while (!eof() && std::isspace(static_cast<unsigned char>(peek()))) advance();
      } else {
        parse_escape(out);
      }
    }
  }

  std::string parse_multiline_literal() {
    pos_ += 3;
    trim_leading_newline();
    const std::size_t start = pos_;
    while (!eof() && !starts_with("'''")) advance();
    if (eof()) fail("unterminated multi-line literal string");
    std::size_t end = pos_;
    pos_ += 3;
    while (peek() == '\'') {
      advance();
      ++end;
    }
    return std::string(text_.substr(start, end - start));
  }

  json parse_array() {
    advance();  // '['
    json out = json::array();
    while (true) {
      skip_array_space();
      if (peek() == ']') {
        advance();
        return out;
      }
      out.push_back(parse_value());
      skip_array_space();
      if (peek() == ',') {
        advance();
      } else if (peek() != ']') {
        fail("expected ',' or ']' in array");
      }
    }
  }

  json parse_inline_table() {
    advance();  // '{'
    json out = json::object();
    skip_spaces();
    if (peek() == '}') {
      advance();
      return out;
    }
    while (true) {
      parse_key_value(out);
      skip_spaces();
      if (peek() == ',') {
        advance();
        continue;
      }
      if (peek() == '}') {
        advance();
        return out;
      }
      fail("expected ',' or '}' in inline table");
    }
  }

  json parse_scalar() {
    const std::size_t start = pos_;
    while (!eof()) {
      const char c = peek();
      if (c == ',' || c == ']' || c == '}' || c == '\n' || c == '\r' || c == '#') break;
      // Date-times may contain one space between date and time.
      if ((c == ' ' || c == '\t') &&
          !(pos_ - start == 10 && std::isdigit(static_cast<unsigned char>(peek(1))))) {
        break;
      }
      advance();
    }
    std::string token(text_.substr(start, pos_ - start));
    if (token.empty()) fail("expected a value");
    std::string digits;
    for (char c : token) {
      if (c != '_') digits.push_back(c);
    }
    if (digits == "inf" || digits == "+inf") return std::numeric_limits<double>::infinity();
    if (digits == "-inf") return -std::numeric_limits<double>::infinity();
    if (digits == "nan" || digits == "+nan" || digits == "-nan") {
      return std::numeric_limits<double>::quiet_NaN();
    }
    // Date and time values keep their textual form.
    if (token.size() >= 8 && (token[4] == '-' || token[2] == ':')) return token;
    try {
      std::size_t used = 0;
      if (digits.rfind("0x", 0) == 0 || digits.rfind("0o", 0) == 0 || digits.rfind("0b", 0) == 0) {
        const int base = digits[1] == 'x' ? 16 : digits[1] == 'o' ? 8 : 2;
        const auto v = std::stoll(digits.substr(2), &used, base);
        if (used + 2 != digits.size()) fail("invalid integer '" + token + "'");
        return v;
      }
      const bool is_float = digits.find_first_of(".eE") != std::string::npos;
      if (is_float) {
        const double v = std::stod(digits, &used);
        if (used != digits.size()) fail("invalid float '" + token + "'");
        return v;
      }
      const auto v = std::stoll(digits, &used, 10);
      if (used != digits.size()) fail("invalid integer '" + token + "'");
      return v;
    } catch (const std::logic_error&) {
      fail("invalid value '" + token + "'");
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

}  // namespace

json parse_toml(std::string_view document) { return Parser(document).parse(); }

}  // namespace unirule::detail
