// Copyright 2026 The CPL Authors.
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

#include "cpl/toml.hpp"

#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

namespace cpl {
namespace {

bool is_bare_key_char(char ch) {
  return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-';
}

// Character scanner with line tracking.  Newlines are significant at
// statement level (one key/value pair per line) but transparent inside
// arrays, so the skipping helpers come in two flavours.
class Scanner {
 public:
  explicit Scanner(const std::string& text) : text_(text) {}

  bool eof() const { return pos_ >= text_.size(); }
  int line() const { return line_; }
  char peek() const { return text_[pos_]; }

  char advance() {
    char ch = text_[pos_++];
    if (ch == '\n') ++line_;
    return ch;
  }

  // Spaces, tabs, and carriage returns; never newlines or comments.
  void skip_blanks() {
    while (!eof() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) {
      advance();
    }
  }

  // Everything between values inside an array: blanks, comments, newlines.
  void skip_filler() {
    while (!eof()) {
      skip_blanks();
      if (eof()) return;
      if (peek() == '#') {
        while (!eof() && peek() != '\n') advance();
      } else if (peek() == '\n') {
        advance();
      } else {
        return;
      }
    }
  }

  // A line must end here (optionally after blanks and a comment).
  void expect_line_end() {
    skip_blanks();
    if (eof()) return;
    if (peek() == '#') {
      while (!eof() && peek() != '\n') advance();
    }
    if (eof()) return;
    if (peek() != '\n') {
      throw TomlError(line_, std::string("unexpected character '") + peek() +
                                 "' after value");
    }
    advance();
  }

 private:
  const std::string& text_;
  size_t pos_ = 0;
  int line_ = 1;
};

void append_utf8(std::string& out, uint32_t cp, int line) {
  if (cp <= 0x7F) {
    out.push_back(static_cast<char>(cp));
  } else if (cp <= 0x7FF) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp <= 0xFFFF) {
    if (cp >= 0xD800 && cp <= 0xDFFF) {
      throw TomlError(line, "\\u escape encodes a surrogate code point");
    }
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

class Parser {
 public:
  explicit Parser(const std::string& text) : sc_(text) {}

  Json parse() {
    Json root = Json::object();
    current_ = {};
    while (true) {
      sc_.skip_filler();
      if (sc_.eof()) break;
      if (sc_.peek() == '[') {
        parse_table_header(root);
      } else {
        parse_key_value(root);
      }
    }
    return root;
  }

 private:
  Scanner sc_;
  std::vector<std::string> current_;        // active table path
  std::set<std::string> defined_headers_;   // explicit [a.b] definitions
  std::set<std::string> defined_values_;    // full key paths holding a value

  static std::string join(const std::vector<std::string>& path) {
    std::string out;
    for (const auto& part : path) {
      if (!out.empty()) out += '.';
      out += part;
    }
    return out;
  }

  std::string parse_key() {
    if (sc_.eof()) throw TomlError(sc_.line(), "expected a key");
    if (sc_.peek() == '"' || sc_.peek() == '\'') {
      Json s = parse_string();
      return s.get<std::string>();
    }
    std::string key;
    while (!sc_.eof() && is_bare_key_char(sc_.peek())) key += sc_.advance();
    if (key.empty()) {
      throw TomlError(sc_.line(), std::string("expected a key, found '") +
                                      sc_.peek() + "'");
    }
    return key;
  }

  void parse_table_header(Json& root) {
    const int line = sc_.line();
    sc_.advance();  // '['
    if (!sc_.eof() && sc_.peek() == '[') {
      throw TomlError(line, "arrays of tables ([[...]]) are not supported");
    }
    std::vector<std::string> path;
    while (true) {
      sc_.skip_blanks();
      path.push_back(parse_key());
      sc_.skip_blanks();
      if (sc_.eof()) throw TomlError(line, "unterminated table header");
      char ch = sc_.advance();
      if (ch == ']') break;
      if (ch != '.') {
        throw TomlError(line, std::string("expected '.' or ']' in table "
                                          "header, found '") +
                                  ch + "'");
      }
    }
    sc_.expect_line_end();

    const std::string joined = join(path);
    if (!defined_headers_.insert(joined).second) {
      throw TomlError(line, "table [" + joined + "] is defined twice");
    }
    // Descend, creating intermediate tables; a path segment that already
    // holds a value cannot become a table.
    Json* node = &root;
    std::string sofar;
    for (const auto& part : path) {
      sofar = sofar.empty() ? part : sofar + "." + part;
      if (defined_values_.count(sofar)) {
        throw TomlError(line, "cannot open table [" + joined + "]: '" +
                                  sofar + "' already holds a value");
      }
      if (!node->contains(part)) (*node)[part] = Json::object();
      node = &(*node)[part];
    }
    current_ = path;
  }

  void parse_key_value(Json& root) {
    const int line = sc_.line();
    std::string key = parse_key();
    sc_.skip_blanks();
    if (sc_.eof() || sc_.peek() != '=') {
      throw TomlError(line, "expected '=' after key '" + key + "'");
    }
    sc_.advance();
    sc_.skip_blanks();
    Json value = parse_value();
    sc_.expect_line_end();

    Json* table = &root;
    for (const auto& part : current_) table = &(*table)[part];
    if (table->contains(key)) {
      throw TomlError(line, "key '" + key + "' is defined twice in [" +
                                join(current_) + "]");
    }
    (*table)[key] = std::move(value);
    std::vector<std::string> full = current_;
    full.push_back(key);
    defined_values_.insert(join(full));
  }

  Json parse_value() {
    if (sc_.eof()) throw TomlError(sc_.line(), "expected a value");
    const char ch = sc_.peek();
    if (ch == '"' || ch == '\'') return parse_string();
    if (ch == '[') return parse_array();
    if (ch == '{') {
      throw TomlError(sc_.line(), "inline tables ({...}) are not supported");
    }
    return parse_scalar_word();
  }

  Json parse_string() {
    const int line = sc_.line();
    const char quote = sc_.advance();
    std::string out;
    // """ / ''' would start a multi-line string: an empty string followed by
    // a third quote.
    if (!sc_.eof() && sc_.peek() == quote) {
      sc_.advance();
      if (!sc_.eof() && sc_.peek() == quote) {
        throw TomlError(line, "multi-line strings are not supported");
      }
      return Json("");
    }
    while (true) {
      if (sc_.eof()) throw TomlError(line, "unterminated string");
      char c = sc_.advance();
      if (c == '\n') throw TomlError(line, "unterminated string");
      if (c == quote) break;
      if (quote == '\'' || c != '\\') {
        out += c;
        continue;
      }
      if (sc_.eof()) throw TomlError(line, "unterminated string");
      char esc = sc_.advance();
      switch (esc) {
        case 'b': out += '\b'; break;
        case 't': out += '\t'; break;
        case 'n': out += '\n'; break;
        case 'f': out += '\f'; break;
        case 'r': out += '\r'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'u': {
          uint32_t cp = 0;
          for (int i = 0; i < 4; ++i) {
            if (sc_.eof()) throw TomlError(line, "truncated \\u escape");
            char h = sc_.advance();
            cp <<= 4;
            if (h >= '0' && h <= '9') cp |= static_cast<uint32_t>(h - '0');
            else if (h >= 'a' && h <= 'f') cp |= static_cast<uint32_t>(h - 'a' + 10);
            else if (h >= 'A' && h <= 'F') cp |= static_cast<uint32_t>(h - 'A' + 10);
            else throw TomlError(line, "bad hex digit in \\u escape");
          }
          append_utf8(out, cp, line);
          break;
        }
        default:
          throw TomlError(line,
                          std::string("unknown escape '\\") + esc + "'");
      }
    }
    return Json(std::move(out));
  }

  Json parse_array() {
    const int line = sc_.line();
    sc_.advance();  // '['
    Json arr = Json::array();
    while (true) {
      sc_.skip_filler();
      if (sc_.eof()) throw TomlError(line, "unterminated array");
      if (sc_.peek() == ']') {
        sc_.advance();
        return arr;
      }
      arr.push_back(parse_value());
      sc_.skip_filler();
      if (sc_.eof()) throw TomlError(line, "unterminated array");
      if (sc_.peek() == ',') {
        sc_.advance();
        continue;
      }
      if (sc_.peek() == ']') {
        sc_.advance();
        return arr;
      }
      throw TomlError(sc_.line(), std::string("expected ',' or ']' in array,"
                                              " found '") +
                                      sc_.peek() + "'");
    }
  }

  // Booleans and numbers (the only unquoted values in the subset).
  Json parse_scalar_word() {
    const int line = sc_.line();
    std::string word;
    while (!sc_.eof()) {
      char c = sc_.peek();
      if (std::isspace(static_cast<unsigned char>(c)) || c == ',' ||
          c == ']' || c == '#') {
        break;
      }
      word += sc_.advance();
    }
    if (word.empty()) throw TomlError(line, "expected a value");
    if (word == "true") return Json(true);
    if (word == "false") return Json(false);
    return parse_number(word, line);
  }

  static Json parse_number(const std::string& word, int line) {
    // Underscores must sit between digits.
    std::string digits;
    for (size_t i = 0; i < word.size(); ++i) {
      if (word[i] != '_') {
        digits += word[i];
        continue;
      }
      const bool digit_before =
          i > 0 && std::isdigit(static_cast<unsigned char>(word[i - 1]));
      const bool digit_after =
          i + 1 < word.size() &&
          std::isdigit(static_cast<unsigned char>(word[i + 1]));
      if (!digit_before || !digit_after) {
        throw TomlError(line, "misplaced '_' in number '" + word + "'");
      }
    }
    if (!digits.empty() && digits.front() == '+') digits.erase(0, 1);
    const bool is_float = digits.find_first_of(".eE") != std::string::npos;
    const char* begin = digits.data();
    const char* end = begin + digits.size();
    if (!is_float) {
      int64_t value = 0;
      auto [ptr, ec] = std::from_chars(begin, end, value);
      if (ec == std::errc() && ptr == end) return Json(value);
    } else {
      double value = 0;
      auto [ptr, ec] = std::from_chars(begin, end, value);
      if (ec == std::errc() && ptr == end) return Json(value);
    }
    throw TomlError(line, "cannot parse '" + word + "' as a value");
  }
};

}  // namespace

Json parse_toml(const std::string& text) { return Parser(text).parse(); }

Json parse_toml_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open config file: " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_toml(buf.str());
}

}  // namespace cpl
