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

#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace cpl {

using Json = nlohmann::ordered_json;

// Study configs are TOML; this is a deliberately small reader for the subset
// those files use, parsed into a JSON document:
//
//   - [table] and [dotted.table] headers (redefinition rejected),
//   - bare or quoted keys, `key = value` one pair per line,
//   - strings ("..." with \" \\ \b \t \n \f \r \uXXXX escapes, '...' literal),
//   - integers (sign, `_` separators), floats (decimal/exponent), booleans,
//   - arrays, possibly spanning lines, trailing comma allowed,
//   - `#` comments.
//
// Dates, inline tables, arrays-of-tables, and multi-line strings are outside
// the subset and rejected with a diagnostic.  All errors carry the 1-based
// line they were detected on.

struct TomlError : std::runtime_error {
  int line;
  TomlError(int line_no, const std::string& message)
      : std::runtime_error("line " + std::to_string(line_no) + ": " + message),
        line(line_no) {}
};

Json parse_toml(const std::string& text);
Json parse_toml_file(const std::filesystem::path& path);

}  // namespace cpl
