// Copyright 2026 The Shapscan Authors
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

#include <string>
#include <string_view>
#include <vector>

namespace shapscan::csv {

/// Header plus string cells. Quoted fields follow RFC 4180: fields may be
/// wrapped in double quotes, a doubled quote escapes one quote, and quoted
/// fields may contain commas and line breaks.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column, or -1.
  long column(std::string_view name) const;
};

/// Throws ParameterError on an unterminated quote or an empty input.
Table parse(std::string_view text);
Table read_file(const std::string& path);

/// Quotes a field when it contains a comma, quote or line break.
std::string escape(std::string_view field);

}  // namespace shapscan::csv
