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

#ifndef UNIRULE_SRC_TOML_READER_HPP
#define UNIRULE_SRC_TOML_READER_HPP

#include <string_view>

#include "unirule/util.hpp"

namespace unirule::detail {

/// Reads a TOML 1.0 document into a JSON tree. Date-times are kept as their
/// source text. Throws Error(MalformedDocument) with a line number on any
/// syntax error.
json parse_toml(std::string_view document);

}  // namespace unirule::detail

#endif  // UNIRULE_SRC_TOML_READER_HPP
