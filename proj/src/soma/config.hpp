// Copyright 2026 The soma Authors
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

#include <stdexcept>
#include <string>

#include <json.hpp>

namespace soma {

/// Errors that should surface as exit code 2 (usage / configuration).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace config {

using json = nlohmann::json;

/// Built-in defaults for every module section.
json defaults();

/// Deep-merge `overrides` over `base` (objects merged recursively, other
/// values replaced). Unknown top-level sections are rejected.
json merge(const json& base, const json& overrides);

/// defaults() merged with the given overrides (string may be empty), then the
/// SOMA_SEED environment variable applied on top of ["seed"] when set.
json resolve(const std::string& overrides_json);
json resolve(const json& overrides);

json load_file(const std::string& path);
void write_file(const std::string& path, const json& cfg);

/// FNV-1a hash of the canonical dump, as a hex string.
std::string hash(const json& cfg);

}  // namespace config
}  // namespace soma
