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

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "soma/types.hpp"

namespace soma::container {

/// Single-file binary container: 4-byte little-endian JSON header length,
/// the JSON header, then concatenated little-endian float32 blocks in the
/// order declared by header["blocks"] = [{name, rows, cols}, ...].
struct Blob {
  nlohmann::json header;  // arbitrary metadata; "blocks" is managed here
  std::vector<std::pair<std::string, MatX>> blocks;

  const MatX& block(const std::string& name) const;
  bool has_block(const std::string& name) const;
};

void write(const std::string& path, const Blob& blob);
Blob read(const std::string& path);

/// Cast every entry to float32 and back; blobs round-trip bit-exactly once
/// their values are float32-representable.
MatX quantize_f32(const MatX& m);

}  // namespace soma::container
