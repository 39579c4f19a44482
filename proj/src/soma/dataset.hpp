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
#include <vector>

#include <json.hpp>

#include "soma/types.hpp"

namespace soma::dataset {

/// Writes one sequence: manifest.json, splats0.bin, and per-frame images
/// (PNG) / depth (raw float32 + JSON sidecar). Round-trips bit-exactly
/// through load_sequence for data produced by the pipeline.
void save_sequence(const SceneSequence& seq, const std::string& dir);

SceneSequence load_sequence(const std::string& dir);

/// Multi-sequence dataset directory: one subdirectory per sequence plus a
/// dataset.json index with the train/test split.
struct DatasetIndex {
  std::vector<std::string> sequences;  // relative subdirectory names
  std::vector<int> train;              // indices into `sequences`
  std::vector<int> test;
  nlohmann::json meta;                 // task, object, generator info
};

void save_index(const DatasetIndex& index, const std::string& dir);
DatasetIndex load_index(const std::string& dir);

}  // namespace soma::dataset
