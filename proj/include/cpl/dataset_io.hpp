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
#include <string>

#include "cpl/worlds.hpp"

namespace cpl {

// Datasets serialize as JSON Lines: a header object carrying the world
// config + seed, then one record per comparison:
//
//   {"id":0,"e":[...],"e_prime":[...],"c":0,"t":0,"ell":1,"z":[...],"z_prime":[...]}
//
// Records without z/z_prime are accepted on read — that is the import path
// for externally precomputed embeddings, for which ground-truth-dependent
// checks are skipped.  A first line that already looks like a record (has an
// "id") is treated as headerless import data.

std::string dataset_to_jsonl(const Dataset& d);
Dataset dataset_from_jsonl(const std::string& text);

void write_dataset_jsonl(const Dataset& d, const std::filesystem::path& path);
Dataset read_dataset_jsonl(const std::filesystem::path& path);

}  // namespace cpl
