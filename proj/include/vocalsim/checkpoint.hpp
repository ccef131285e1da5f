// Copyright 2026 The vocalsim Authors
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

#ifndef VOCALSIM_CHECKPOINT_HPP_
#define VOCALSIM_CHECKPOINT_HPP_

#include <filesystem>
#include <optional>

#include "json.hpp"
#include "vocalsim/training.hpp"

namespace vocalsim {

// Checkpoint container, little-endian:
//   8 bytes   magic "VSIMCKPT"
//   u32       format version (1)
//   u64       header length N
//   N bytes   UTF-8 JSON header: encoder config, tensor table
//             [{name, shape, offset, count}], training scalars, metadata
//   payload   raw float64 arrays at the offsets named in the table
// Parameters are stored under their ModelState names; Adam moments under
// "adam.m.<name>" / "adam.v.<name>".

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TrainingState state;
  bool has_optimizer = true;
  nlohmann::json metadata = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Model-only checkpoint (no optimizer moments).
void save_model(const std::filesystem::path& path, const ModelState& model,
                const nlohmann::json& metadata = nlohmann::json::object());

/// FNV-1a over the file bytes.
std::string file_hash(const std::filesystem::path& path);

}  // namespace vocalsim

#endif  // VOCALSIM_CHECKPOINT_HPP_
