/* Copyright 2026 The fedstyle Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fedstyle/federation.hpp"
#include "fedstyle/synthdata.hpp"

namespace fedstyle {

inline constexpr int kSchemaVersion = 1;

// Ablation switches, one per component of the method.
struct Ablation {
  bool fda_pretrain = true;
  bool self_training = true;
  bool kd = true;
  bool swat = true;
  bool cluster_aggr = true;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  WorldSpec world;
  std::int64_t world_seed = -1;  // < 0: each run uses its own seed for the world
  FederationConfig federation;
  Ablation ablation;
  std::string out_dir = "runs/default";
  std::vector<std::uint64_t> seeds = {0};

  // Federation settings with the ablation switches applied, for one seed.
  FederationConfig effective_federation(std::uint64_t seed) const;
  std::uint64_t world_seed_for(std::uint64_t seed) const;
};

// Parses the key-value format:
//   # comment
//   schema_version = 1
//   [section]
//   key = 12 | 0.5 | true | "text" | [1, 2, 3]
// Keys are section.key; unknown keys and a missing or unsupported
// schema_version are errors (FormatError).
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);

// Canonical text of every key, in a fixed order. parse_config(to_text(c))
// reproduces c exactly.
std::string to_text(const ExperimentConfig& cfg);

// Sets one key from its textual value. `key` may be the full dotted name or
// an unambiguous suffix ("cluster_groups" for "ablation.cluster_groups").
void set_value(ExperimentConfig& cfg, std::string_view key, std::string_view value);
std::string get_value(const ExperimentConfig& cfg, std::string_view key);
std::string resolve_key(std::string_view key);
std::vector<std::string> config_keys();

void validate(const ExperimentConfig& cfg);

}  // namespace fedstyle
