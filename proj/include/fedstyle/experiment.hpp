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
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedstyle/config.hpp"
#include "fedstyle/federation.hpp"

namespace fedstyle {

// Statistics of one run, derived from its round records alone.
struct RunSummary {
  std::uint64_t seed = 0;
  int rounds = 0;
  int last_rounds = 0;          // size of the trailing window (10% of T, at least 1)
  double miou = 0.0;            // mean over the trailing window
  double miou_std_rounds = 0.0; // population std over the trailing window
  std::vector<double> per_class_iou;
};

// Trailing window: rounds T - ceil(T/10) + 1 .. T, or round 0 when T = 0.
RunSummary summarize(const std::vector<RoundRecord>& records, std::uint64_t seed);

struct ExperimentSummary {
  std::vector<RunSummary> runs;
  double miou_mean = 0.0;
  double miou_std_seeds = 0.0;        // population std of per-seed means
  double miou_std_rounds_mean = 0.0;  // mean of per-seed trailing-window stds
  std::vector<double> per_class_iou;  // mean over seeds
};

ExperimentSummary combine(std::vector<RunSummary> runs);
std::string summary_to_json(const ExperimentSummary& s, const ExperimentConfig& cfg);

// Rebuilds the configuration echoed into a summary.json. The output
// directory is not part of the echo and keeps its default.
ExperimentConfig config_from_summary(std::string_view summary_json);

struct ExperimentResult {
  ExperimentSummary summary;
  std::vector<RunResult> runs;  // in seed order
  bool ok = true;
  std::string error;
};

// One run per seed under cfg.out_dir:
//   config.toml, summary.json,
//   seed-<s>/rounds.jsonl, partition.json, styles.bin, checkpoints/*.ckpt
// A failing seed leaves its partial artifacts plus seed-<s>/error.json.
ExperimentResult run_experiment(const ExperimentConfig& cfg, bool keep_runs = false);

// "key=v1,v2,..." -> (resolved key, values).
std::pair<std::string, std::vector<std::string>> parse_ablation(const std::string& spec);

// Cartesian product of ablation axes; each variant writes into
// <out_dir>/<key>=<value>[/<key>=<value>...].
std::vector<ExperimentConfig> expand_ablations(
    const ExperimentConfig& base,
    const std::vector<std::pair<std::string, std::vector<std::string>>>& axes);

struct CompareRow {
  std::string run;
  double miou_mean = 0.0;
  double miou_std_seeds = 0.0;
  double miou_std_rounds = 0.0;
  double delta_vs_first = 0.0;
};

// Reads each run directory's summary.json and seed-*/rounds.jsonl, writes
// compare.csv and curves.csv (per-round mIoU averaged over seeds) into
// out_dir. Needs at least two runs.
std::vector<CompareRow> compare(const std::vector<std::filesystem::path>& run_dirs,
                                const std::filesystem::path& out_dir);

std::vector<RoundRecord> read_rounds(const std::filesystem::path& jsonl);

// Styles file used by the `cluster` verb: repeated (u32 client_id, style record).
void write_styles(const std::filesystem::path& path, const std::vector<StyleUpload>& styles);
std::vector<StyleUpload> read_styles(const std::filesystem::path& path);

}  // namespace fedstyle
