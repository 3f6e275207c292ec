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

#include "fedstyle/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "binary_io.hpp"
#include "fedstyle/log.hpp"
#include "json.hpp"

namespace fedstyle {
namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

double mean_defined(const std::vector<double>& v) {
  double s = 0.0;
  int n = 0;
  for (double x : v) {
    if (std::isnan(x)) continue;
    s += x;
    ++n;
  }
  return n ? s / n : std::nan("");
}

double pop_std(const std::vector<double>& v) {
  const double m = mean_defined(v);
  double s = 0.0;
  int n = 0;
  for (double x : v) {
    if (std::isnan(x)) continue;
    s += (x - m) * (x - m);
    ++n;
  }
  return n ? std::sqrt(s / n) : std::nan("");
}

ojson num(double v) { return std::isnan(v) ? ojson(nullptr) : ojson(v); }

ojson nums(const std::vector<double>& v) {
  ojson a = ojson::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw FormatError("failed to write " + path.string());
}

ojson config_json(const ExperimentConfig& cfg) {
  ojson j = ojson::object();
  for (const auto& key : config_keys()) {
    if (key == "run.out") continue;
    const auto dot = key.find('.');
    const auto value = ojson::parse(get_value(cfg, key));
    if (dot == std::string::npos) {
      j[key] = value;
    } else {
      j[key.substr(0, dot)][key.substr(dot + 1)] = value;
    }
  }
  return j;
}

void write_checkpoint_file(const fs::path& path, const ParamSet& p) {
  std::ofstream out(path, std::ios::binary);
  write_checkpoint(out, p, nullptr);
}

void write_run_artifacts(const fs::path& dir, const RunResult& r) {
  ojson part = ojson::parse(partition_to_json(r.partition, r.selection));
  part["cluster_accuracy"] = r.cluster_accuracy;
  part["selection_trace"] = ojson::array();
  for (const auto& t : r.selection_trace) {
    part["selection_trace"].push_back(
        {{"h", t.h}, {"sum_intra", t.sum_intra}, {"silhouette", t.silhouette}});
  }
  write_text(dir / "partition.json", part.dump(2) + "\n");
  write_styles(dir / "styles.bin", r.styles);
  fs::create_directories(dir / "checkpoints");
  write_checkpoint_file(dir / "checkpoints" / "pretrained.ckpt", r.pretrained);
  write_checkpoint_file(dir / "checkpoints" / "global.ckpt", r.models.phi);
  for (int c = 0; c < r.models.num_clusters(); ++c) {
    if (!r.models.theta[c].present().empty()) {
      write_checkpoint_file(dir / "checkpoints" / ("cluster-" + std::to_string(c) + ".ckpt"),
                            r.models.theta[c]);
    }
    write_checkpoint_file(dir / "checkpoints" / ("teacher-" + std::to_string(c) + ".ckpt"),
                          r.models.teachers[c]);
  }
}

}  // namespace

RunSummary summarize(const std::vector<RoundRecord>& records, std::uint64_t seed) {
  require(!records.empty(), "summarize needs at least one round record");
  RunSummary s;
  s.seed = seed;
  s.rounds = records.back().round;
  s.last_rounds = s.rounds == 0 ? 1 : std::max(1, (s.rounds + 9) / 10);
  const int first = s.rounds == 0 ? 0 : s.rounds - s.last_rounds + 1;
  std::vector<double> miou;
  std::vector<std::vector<double>> per_class;
  for (const auto& r : records) {
    if (r.round < first) continue;
    miou.push_back(r.miou);
    if (per_class.size() < r.per_class_iou.size()) per_class.resize(r.per_class_iou.size());
    for (std::size_t q = 0; q < r.per_class_iou.size(); ++q) per_class[q].push_back(r.per_class_iou[q]);
  }
  s.miou = mean_defined(miou);
  s.miou_std_rounds = pop_std(miou);
  for (const auto& v : per_class) s.per_class_iou.push_back(mean_defined(v));
  return s;
}

ExperimentSummary combine(std::vector<RunSummary> runs) {
  require(!runs.empty(), "combine needs at least one run");
  ExperimentSummary s;
  std::vector<double> means, stds;
  std::vector<std::vector<double>> per_class;
  for (const auto& r : runs) {
    means.push_back(r.miou);
    stds.push_back(r.miou_std_rounds);
    if (per_class.size() < r.per_class_iou.size()) per_class.resize(r.per_class_iou.size());
    for (std::size_t q = 0; q < r.per_class_iou.size(); ++q) per_class[q].push_back(r.per_class_iou[q]);
  }
  s.miou_mean = mean_defined(means);
  s.miou_std_seeds = pop_std(means);
  s.miou_std_rounds_mean = mean_defined(stds);
  for (const auto& v : per_class) s.per_class_iou.push_back(mean_defined(v));
  s.runs = std::move(runs);
  return s;
}

ExperimentConfig config_from_summary(std::string_view summary_json) {
  ojson j;
  try {
    j = ojson::parse(summary_json);
  } catch (const ojson::exception& e) {
    throw FormatError(std::string("summary is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("config") || !j["config"].is_object()) {
    throw FormatError("summary has no config object");
  }
  std::string text;
  for (const auto& [key, value] : j["config"].items()) {
    if (!value.is_object()) text += key + " = " + value.dump() + "\n";
  }
  for (const auto& [section, body] : j["config"].items()) {
    if (!body.is_object()) continue;
    text += "[" + section + "]\n";
    for (const auto& [key, value] : body.items()) text += key + " = " + value.dump() + "\n";
  }
  return parse_config(text);
}

std::string summary_to_json(const ExperimentSummary& s, const ExperimentConfig& cfg) {
  ojson j;
  j["schema_version"] = kSchemaVersion;
  j["miou_mean"] = num(s.miou_mean);
  j["miou_std_over_seeds"] = num(s.miou_std_seeds);
  j["miou_std_over_last_rounds"] = num(s.miou_std_rounds_mean);
  j["per_class_iou"] = nums(s.per_class_iou);
  j["runs"] = ojson::array();
  for (const auto& r : s.runs) {
    j["runs"].push_back({{"seed", r.seed},
                         {"rounds", r.rounds},
                         {"last_rounds", r.last_rounds},
                         {"miou", num(r.miou)},
                         {"miou_std_over_last_rounds", num(r.miou_std_rounds)},
                         {"per_class_iou", nums(r.per_class_iou)}});
  }
  j["config"] = config_json(cfg);
  return j.dump(2) + "\n";
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, bool keep_runs) {
  validate(cfg);
  const fs::path root(cfg.out_dir);
  fs::create_directories(root);
  write_text(root / "config.toml", "# effective configuration\n" + to_text(cfg));

  ExperimentResult result;
  std::vector<RunSummary> summaries;
  for (auto seed : cfg.seeds) {
    const fs::path dir = root / ("seed-" + std::to_string(seed));
    fs::create_directories(dir);
    std::ofstream rounds(dir / "rounds.jsonl", std::ios::binary | std::ios::trunc);
    try {
      World world = gen_world(cfg.world, cfg.world_seed_for(seed));
      RunHooks hooks;
      hooks.on_round = [&](const RoundRecord& r) { rounds << to_json_line(r) << '\n' << std::flush; };
      RunResult run_result = run(cfg.effective_federation(seed), std::move(world), hooks);
      write_run_artifacts(dir, run_result);
      summaries.push_back(summarize(run_result.records, seed));
      log_info("seed " + std::to_string(seed) + ": mIoU " + std::to_string(summaries.back().miou));
      if (keep_runs) result.runs.push_back(std::move(run_result));
    } catch (const std::exception& e) {
      result.ok = false;
      result.error = "seed " + std::to_string(seed) + ": " + e.what();
      ojson err = {{"seed", seed}, {"error", e.what()}};
      write_text(dir / "error.json", err.dump(2) + "\n");
      break;
    }
  }
  if (!summaries.empty()) {
    result.summary = combine(std::move(summaries));
    if (result.ok) write_text(root / "summary.json", summary_to_json(result.summary, cfg));
  }
  return result;
}

std::pair<std::string, std::vector<std::string>> parse_ablation(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
    throw FormatError("ablation must look like KEY=V1,V2,... (got '" + spec + "')");
  }
  const std::string key = resolve_key(spec.substr(0, eq));
  std::vector<std::string> values;
  std::stringstream ss(spec.substr(eq + 1));
  for (std::string v; std::getline(ss, v, ',');) {
    if (!v.empty()) values.push_back(v);
  }
  if (values.empty()) throw FormatError("ablation '" + spec + "' lists no values");
  return {key, values};
}

std::vector<ExperimentConfig> expand_ablations(
    const ExperimentConfig& base,
    const std::vector<std::pair<std::string, std::vector<std::string>>>& axes) {
  std::vector<ExperimentConfig> out = {base};
  for (const auto& [key, values] : axes) {
    std::vector<ExperimentConfig> next;
    for (const auto& cfg : out) {
      for (const auto& v : values) {
        ExperimentConfig c = cfg;
        set_value(c, key, v);
        const auto dot = key.rfind('.');
        c.out_dir = (fs::path(cfg.out_dir) / (key.substr(dot + 1) + "=" + v)).string();
        next.push_back(std::move(c));
      }
    }
    out = std::move(next);
  }
  return out;
}

std::vector<RoundRecord> read_rounds(const fs::path& jsonl) {
  std::ifstream in(jsonl);
  if (!in) throw FormatError("cannot open " + jsonl.string());
  std::vector<RoundRecord> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(parse_round_record(line));
  }
  return out;
}

std::vector<CompareRow> compare(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  require(run_dirs.size() >= 2, "compare needs at least two runs");
  std::vector<CompareRow> rows;
  std::vector<std::map<int, std::vector<double>>> curves;
  int max_round = 0;
  for (const auto& dir : run_dirs) {
    std::ifstream in(dir / "summary.json");
    if (!in) throw FormatError("missing summary.json in " + dir.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("malformed summary.json in " + dir.string() + ": " + e.what());
    }
    auto get = [&](const char* k) {
      return j.at(k).is_null() ? std::nan("") : j.at(k).get<double>();
    };
    CompareRow row;
    row.run = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
    row.miou_mean = get("miou_mean");
    row.miou_std_seeds = get("miou_std_over_seeds");
    row.miou_std_rounds = get("miou_std_over_last_rounds");
    rows.push_back(row);

    std::map<int, std::vector<double>> curve;
    for (const auto& r : j.at("runs")) {
      const auto seed = r.at("seed").get<std::uint64_t>();
      for (const auto& rec : read_rounds(dir / ("seed-" + std::to_string(seed)) / "rounds.jsonl")) {
        curve[rec.round].push_back(rec.miou);
        max_round = std::max(max_round, rec.round);
      }
    }
    curves.push_back(std::move(curve));
  }
  for (auto& r : rows) r.delta_vs_first = r.miou_mean - rows.front().miou_mean;

  fs::create_directories(out_dir);
  std::ostringstream table;
  table << std::setprecision(17);
  table << "run,miou_mean,miou_std_over_seeds,miou_std_over_last_rounds,delta_vs_first\n";
  for (const auto& r : rows) {
    table << r.run << ',' << r.miou_mean << ',' << r.miou_std_seeds << ',' << r.miou_std_rounds
          << ',' << r.delta_vs_first << '\n';
  }
  write_text(out_dir / "compare.csv", table.str());

  std::ostringstream cv;
  cv << std::setprecision(17) << "round";
  for (const auto& r : rows) cv << ',' << r.run;
  cv << '\n';
  for (int t = 0; t <= max_round; ++t) {
    cv << t;
    for (const auto& curve : curves) {
      cv << ',';
      auto it = curve.find(t);
      if (it != curve.end()) cv << mean_defined(it->second);
    }
    cv << '\n';
  }
  write_text(out_dir / "curves.csv", cv.str());
  return rows;
}

void write_styles(const fs::path& path, const std::vector<StyleUpload>& styles) {
  std::ofstream out(path, std::ios::binary);
  for (const auto& s : styles) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(s.client_id));
    write_style(out, s.mean_style);
  }
  if (!out) throw FormatError("failed to write " + path.string());
}

std::vector<StyleUpload> read_styles(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<StyleUpload> out;
  while (in.peek() != std::char_traits<char>::eof()) {
    StyleUpload s;
    s.client_id = static_cast<int>(detail::get<std::uint32_t>(in, "client id"));
    s.mean_style = read_style(in);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace fedstyle
