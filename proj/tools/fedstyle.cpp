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

// Command-line front end: run, compare, gen-world, cluster.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "fedstyle/clustering.hpp"
#include "fedstyle/config.hpp"
#include "fedstyle/error.hpp"
#include "fedstyle/experiment.hpp"
#include "fedstyle/synthdata.hpp"

namespace fs = std::filesystem;
using namespace fedstyle;

namespace {

constexpr int kExitRunFailed = 1;
constexpr int kExitBadConfig = 2;

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (item.empty() || used != item.size() || item[0] == '-') {
      throw InvalidArgument("bad seed '" + item + "'");
    }
    seeds.push_back(v);
  }
  if (seeds.empty()) throw InvalidArgument("--seed needs at least one value");
  return seeds;
}

ExperimentConfig load(const std::string& config_path, const std::string& seeds,
                      const std::string& out) {
  ExperimentConfig cfg;
  if (fs::path(config_path).extension() == ".json") {
    std::ifstream in(config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    cfg = config_from_summary(ss.str());
  } else if (!config_path.empty()) {
    cfg = load_config(config_path);
  }
  if (!seeds.empty()) cfg.seeds = parse_seeds(seeds);
  if (!out.empty()) cfg.out_dir = out;
  validate(cfg);
  return cfg;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw FormatError("failed to write " + path.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated style-clustered source-free adaptation simulator"};
  app.require_subcommand(1);

  std::string config_path, seeds, out;
  std::vector<std::string> ablate;

  auto* run_cmd = app.add_subcommand("run", "Run an experiment (one run per seed)");
  run_cmd->add_option("--config", config_path, "Config file")->check(CLI::ExistingFile);
  run_cmd->add_option("--seed", seeds, "Seed list N[,N...]");
  run_cmd->add_option("--out", out, "Output directory");
  run_cmd->add_option("--ablate", ablate, "KEY=V1,V2,... (repeatable; cartesian product)");

  std::vector<std::string> run_dirs;
  std::string compare_out = ".";
  auto* cmp_cmd = app.add_subcommand("compare", "Tabulate completed runs");
  cmp_cmd->add_option("runs", run_dirs, "Run directories")->required();
  cmp_cmd->add_option("--out", compare_out, "Directory for compare.csv and curves.csv");

  auto* gen_cmd = app.add_subcommand("gen-world", "Export the synthetic corpus");
  gen_cmd->add_option("--config", config_path, "Config file")->check(CLI::ExistingFile);
  gen_cmd->add_option("--seed", seeds, "World seed");
  gen_cmd->add_option("--out", out, "Output directory")->required();

  std::string styles_path;
  auto* cl_cmd = app.add_subcommand("cluster", "Cluster client styles into partition.json");
  cl_cmd->add_option("--styles", styles_path, "Styles file (default: styles of the configured world)");
  cl_cmd->add_option("--config", config_path, "Config file")->check(CLI::ExistingFile);
  cl_cmd->add_option("--seed", seeds, "Seed");
  cl_cmd->add_option("--out", out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  ExperimentConfig cfg;
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  try {
    if (!cmp_cmd->parsed()) cfg = load(config_path, seeds, out);
    for (const auto& a : ablate) axes.push_back(parse_ablation(a));
    if (!axes.empty()) {
      for (const auto& v : expand_ablations(cfg, axes)) validate(v);
    }
  } catch (const std::exception& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return kExitBadConfig;
  }

  try {
    if (run_cmd->parsed()) {
      const auto variants = axes.empty() ? std::vector<ExperimentConfig>{cfg} : expand_ablations(cfg, axes);
      int status = 0;
      for (const auto& v : variants) {
        const auto result = run_experiment(v);
        if (!result.ok) {
          std::cerr << v.out_dir << ": run failed: " << result.error << '\n';
          status = kExitRunFailed;
          continue;
        }
        std::cout << v.out_dir << ": mIoU " << std::fixed << std::setprecision(4)
                  << result.summary.miou_mean << " +- " << result.summary.miou_std_seeds
                  << " (seeds), +- " << result.summary.miou_std_rounds_mean << " (last rounds)\n";
      }
      return status;
    }
    if (cmp_cmd->parsed()) {
      std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
      for (const auto& r : compare(dirs, compare_out)) {
        std::cout << r.run << ": " << std::fixed << std::setprecision(4) << r.miou_mean << " +- "
                  << r.miou_std_seeds << "  delta " << std::showpos << r.delta_vs_first
                  << std::noshowpos << '\n';
      }
      return 0;
    }
    const std::uint64_t seed = cfg.seeds.front();
    if (gen_cmd->parsed()) {
      export_world(gen_world(cfg.world, cfg.world_seed_for(seed)), cfg.out_dir);
      return 0;
    }
    if (cl_cmd->parsed()) {
      std::vector<StyleUpload> styles;
      if (!styles_path.empty()) {
        styles = read_styles(styles_path);
      } else {
        const World world = gen_world(cfg.world, cfg.world_seed_for(seed));
        const int window = cfg.effective_federation(seed).style_window;
        for (const auto& c : world.clients) styles.push_back(Client(c.client_id, c.images).upload_style(window));
      }
      std::vector<StylePoint> points;
      for (const auto& s : styles) points.push_back({s.client_id, s.mean_style.values});
      const auto fed = cfg.effective_federation(seed);
      const SelectionParams params = selection_params(fed, static_cast<int>(points.size()));
      const auto part = select_clustering(points, params);
      write_file(fs::path(cfg.out_dir) / "partition.json", partition_to_json(part, params));
      std::cout << part.num_clusters() << " clusters, silhouette " << part.silhouette << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRunFailed;
  }
  return 0;
}
