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

#include "fedstyle/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <variant>

namespace fedstyle {
namespace {

using Ref = std::variant<int*, double*, bool*, std::string*, std::int64_t*, GroupSet*,
                         std::vector<std::uint64_t>*>;

struct Field {
  std::string key;
  std::function<Ref(ExperimentConfig&)> ref;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    auto add = [&](std::string key, auto getter) { f.push_back({std::move(key), getter}); };
    add("schema_version", [](ExperimentConfig& c) -> Ref { return &c.schema_version; });
    add("world.domains", [](ExperimentConfig& c) -> Ref { return &c.world.domains; });
    add("world.channels", [](ExperimentConfig& c) -> Ref { return &c.world.channels; });
    add("world.separation", [](ExperimentConfig& c) -> Ref { return &c.world.separation; });
    add("world.max_gain_dev", [](ExperimentConfig& c) -> Ref { return &c.world.max_gain_dev; });
    add("world.max_offset", [](ExperimentConfig& c) -> Ref { return &c.world.max_offset; });
    add("world.max_gradient", [](ExperimentConfig& c) -> Ref { return &c.world.max_gradient; });
    add("world.noise_sigma", [](ExperimentConfig& c) -> Ref { return &c.world.noise_sigma; });
    add("world.source_noise_sigma",
        [](ExperimentConfig& c) -> Ref { return &c.world.source_noise_sigma; });
    add("world.signature_window",
        [](ExperimentConfig& c) -> Ref { return &c.world.signature_window; });
    add("world.clients_per_domain",
        [](ExperimentConfig& c) -> Ref { return &c.world.split.clients_per_domain; });
    add("world.images_min", [](ExperimentConfig& c) -> Ref { return &c.world.split.images_min; });
    add("world.images_max", [](ExperimentConfig& c) -> Ref { return &c.world.split.images_max; });
    add("world.height", [](ExperimentConfig& c) -> Ref { return &c.world.split.height; });
    add("world.width", [](ExperimentConfig& c) -> Ref { return &c.world.split.width; });
    add("world.classes", [](ExperimentConfig& c) -> Ref { return &c.world.split.classes; });
    add("world.source_size", [](ExperimentConfig& c) -> Ref { return &c.world.source_size; });
    add("world.source_test_size",
        [](ExperimentConfig& c) -> Ref { return &c.world.source_test_size; });
    add("world.test_per_domain", [](ExperimentConfig& c) -> Ref { return &c.world.test_per_domain; });
    add("world.seed", [](ExperimentConfig& c) -> Ref { return &c.world_seed; });

    add("model.features", [](ExperimentConfig& c) -> Ref { return &c.federation.model.features; });

    add("federation.rounds", [](ExperimentConfig& c) -> Ref { return &c.federation.rounds; });
    add("federation.clients_per_round",
        [](ExperimentConfig& c) -> Ref { return &c.federation.clients_per_round; });
    add("federation.local_epochs",
        [](ExperimentConfig& c) -> Ref { return &c.federation.local_epochs; });
    add("federation.batch_size", [](ExperimentConfig& c) -> Ref { return &c.federation.batch_size; });
    add("federation.lr", [](ExperimentConfig& c) -> Ref { return &c.federation.lr; });
    add("federation.lr_power", [](ExperimentConfig& c) -> Ref { return &c.federation.lr_power; });
    add("federation.momentum", [](ExperimentConfig& c) -> Ref { return &c.federation.momentum; });
    add("federation.kd_weight", [](ExperimentConfig& c) -> Ref { return &c.federation.kd_weight; });
    add("federation.teacher_period",
        [](ExperimentConfig& c) -> Ref { return &c.federation.teacher_period; });
    add("federation.swat_start", [](ExperimentConfig& c) -> Ref { return &c.federation.swat_start; });
    add("federation.conf_threshold",
        [](ExperimentConfig& c) -> Ref { return &c.federation.conf_threshold; });
    add("federation.class_fraction",
        [](ExperimentConfig& c) -> Ref { return &c.federation.class_fraction; });
    add("federation.style_window",
        [](ExperimentConfig& c) -> Ref { return &c.federation.style_window; });
    add("federation.pretrain_steps",
        [](ExperimentConfig& c) -> Ref { return &c.federation.pretrain_steps; });
    add("federation.pretrain_batch",
        [](ExperimentConfig& c) -> Ref { return &c.federation.pretrain_batch; });
    add("federation.pretrain_lr", [](ExperimentConfig& c) -> Ref { return &c.federation.pretrain_lr; });
    add("federation.pretrain_lr_power",
        [](ExperimentConfig& c) -> Ref { return &c.federation.pretrain_lr_power; });
    add("federation.p_plain", [](ExperimentConfig& c) -> Ref { return &c.federation.p_plain; });
    add("federation.cluster_m", [](ExperimentConfig& c) -> Ref { return &c.federation.cluster_m; });
    add("federation.cluster_n", [](ExperimentConfig& c) -> Ref { return &c.federation.cluster_n; });
    add("federation.cluster_runs",
        [](ExperimentConfig& c) -> Ref { return &c.federation.cluster_runs; });
    add("federation.threads", [](ExperimentConfig& c) -> Ref { return &c.federation.threads; });
    add("federation.record_wallclock",
        [](ExperimentConfig& c) -> Ref { return &c.federation.record_wallclock; });

    add("ablation.fda_pretrain", [](ExperimentConfig& c) -> Ref { return &c.ablation.fda_pretrain; });
    add("ablation.self_training",
        [](ExperimentConfig& c) -> Ref { return &c.ablation.self_training; });
    add("ablation.kd", [](ExperimentConfig& c) -> Ref { return &c.ablation.kd; });
    add("ablation.swat", [](ExperimentConfig& c) -> Ref { return &c.ablation.swat; });
    add("ablation.cluster_aggr", [](ExperimentConfig& c) -> Ref { return &c.ablation.cluster_aggr; });
    add("ablation.cluster_groups",
        [](ExperimentConfig& c) -> Ref { return &c.federation.cluster_groups; });

    add("run.out", [](ExperimentConfig& c) -> Ref { return &c.out_dir; });
    add("run.seeds", [](ExperimentConfig& c) -> Ref { return &c.seeds; });
    return f;
  }();
  return table;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string unquote(std::string_view v) {
  v = trim(v);
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return std::string(v.substr(1, v.size() - 2));
  return std::string(v);
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  v = trim(v);
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw FormatError("invalid number '" + std::string(v) + "' for " + std::string(key));
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

const Field& find_field(std::string_view key) {
  const std::string full = resolve_key(key);
  for (const auto& f : fields())
    if (f.key == full) return f;
  throw FormatError("unknown config key '" + std::string(key) + "'");
}

void assign(ExperimentConfig& cfg, const Field& field, std::string_view value) {
  const std::string_view key = field.key;
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, int>) {
          *p = parse_number<int>(key, value);
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          *p = parse_number<std::int64_t>(key, value);
        } else if constexpr (std::is_same_v<T, double>) {
          *p = parse_number<double>(key, value);
        } else if constexpr (std::is_same_v<T, bool>) {
          const auto v = trim(value);
          if (v == "true") {
            *p = true;
          } else if (v == "false") {
            *p = false;
          } else {
            throw FormatError("invalid boolean '" + std::string(v) + "' for " + std::string(key));
          }
        } else if constexpr (std::is_same_v<T, std::string>) {
          *p = unquote(value);
        } else if constexpr (std::is_same_v<T, GroupSet>) {
          try {
            *p = GroupSet::parse(unquote(value));
          } catch (const InvalidArgument& e) {
            throw FormatError(std::string(e.what()) + " in " + std::string(key));
          }
        } else {
          auto v = trim(value);
          if (!v.empty() && v.front() == '[') {
            if (v.back() != ']') throw FormatError("unterminated array for " + std::string(key));
            v = v.substr(1, v.size() - 2);
          }
          p->clear();
          std::size_t start = 0;
          while (start < v.size()) {
            auto end = v.find(',', start);
            if (end == std::string_view::npos) end = v.size();
            const auto item = trim(v.substr(start, end - start));
            if (!item.empty()) p->push_back(parse_number<std::uint64_t>(key, item));
            start = end + 1;
          }
        }
      },
      field.ref(cfg));
}

std::string render(ExperimentConfig& cfg, const Field& field) {
  return std::visit(
      [](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, int> || std::is_same_v<T, std::int64_t>) {
          return std::to_string(*p);
        } else if constexpr (std::is_same_v<T, double>) {
          return format_double(*p);
        } else if constexpr (std::is_same_v<T, bool>) {
          return *p ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::string>) {
          return "\"" + *p + "\"";
        } else if constexpr (std::is_same_v<T, GroupSet>) {
          return "\"" + p->to_string() + "\"";
        } else {
          std::string s = "[";
          for (std::size_t i = 0; i < p->size(); ++i) {
            if (i) s += ", ";
            s += std::to_string((*p)[i]);
          }
          return s + "]";
        }
      },
      field.ref(cfg));
}

}  // namespace

std::string resolve_key(std::string_view key) {
  for (const auto& f : fields())
    if (f.key == key) return f.key;
  std::string match;
  for (const auto& f : fields()) {
    const std::string_view k = f.key;
    if (k.size() > key.size() && k.ends_with(key) && k[k.size() - key.size() - 1] == '.') {
      if (!match.empty()) throw FormatError("ambiguous config key '" + std::string(key) + "'");
      match = f.key;
    }
  }
  if (match.empty()) throw FormatError("unknown config key '" + std::string(key) + "'");
  return match;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

void set_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  assign(cfg, find_field(key), value);
}

std::string get_value(const ExperimentConfig& cfg, std::string_view key) {
  auto copy = cfg;
  return render(copy, find_field(key));
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  cfg.schema_version = 0;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;

    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_quotes = !in_quotes;
      if (line[i] == '#' && !in_quotes) {
        line = line.substr(0, i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw FormatError("line " + std::to_string(line_no) + ": malformed section header");
      }
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw FormatError("line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = std::string(trim(line.substr(0, eq)));
    const std::string full = section.empty() ? key : section + "." + key;
    bool known = false;
    for (const auto& f : fields()) known |= f.key == full;
    if (!known) {
      throw FormatError("line " + std::to_string(line_no) + ": unknown config key '" + full + "'");
    }
    assign(cfg, find_field(full), line.substr(eq + 1));
  }
  if (cfg.schema_version != kSchemaVersion) {
    throw FormatError("config must declare schema_version = " + std::to_string(kSchemaVersion));
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const ExperimentConfig& cfg) {
  auto copy = cfg;
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string sec = dot == std::string::npos ? "" : f.key.substr(0, dot);
    const std::string name = dot == std::string::npos ? f.key : f.key.substr(dot + 1);
    if (sec != section) {
      out += "\n[" + sec + "]\n";
      section = sec;
    }
    out += name + " = " + render(copy, f) + "\n";
  }
  return out;
}

void validate(const ExperimentConfig& cfg) {
  require(cfg.schema_version == kSchemaVersion, "unsupported schema_version");
  require(!cfg.seeds.empty(), "run.seeds must list at least one seed");
  require(!cfg.out_dir.empty(), "run.out must be set");
  validate(cfg.world.split);
  require(cfg.world.domains >= 1, "world.domains must be >= 1");
  require(cfg.federation.model.features >= 1, "model.features must be >= 1");
  require(cfg.federation.style_window <= std::min(cfg.world.split.height, cfg.world.split.width),
          "federation.style_window exceeds the image size");
  validate(cfg.effective_federation(cfg.seeds.front()),
           cfg.world.domains * cfg.world.split.clients_per_domain);
}

FederationConfig ExperimentConfig::effective_federation(std::uint64_t seed) const {
  FederationConfig f = federation;
  f.seed = seed;
  f.model.in_channels = world.channels;
  f.model.classes = world.split.classes;
  f.fda_pretrain = ablation.fda_pretrain;
  f.self_training = ablation.self_training;
  if (!ablation.kd) f.kd_weight = 0.0;
  if (!ablation.swat) f.swat_start = f.rounds + 1;
  f.cluster_clients = ablation.cluster_aggr;
  if (!ablation.cluster_aggr) f.cluster_groups = GroupSet::none();
  return f;
}

std::uint64_t ExperimentConfig::world_seed_for(std::uint64_t seed) const {
  return world_seed >= 0 ? static_cast<std::uint64_t>(world_seed) : seed;
}

}  // namespace fedstyle
