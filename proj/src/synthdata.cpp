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

#include "fedstyle/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "binary_io.hpp"
#include "fedstyle/rng.hpp"
#include "json.hpp"

namespace fedstyle {

void validate(const DomainSpec& spec) {
  require(spec.channels() >= 1, "domain needs at least one channel");
  require(static_cast<int>(spec.offset.size()) == spec.channels(),
          "domain gain/offset channel counts differ");
  require(spec.classes() >= 2, "domain palette needs at least two classes");
  for (const auto& c : spec.palette) {
    require(static_cast<int>(c.size()) == spec.channels(), "palette entry has wrong channel count");
    for (double v : c) require(v >= 0.0 && v <= 1.0, "palette values must lie in [0, 1]");
  }
  require(spec.noise_sigma >= 0.0, "noise_sigma must be non-negative");
}

void validate(const SplitSpec& split) {
  require(split.clients_per_domain >= 1, "clients_per_domain must be >= 1");
  require(split.images_min >= 1 && split.images_min <= split.images_max,
          "images per client range must satisfy 1 <= lo <= hi");
  require(split.height >= 8 && split.width >= 8, "images must be at least 8x8");
  require(split.classes >= 2, "need at least two classes");
}

namespace {

double illumination(const DomainSpec& spec, int y, int x, int h, int w) {
  return 1.0 + spec.gradient_x * (static_cast<double>(x) / (w - 1) - 0.5) +
         spec.gradient_y * (static_cast<double>(y) / (h - 1) - 0.5);
}

ImageTensor render(const DomainSpec& spec, const LabelMap& labels, Rng* noise) {
  const int h = labels.height, w = labels.width, ch = spec.channels();
  ImageTensor img(h, w, ch);
  for (int c = 0; c < ch; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double v = spec.palette[labels.at(y, x)][c] * spec.gain[c] *
                       illumination(spec, y, x, h, w) +
                   spec.offset[c];
        if (noise && spec.noise_sigma > 0.0) v += spec.noise_sigma * noise->normal();
        img.at(c, y, x) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return img;
}

}  // namespace

Style style_signature(const DomainSpec& spec, int height, int width, int window) {
  validate(spec);
  return extract_style(render(spec, LabelMap(height, width, 0), nullptr), window);
}

double signature_distance(const DomainSpec& a, const DomainSpec& b, int height, int width,
                          int window) {
  const Style sa = style_signature(a, height, width, window);
  const Style sb = style_signature(b, height, width, window);
  double s = 0.0;
  for (std::size_t i = 0; i < sa.values.size(); ++i) {
    const double d = sa.values[i] - sb.values[i];
    s += d * d;
  }
  return std::sqrt(s) / (static_cast<double>(height) * width);
}

LabeledImage gen_image(const DomainSpec& spec, int height, int width, std::uint64_t seed) {
  validate(spec);
  require(height >= 8 && width >= 8, "gen_image needs at least 8x8");
  Rng rng(seed);
  LabelMap labels(height, width, 0);
  const int q = spec.classes();
  const int side_min = std::max(2, std::min(height, width) / 8);
  const int side_max = std::max(side_min, std::min(height, width) / 3);

  const int rects = rng.range(2, 5);
  for (int r = 0; r < rects; ++r) {
    const int cls = rng.range(1, q - 1);
    const int rh = rng.range(side_min, side_max), rw = rng.range(side_min, side_max);
    const int y0 = rng.range(0, height - rh), x0 = rng.range(0, width - rw);
    for (int y = y0; y < y0 + rh; ++y)
      for (int x = x0; x < x0 + rw; ++x) labels.at(y, x) = cls;
  }
  const int discs = rng.range(1, 3);
  const int rad_min = std::max(1, side_min / 2), rad_max = std::max(rad_min, side_max / 2);
  for (int d = 0; d < discs; ++d) {
    const int cls = rng.range(1, q - 1);
    const int rad = rng.range(rad_min, rad_max);
    const int cy = rng.range(0, height - 1), cx = rng.range(0, width - 1);
    for (int y = std::max(0, cy - rad); y <= std::min(height - 1, cy + rad); ++y)
      for (int x = std::max(0, cx - rad); x <= std::min(width - 1, cx + rad); ++x)
        if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= rad * rad) labels.at(y, x) = cls;
  }
  return {render(spec, labels, &rng), std::move(labels)};
}

std::vector<std::vector<double>> default_palette(int classes, int channels,
                                                 std::uint64_t seed) {
  static const double base[5][3] = {{0.45, 0.45, 0.45},
                                    {0.75, 0.30, 0.30},
                                    {0.30, 0.70, 0.35},
                                    {0.30, 0.40, 0.80},
                                    {0.80, 0.75, 0.30}};
  Rng rng(derive_seed(seed, {0x70a1}));
  std::vector<std::vector<double>> p(classes, std::vector<double>(channels));
  for (int q = 0; q < classes; ++q)
    for (int c = 0; c < channels; ++c)
      p[q][c] = (q < 5 && c < 3) ? base[q][c] : rng.uniform(0.15, 0.85);
  return p;
}

DomainSet make_domains(const WorldSpec& spec, std::uint64_t seed) {
  require(spec.domains >= 1, "need at least one target domain");
  require(spec.channels >= 1, "need at least one channel");
  validate(spec.split);
  const int h = spec.split.height, w = spec.split.width, win = spec.signature_window;
  DomainSet set;
  set.source.domain_id = -1;
  set.source.gain.assign(spec.channels, 1.0);
  set.source.offset.assign(spec.channels, 0.0);
  set.source.noise_sigma = spec.source_noise_sigma;
  set.source.palette = default_palette(spec.split.classes, spec.channels, seed);

  Rng rng(derive_seed(seed, {0xd0a1}));
  constexpr int kMaxTries = 20000;
  // Rendered content moves image styles slightly off the background-only signature.
  constexpr double kPlacementMargin = 1.1;
  int tries = 0;
  while (static_cast<int>(set.targets.size()) < spec.domains) {
    if (++tries > kMaxTries) {
      throw InvalidArgument("cannot place " + std::to_string(spec.domains) +
                            " domains with separation " + std::to_string(spec.separation));
    }
    DomainSpec d = set.source;
    d.domain_id = static_cast<int>(set.targets.size());
    d.noise_sigma = spec.noise_sigma;
    for (int c = 0; c < spec.channels; ++c) {
      d.gain[c] = rng.uniform(1.0 - spec.max_gain_dev, 1.0 + spec.max_gain_dev);
      d.offset[c] = rng.uniform(-spec.max_offset, spec.max_offset);
    }
    d.gradient_x = rng.uniform(-spec.max_gradient, spec.max_gradient);
    d.gradient_y = rng.uniform(-spec.max_gradient, spec.max_gradient);
    bool ok = true;
    for (const auto& other : set.targets) {
      if (signature_distance(d, other, h, w, win) < kPlacementMargin * spec.separation) {
        ok = false;
        break;
      }
    }
    if (ok) set.targets.push_back(std::move(d));
  }
  return set;
}

std::size_t World::target_images() const {
  std::size_t n = 0;
  for (const auto& c : clients) n += c.images.size();
  return n;
}

World gen_world(const DomainSet& domains, const WorldSpec& spec, std::uint64_t seed) {
  validate(spec.split);
  require(!domains.targets.empty(), "world needs at least one target domain");
  require(spec.source_size >= 1, "source_size must be >= 1");
  require(spec.test_per_domain >= 1, "test_per_domain must be >= 1");
  const int h = spec.split.height, w = spec.split.width;
  validate(domains.source);
  for (std::size_t i = 0; i < domains.targets.size(); ++i) {
    validate(domains.targets[i]);
    require(domains.targets[i].classes() == spec.split.classes,
            "domain palette size differs from split classes");
    for (std::size_t j = 0; j < i; ++j) {
      require(signature_distance(domains.targets[i], domains.targets[j], h, w,
                                 spec.signature_window) >= spec.separation,
              "target domains are closer than the configured separation");
    }
  }

  World world;
  world.domains = domains;
  for (int i = 0; i < spec.source_size; ++i)
    world.source.push_back(gen_image(domains.source, h, w, derive_seed(seed, {1, std::uint64_t(i)})));
  for (int i = 0; i < spec.source_test_size; ++i)
    world.source_test.push_back(
        gen_image(domains.source, h, w, derive_seed(seed, {2, std::uint64_t(i)})));

  const int g_count = static_cast<int>(domains.targets.size());
  const int k_count = g_count * spec.split.clients_per_domain;
  std::vector<int> ids(k_count);
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng(derive_seed(seed, {3}));
  for (int i = k_count - 1; i > 0; --i) std::swap(ids[i], ids[rng.below(i + 1)]);

  world.clients.resize(k_count);
  for (int g = 0; g < g_count; ++g) {
    for (int k = 0; k < spec.split.clients_per_domain; ++k) {
      const int slot = g * spec.split.clients_per_domain + k;
      const int id = ids[slot];
      ClientData& client = world.clients[id];
      client.client_id = id;
      client.domain_id = domains.targets[g].domain_id;
      const int count = rng.range(spec.split.images_min, spec.split.images_max);
      for (int i = 0; i < count; ++i) {
        client.images.push_back(gen_image(domains.targets[g], h, w,
                                          derive_seed(seed, {4, std::uint64_t(id), std::uint64_t(i)}))
                                    .image);
      }
    }
  }
  for (int i = 0; i < spec.test_per_domain; ++i) {
    for (int g = 0; g < g_count; ++g) {
      world.test.push_back({domains.targets[g].domain_id,
                            gen_image(domains.targets[g], h, w,
                                      derive_seed(seed, {5, std::uint64_t(g), std::uint64_t(i)}))});
    }
  }
  return world;
}

World gen_world(const WorldSpec& spec, std::uint64_t seed) {
  return gen_world(make_domains(spec, seed), spec, seed);
}

namespace {

void write_image(const std::filesystem::path& path, const ImageTensor& img) {
  std::ofstream out(path, std::ios::binary);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(img.height));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(img.width));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(img.channels));
  for (double v : img.values) detail::put_f64(out, v);
  if (!out) throw FormatError("failed to write " + path.string());
}

void write_labels(const std::filesystem::path& path, const LabelMap& labels) {
  std::ofstream out(path, std::ios::binary);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(labels.height));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(labels.width));
  for (int l : labels.labels) detail::put<std::int32_t>(out, l);
  if (!out) throw FormatError("failed to write " + path.string());
}

nlohmann::json domain_json(const DomainSpec& d) {
  return {{"domain_id", d.domain_id},     {"gain", d.gain},
          {"offset", d.offset},           {"gradient_x", d.gradient_x},
          {"gradient_y", d.gradient_y},   {"noise_sigma", d.noise_sigma},
          {"palette", d.palette}};
}

nlohmann::json write_labeled(const std::filesystem::path& root, const std::string& sub,
                             const std::vector<LabeledImage>& set) {
  std::filesystem::create_directories(root / sub);
  nlohmann::json files = nlohmann::json::array();
  for (std::size_t i = 0; i < set.size(); ++i) {
    const std::string stem = sub + "/" + std::to_string(i);
    write_image(root / (stem + ".img"), set[i].image);
    write_labels(root / (stem + ".lbl"), set[i].labels);
    files.push_back({{"image", stem + ".img"}, {"labels", stem + ".lbl"}});
  }
  return files;
}

}  // namespace

void export_world(const World& world, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["source_domain"] = domain_json(world.domains.source);
  manifest["target_domains"] = nlohmann::json::array();
  for (const auto& d : world.domains.targets) manifest["target_domains"].push_back(domain_json(d));
  manifest["source"] = write_labeled(dir, "source", world.source);
  manifest["source_test"] = write_labeled(dir, "source_test", world.source_test);

  manifest["clients"] = nlohmann::json::array();
  for (const auto& c : world.clients) {
    const std::string sub = "clients/" + std::to_string(c.client_id);
    std::filesystem::create_directories(dir / sub);
    nlohmann::json files = nlohmann::json::array();
    for (std::size_t i = 0; i < c.images.size(); ++i) {
      const std::string f = sub + "/" + std::to_string(i) + ".img";
      write_image(dir / f, c.images[i]);
      files.push_back(f);
    }
    manifest["clients"].push_back(
        {{"client_id", c.client_id}, {"domain_id", c.domain_id}, {"images", files}});
  }

  std::vector<LabeledImage> test;
  nlohmann::json test_domains = nlohmann::json::array();
  for (const auto& t : world.test) {
    test.push_back(t.sample);
    test_domains.push_back(t.domain_id);
  }
  manifest["test"] = write_labeled(dir, "test", test);
  for (std::size_t i = 0; i < test.size(); ++i) manifest["test"][i]["domain_id"] = test_domains[i];

  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) throw FormatError("failed to write manifest");
}

}  // namespace fedstyle
