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
#include <span>
#include <string>
#include <vector>

#include "fedstyle/image.hpp"
#include "fedstyle/spectral.hpp"

namespace fedstyle {

// Rendering model of one visual domain:
//   pixel[c] = palette[class][c] * gain[c] * illumination(y, x) + offset[c] + noise
// with illumination(y, x) = 1 + gradient_x * (x / (W-1) - 1/2) + gradient_y * (y / (H-1) - 1/2),
// clipped to [0, 1]. gain/offset form the color cast; the ramp is the
// illumination gradient. Both live in the lowest spatial frequencies.
struct DomainSpec {
  int domain_id = 0;
  std::vector<double> gain;
  std::vector<double> offset;
  double gradient_x = 0.0;
  double gradient_y = 0.0;
  double noise_sigma = 0.0;
  std::vector<std::vector<double>> palette;  // [class][channel]

  int channels() const { return static_cast<int>(gain.size()); }
  int classes() const { return static_cast<int>(palette.size()); }
};

void validate(const DomainSpec& spec);

// The domain's style fingerprint: the style of a noise-free, background-only
// rendering at the given size.
Style style_signature(const DomainSpec& spec, int height, int width, int window);

// L2 distance between two signatures divided by height * width (i.e. in
// mean-intensity units, independent of image size).
double signature_distance(const DomainSpec& a, const DomainSpec& b, int height, int width,
                          int window);

struct SplitSpec {
  int clients_per_domain = 10;
  int images_min = 8;
  int images_max = 24;
  int height = 32;
  int width = 32;
  int classes = 5;
};

void validate(const SplitSpec& split);

// Deterministic per-seed scene: background class 0, 2-5 axis-aligned
// rectangles and 1-3 discs, each of a random non-background class.
LabeledImage gen_image(const DomainSpec& spec, int height, int width, std::uint64_t seed);

struct WorldSpec {
  int domains = 3;                // G
  int channels = 3;
  double separation = 0.3;        // delta, in mean-intensity units
  double max_gain_dev = 0.25;     // gain in [1 - dev, 1 + dev]
  double max_offset = 0.18;
  double max_gradient = 0.3;
  double noise_sigma = 0.03;
  double source_noise_sigma = 0.03;
  int signature_window = 3;
  SplitSpec split;
  int source_size = 200;
  int source_test_size = 40;
  int test_per_domain = 20;
};

// Shared class palette: fixed colors for the first five classes, seeded
// random colors beyond that.
std::vector<std::vector<double>> default_palette(int classes, int channels, std::uint64_t seed);

// Source domain (identity cast, flat illumination) plus G target domains
// sampled until their signatures are pairwise at least `separation` apart.
struct DomainSet {
  DomainSpec source;
  std::vector<DomainSpec> targets;
};
DomainSet make_domains(const WorldSpec& spec, std::uint64_t seed);

struct ClientData {
  int client_id = 0;
  int domain_id = 0;                // ground truth, for diagnostics only
  std::vector<ImageTensor> images;  // unlabeled
};

struct TestImage {
  int domain_id = 0;
  LabeledImage sample;
};

struct World {
  DomainSet domains;
  std::vector<LabeledImage> source;
  std::vector<LabeledImage> source_test;
  std::vector<ClientData> clients;
  std::vector<TestImage> test;  // stratified across target domains

  std::size_t target_images() const;
};

World gen_world(const DomainSet& domains, const WorldSpec& spec, std::uint64_t seed);
World gen_world(const WorldSpec& spec, std::uint64_t seed);

// Flat binary corpus: one .img (u32 height, width, channels, then f64 values)
// and, where labels exist, one .lbl (u32 height, width, then i32 labels) per
// sample, plus manifest.json.
void export_world(const World& world, const std::filesystem::path& dir);

}  // namespace fedstyle
