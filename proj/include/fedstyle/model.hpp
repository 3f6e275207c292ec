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

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedstyle/image.hpp"

namespace fedstyle {

// Parameter groups of the segmentation network. Cluster-specific vs global
// aggregation selects a subset of these.
enum class ParamGroup : std::uint8_t { kBackbone = 0, kNorm = 1, kClassifier = 2 };
inline constexpr int kNumGroups = 3;
inline constexpr std::array<ParamGroup, kNumGroups> kAllGroups = {
    ParamGroup::kBackbone, ParamGroup::kNorm, ParamGroup::kClassifier};

std::string_view group_name(ParamGroup g);
// Accepts "backbone", "norm" (alias "bn"), "classifier" (alias "cls").
ParamGroup parse_group(std::string_view name);

class GroupSet {
 public:
  constexpr GroupSet() = default;
  static constexpr GroupSet none() { return GroupSet(); }
  static constexpr GroupSet all() { return GroupSet(0b111); }
  static constexpr GroupSet of(ParamGroup g) { return GroupSet(bit(g)); }

  // "none" | "all" | group names joined by '+'.
  static GroupSet parse(std::string_view spec);
  std::string to_string() const;

  constexpr bool contains(ParamGroup g) const { return (bits_ & bit(g)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr GroupSet& insert(ParamGroup g) {
    bits_ |= bit(g);
    return *this;
  }
  constexpr GroupSet complement() const { return GroupSet(~bits_ & 0b111); }
  constexpr GroupSet operator|(GroupSet o) const { return GroupSet(bits_ | o.bits_); }
  constexpr GroupSet operator&(GroupSet o) const { return GroupSet(bits_ & o.bits_); }
  constexpr bool operator==(const GroupSet&) const = default;
  constexpr std::uint8_t bits() const { return bits_; }

 private:
  constexpr explicit GroupSet(std::uint8_t b) : bits_(b) {}
  static constexpr std::uint8_t bit(ParamGroup g) {
    return static_cast<std::uint8_t>(1u << static_cast<unsigned>(g));
  }
  std::uint8_t bits_ = 0;
};

// Architecture: 3x3 same-padded convolution (in_channels -> features), per
// feature affine normalization, ReLU, 1x1 linear head (features -> classes).
struct ModelShape {
  int in_channels = 3;
  int features = 12;
  int classes = 5;

  // backbone: kernel[f][c][ky][kx] then bias[f]
  // norm:     scale[f] then shift[f]
  // classifier: weight[q][f] then bias[q]
  std::size_t group_size(ParamGroup g) const;
  bool operator==(const ModelShape&) const = default;
};

// Parameters grouped by ParamGroup. A group with an empty vector is absent,
// which is how theta/phi slices are represented.
struct ParamSet {
  ModelShape shape;
  std::array<std::vector<double>, kNumGroups> groups;

  std::vector<double>& operator[](ParamGroup g) { return groups[static_cast<int>(g)]; }
  const std::vector<double>& operator[](ParamGroup g) const {
    return groups[static_cast<int>(g)];
  }
  bool has(ParamGroup g) const { return !(*this)[g].empty(); }
  GroupSet present() const;
  bool complete() const { return present() == GroupSet::all(); }
  std::size_t size() const;

  static ParamSet zeros(const ModelShape& shape, GroupSet groups = GroupSet::all());
  bool operator==(const ParamSet&) const = default;
};

// Throws unless every present group has its architectural size and all values
// are finite.
void validate(const ParamSet& p);

// Weights uniform in +-1/sqrt(fan_in); scale 1, shift 0.
ParamSet init_params(const ModelShape& shape, std::uint64_t seed);

// Arithmetic over the groups present in `dst`.
void axpy(double a, const ParamSet& x, ParamSet& dst);  // dst += a * x
void scale(ParamSet& dst, double a);
double max_abs_diff(const ParamSet& a, const ParamSet& b);

struct SplitParams {
  ParamSet theta;  // cluster-specific groups
  ParamSet phi;    // global groups
};
SplitParams split_params(const ParamSet& params, GroupSet cluster_groups);
// Disjoint union; throws if groups overlap or do not cover the architecture.
ParamSet merge_params(const ParamSet& theta, const ParamSet& phi);

// Per-pixel class scores, stored pixel-major: values[(y * width + x) * classes + q].
struct Logits {
  int height = 0;
  int width = 0;
  int classes = 0;
  std::vector<double> values;

  int pixels() const { return height * width; }
  std::span<const double> pixel(int p) const {
    return {values.data() + static_cast<std::size_t>(p) * classes,
            static_cast<std::size_t>(classes)};
  }
};

Logits forward(const ParamSet& params, const ImageTensor& img);

// Row-wise softmax of the logits, same layout.
std::vector<double> softmax(const Logits& logits);
LabelMap argmax(const Logits& logits);

struct LossGrad {
  double loss = 0.0;
  ParamSet grad;
};

// Softmax cross-entropy averaged over non-ignored pixels. All-ignored maps
// give zero loss and a zero gradient.
LossGrad ce_loss_grad(const ParamSet& params, const ImageTensor& img, const LabelMap& labels);

// Pixel-mean cross-entropy from the teacher's softmax (temperature 1) to the
// student's softmax.
LossGrad kd_loss_grad(const ParamSet& params, const ImageTensor& img, const Logits& teacher);

// L = L_pseudo + kd_weight * L_kd evaluated with a single forward/backward.
struct LocalLoss {
  double loss_pseudo = 0.0;
  double loss_kd = 0.0;
  double total = 0.0;
  ParamSet grad;
};
LocalLoss local_loss_grad(const ParamSet& params, const ImageTensor& img,
                          const LabelMap& pseudo, const Logits* kd_teacher, double kd_weight);

// Dual-gate pseudo-labels. For each class q, tau_q = min(conf_threshold,
// v_q[floor((1 - class_fraction) * (n_q - 1))]) where v_q are the ascending
// max-probabilities of the n_q pixels whose argmax is q. A pixel keeps its
// argmax label iff its max-probability >= tau of that class.
LabelMap pseudo_label(const Logits& teacher, double conf_threshold, double class_fraction);

// Heavy-ball SGD: v <- momentum * v + g; p <- p - lr * v.
class Sgd {
 public:
  explicit Sgd(double momentum = 0.9) : momentum_(momentum) {}
  void step(ParamSet& params, const ParamSet& grad, double lr);
  const ParamSet& velocity() const { return velocity_; }
  void set_velocity(ParamSet v) { velocity_ = std::move(v); }

 private:
  double momentum_;
  ParamSet velocity_;
};

// Binary checkpoint; see docs/formats.md. velocity may be null.
void write_checkpoint(std::ostream& out, const ParamSet& params, const ParamSet* velocity);
struct Checkpoint {
  ParamSet params;
  bool has_velocity = false;
  ParamSet velocity;
};
Checkpoint read_checkpoint(std::istream& in);

}  // namespace fedstyle
