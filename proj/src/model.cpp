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

#include "fedstyle/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fedstyle/error.hpp"
#include "fedstyle/rng.hpp"

namespace fedstyle {

std::string_view group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::kBackbone: return "backbone";
    case ParamGroup::kNorm: return "norm";
    case ParamGroup::kClassifier: return "classifier";
  }
  return "?";
}

ParamGroup parse_group(std::string_view name) {
  if (name == "backbone") return ParamGroup::kBackbone;
  if (name == "norm" || name == "bn") return ParamGroup::kNorm;
  if (name == "classifier" || name == "cls") return ParamGroup::kClassifier;
  throw InvalidArgument("unknown parameter group '" + std::string(name) + "'");
}

GroupSet GroupSet::parse(std::string_view spec) {
  if (spec == "none" || spec.empty()) return none();
  if (spec == "all") return all();
  GroupSet out;
  std::size_t start = 0;
  while (start <= spec.size()) {
    const std::size_t end = std::min(spec.find('+', start), spec.size());
    out.insert(parse_group(spec.substr(start, end - start)));
    start = end + 1;
  }
  return out;
}

std::string GroupSet::to_string() const {
  if (empty()) return "none";
  if (*this == all()) return "all";
  std::string s;
  for (auto g : kAllGroups) {
    if (!contains(g)) continue;
    if (!s.empty()) s += '+';
    s += group_name(g);
  }
  return s;
}

std::size_t ModelShape::group_size(ParamGroup g) const {
  const auto f = static_cast<std::size_t>(features);
  switch (g) {
    case ParamGroup::kBackbone: return f * in_channels * 9 + f;
    case ParamGroup::kNorm: return 2 * f;
    case ParamGroup::kClassifier: return static_cast<std::size_t>(classes) * f + classes;
  }
  return 0;
}

GroupSet ParamSet::present() const {
  GroupSet s;
  for (auto g : kAllGroups)
    if (has(g)) s.insert(g);
  return s;
}

std::size_t ParamSet::size() const {
  std::size_t n = 0;
  for (const auto& v : groups) n += v.size();
  return n;
}

ParamSet ParamSet::zeros(const ModelShape& shape, GroupSet which) {
  ParamSet p;
  p.shape = shape;
  for (auto g : kAllGroups)
    if (which.contains(g)) p[g].assign(shape.group_size(g), 0.0);
  return p;
}

void validate(const ParamSet& p) {
  require(p.shape.in_channels >= 1 && p.shape.features >= 1 && p.shape.classes >= 2,
          "model shape needs in_channels >= 1, features >= 1, classes >= 2");
  for (auto g : kAllGroups) {
    if (!p.has(g)) continue;
    require(p[g].size() == p.shape.group_size(g),
            "group '" + std::string(group_name(g)) + "' has wrong size");
    for (double v : p[g]) require(std::isfinite(v), "parameters contain non-finite values");
  }
}

ParamSet init_params(const ModelShape& shape, std::uint64_t seed) {
  ParamSet p = ParamSet::zeros(shape);
  validate(p);
  Rng rng(seed);
  const int f = shape.features;
  const double conv_bound = 1.0 / std::sqrt(9.0 * shape.in_channels);
  for (double& v : p[ParamGroup::kBackbone]) v = rng.uniform(-conv_bound, conv_bound);
  auto& norm = p[ParamGroup::kNorm];
  std::fill(norm.begin(), norm.begin() + f, 1.0);
  const double cls_bound = 1.0 / std::sqrt(static_cast<double>(f));
  for (double& v : p[ParamGroup::kClassifier]) v = rng.uniform(-cls_bound, cls_bound);
  return p;
}

void axpy(double a, const ParamSet& x, ParamSet& dst) {
  for (auto g : kAllGroups) {
    if (!dst.has(g)) continue;
    require(x[g].size() == dst[g].size(), "axpy: group size mismatch");
    auto& d = dst[g];
    const auto& s = x[g];
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += a * s[i];
  }
}

void scale(ParamSet& dst, double a) {
  for (auto& v : dst.groups)
    for (double& x : v) x *= a;
}

double max_abs_diff(const ParamSet& a, const ParamSet& b) {
  require(a.present() == b.present(), "max_abs_diff: different groups present");
  double m = 0.0;
  for (auto g : kAllGroups) {
    require(a[g].size() == b[g].size(), "max_abs_diff: group size mismatch");
    for (std::size_t i = 0; i < a[g].size(); ++i) m = std::max(m, std::abs(a[g][i] - b[g][i]));
  }
  return m;
}

SplitParams split_params(const ParamSet& params, GroupSet cluster_groups) {
  SplitParams out;
  out.theta.shape = out.phi.shape = params.shape;
  for (auto g : kAllGroups) {
    (cluster_groups.contains(g) ? out.theta : out.phi)[g] = params[g];
  }
  return out;
}

ParamSet merge_params(const ParamSet& theta, const ParamSet& phi) {
  require(theta.shape == phi.shape, "merge_params: shape mismatch");
  require((theta.present() & phi.present()).empty(), "merge_params: theta and phi overlap");
  ParamSet out;
  out.shape = theta.shape;
  for (auto g : kAllGroups) out[g] = theta.has(g) ? theta[g] : phi[g];
  require(out.complete(), "merge_params: theta and phi do not cover every group");
  return out;
}

namespace {

// Intermediate activations kept for the backward pass, feature-major:
// [f * pixels + p].
struct Activations {
  std::vector<double> conv;  // pre-normalization
  std::vector<double> norm;  // pre-ReLU
  std::vector<double> relu;
  Logits logits;
};

void check_input(const ParamSet& params, const ImageTensor& img) {
  require(params.complete(), "forward needs a complete parameter set");
  validate(params);
  require(img.channels == params.shape.in_channels,
          "image has " + std::to_string(img.channels) + " channels, model expects " +
              std::to_string(params.shape.in_channels));
  require(img.height >= 1 && img.width >= 1 &&
              img.values.size() == static_cast<std::size_t>(img.pixels()) * img.channels,
          "image payload size does not match its shape");
}

Activations run_forward(const ParamSet& params, const ImageTensor& img) {
  const auto& shape = params.shape;
  const int F = shape.features, C = shape.in_channels, Q = shape.classes;
  const int H = img.height, W = img.width, P = H * W;
  const auto& bb = params[ParamGroup::kBackbone];
  const auto& nm = params[ParamGroup::kNorm];
  const auto& cl = params[ParamGroup::kClassifier];
  const double* kernel = bb.data();
  const double* conv_bias = bb.data() + static_cast<std::size_t>(F) * C * 9;

  Activations a;
  a.conv.assign(static_cast<std::size_t>(F) * P, 0.0);
  for (int f = 0; f < F; ++f) {
    double* out = a.conv.data() + static_cast<std::size_t>(f) * P;
    std::fill(out, out + P, conv_bias[f]);
    for (int c = 0; c < C; ++c) {
      const double* in = img.values.data() + static_cast<std::size_t>(c) * P;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
          const double w = kernel[((f * C + c) * 3 + ky) * 3 + kx];
          if (w == 0.0) continue;
          for (int y = y0; y < y1; ++y) {
            double* row = out + y * W;
            const double* src = in + (y + dy) * W + dx;
            for (int x = x0; x < x1; ++x) row[x] += w * src[x];
          }
        }
      }
    }
  }

  a.norm.resize(a.conv.size());
  a.relu.resize(a.conv.size());
  for (int f = 0; f < F; ++f) {
    const double g = nm[f], b = nm[F + f];
    for (int p = 0; p < P; ++p) {
      const std::size_t i = static_cast<std::size_t>(f) * P + p;
      a.norm[i] = g * a.conv[i] + b;
      a.relu[i] = a.norm[i] > 0.0 ? a.norm[i] : 0.0;
    }
  }

  a.logits.height = H;
  a.logits.width = W;
  a.logits.classes = Q;
  a.logits.values.assign(static_cast<std::size_t>(P) * Q, 0.0);
  const double* cls_w = cl.data();
  const double* cls_b = cl.data() + static_cast<std::size_t>(Q) * F;
  for (int p = 0; p < P; ++p) {
    double* out = a.logits.values.data() + static_cast<std::size_t>(p) * Q;
    for (int q = 0; q < Q; ++q) out[q] = cls_b[q];
  }
  for (int f = 0; f < F; ++f) {
    const double* h = a.relu.data() + static_cast<std::size_t>(f) * P;
    for (int p = 0; p < P; ++p) {
      if (h[p] == 0.0) continue;
      double* out = a.logits.values.data() + static_cast<std::size_t>(p) * Q;
      for (int q = 0; q < Q; ++q) out[q] += cls_w[q * F + f] * h[p];
    }
  }
  return a;
}

// Backpropagates dL/dlogits (pixel-major) to every parameter group.
ParamSet run_backward(const ParamSet& params, const ImageTensor& img, const Activations& a,
                      const std::vector<double>& dlogits) {
  const auto& shape = params.shape;
  const int F = shape.features, C = shape.in_channels, Q = shape.classes;
  const int H = img.height, W = img.width, P = H * W;
  const auto& nm = params[ParamGroup::kNorm];
  const auto& cl = params[ParamGroup::kClassifier];

  ParamSet grad = ParamSet::zeros(shape);
  auto& g_cls = grad[ParamGroup::kClassifier];
  auto& g_nm = grad[ParamGroup::kNorm];
  auto& g_bb = grad[ParamGroup::kBackbone];

  for (int p = 0; p < P; ++p) {
    const double* d = dlogits.data() + static_cast<std::size_t>(p) * Q;
    for (int q = 0; q < Q; ++q) g_cls[static_cast<std::size_t>(Q) * F + q] += d[q];
  }

  std::vector<double> dconv(static_cast<std::size_t>(F) * P, 0.0);
  for (int f = 0; f < F; ++f) {
    const double* h = a.relu.data() + static_cast<std::size_t>(f) * P;
    const double* z = a.conv.data() + static_cast<std::size_t>(f) * P;
    double* dz = dconv.data() + static_cast<std::size_t>(f) * P;
    double g_scale = 0.0, g_shift = 0.0;
    for (int p = 0; p < P; ++p) {
      if (h[p] <= 0.0) continue;
      const double* d = dlogits.data() + static_cast<std::size_t>(p) * Q;
      double dh = 0.0;
      for (int q = 0; q < Q; ++q) {
        g_cls[q * F + f] += d[q] * h[p];
        dh += d[q] * cl[q * F + f];
      }
      g_scale += dh * z[p];
      g_shift += dh;
      dz[p] = dh * nm[f];
    }
    g_nm[f] = g_scale;
    g_nm[F + f] = g_shift;
  }

  double* g_kernel = g_bb.data();
  double* g_bias = g_bb.data() + static_cast<std::size_t>(F) * C * 9;
  for (int f = 0; f < F; ++f) {
    const double* dz = dconv.data() + static_cast<std::size_t>(f) * P;
    double s = 0.0;
    for (int p = 0; p < P; ++p) s += dz[p];
    g_bias[f] = s;
    for (int c = 0; c < C; ++c) {
      const double* in = img.values.data() + static_cast<std::size_t>(c) * P;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
          double acc = 0.0;
          for (int y = y0; y < y1; ++y) {
            const double* row = dz + y * W;
            const double* src = in + (y + dy) * W + dx;
            for (int x = x0; x < x1; ++x) acc += row[x] * src[x];
          }
          g_kernel[((f * C + c) * 3 + ky) * 3 + kx] = acc;
        }
      }
    }
  }
  return grad;
}

// Writes the softmax of `z` into `out` and returns log-sum-exp.
double softmax_row(std::span<const double> z, double* out) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : z) mx = std::max(mx, v);
  double s = 0.0;
  for (std::size_t q = 0; q < z.size(); ++q) {
    out[q] = std::exp(z[q] - mx);
    s += out[q];
  }
  for (std::size_t q = 0; q < z.size(); ++q) out[q] /= s;
  return mx + std::log(s);
}

void check_labels(const LabelMap& labels, const ImageTensor& img, int classes) {
  require(labels.height == img.height && labels.width == img.width &&
              labels.labels.size() == static_cast<std::size_t>(img.pixels()),
          "label map shape does not match the image");
  for (int l : labels.labels) {
    require(l == kIgnoreLabel || (l >= 0 && l < classes), "label out of range");
  }
}

void check_teacher(const Logits& teacher, const ImageTensor& img, int classes) {
  require(teacher.height == img.height && teacher.width == img.width &&
              teacher.classes == classes &&
              teacher.values.size() == static_cast<std::size_t>(img.pixels()) * classes,
          "teacher logits shape does not match the student");
}

// Accumulates CE (into dlogits, scaled by 1/count) and returns the mean loss.
double accumulate_ce(const Logits& logits, const LabelMap& labels, std::vector<double>& dlogits,
                     double weight) {
  const int Q = logits.classes, P = logits.pixels();
  int count = 0;
  for (int l : labels.labels) count += l != kIgnoreLabel;
  if (count == 0) return 0.0;
  const double inv = 1.0 / count;
  std::vector<double> prob(Q);
  double loss = 0.0;
  for (int p = 0; p < P; ++p) {
    const int y = labels.labels[p];
    if (y == kIgnoreLabel) continue;
    const auto z = logits.pixel(p);
    const double lse = softmax_row(z, prob.data());
    loss += lse - z[y];
    double* d = dlogits.data() + static_cast<std::size_t>(p) * Q;
    for (int q = 0; q < Q; ++q) d[q] += weight * inv * (prob[q] - (q == y ? 1.0 : 0.0));
  }
  return loss * inv;
}

double accumulate_kd(const Logits& logits, const Logits& teacher, std::vector<double>& dlogits,
                     double weight) {
  const int Q = logits.classes, P = logits.pixels();
  const double inv = 1.0 / P;
  std::vector<double> ps(Q), pt(Q);
  double loss = 0.0;
  for (int p = 0; p < P; ++p) {
    const auto z = logits.pixel(p);
    const double lse = softmax_row(z, ps.data());
    softmax_row(teacher.pixel(p), pt.data());
    double* d = dlogits.data() + static_cast<std::size_t>(p) * Q;
    for (int q = 0; q < Q; ++q) {
      loss -= pt[q] * (z[q] - lse);
      d[q] += weight * inv * (ps[q] - pt[q]);
    }
  }
  return loss * inv;
}

}  // namespace

Logits forward(const ParamSet& params, const ImageTensor& img) {
  check_input(params, img);
  return run_forward(params, img).logits;
}

std::vector<double> softmax(const Logits& logits) {
  std::vector<double> out(logits.values.size());
  for (int p = 0; p < logits.pixels(); ++p) {
    softmax_row(logits.pixel(p), out.data() + static_cast<std::size_t>(p) * logits.classes);
  }
  return out;
}

LabelMap argmax(const Logits& logits) {
  LabelMap out(logits.height, logits.width);
  for (int p = 0; p < logits.pixels(); ++p) {
    const auto z = logits.pixel(p);
    out.labels[p] = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
  }
  return out;
}

LossGrad ce_loss_grad(const ParamSet& params, const ImageTensor& img, const LabelMap& labels) {
  check_input(params, img);
  check_labels(labels, img, params.shape.classes);
  const Activations a = run_forward(params, img);
  std::vector<double> d(a.logits.values.size(), 0.0);
  LossGrad out;
  out.loss = accumulate_ce(a.logits, labels, d, 1.0);
  out.grad = run_backward(params, img, a, d);
  return out;
}

LossGrad kd_loss_grad(const ParamSet& params, const ImageTensor& img, const Logits& teacher) {
  check_input(params, img);
  check_teacher(teacher, img, params.shape.classes);
  const Activations a = run_forward(params, img);
  std::vector<double> d(a.logits.values.size(), 0.0);
  LossGrad out;
  out.loss = accumulate_kd(a.logits, teacher, d, 1.0);
  out.grad = run_backward(params, img, a, d);
  return out;
}

LocalLoss local_loss_grad(const ParamSet& params, const ImageTensor& img, const LabelMap& pseudo,
                          const Logits* kd_teacher, double kd_weight) {
  check_input(params, img);
  check_labels(pseudo, img, params.shape.classes);
  if (kd_teacher) check_teacher(*kd_teacher, img, params.shape.classes);
  const Activations a = run_forward(params, img);
  std::vector<double> d(a.logits.values.size(), 0.0);
  LocalLoss out;
  out.loss_pseudo = accumulate_ce(a.logits, pseudo, d, 1.0);
  if (kd_teacher && kd_weight != 0.0) {
    out.loss_kd = accumulate_kd(a.logits, *kd_teacher, d, kd_weight);
  }
  out.total = out.loss_pseudo + kd_weight * out.loss_kd;
  out.grad = run_backward(params, img, a, d);
  return out;
}

LabelMap pseudo_label(const Logits& teacher, double conf_threshold, double class_fraction) {
  require(conf_threshold > 0.0 && conf_threshold < 1.0, "conf_threshold must be in (0, 1)");
  require(class_fraction > 0.0 && class_fraction <= 1.0, "class_fraction must be in (0, 1]");
  const int Q = teacher.classes, P = teacher.pixels();
  const std::vector<double> prob = softmax(teacher);
  std::vector<int> label(P);
  std::vector<double> conf(P);
  std::vector<std::vector<double>> per_class(Q);
  for (int p = 0; p < P; ++p) {
    const double* row = prob.data() + static_cast<std::size_t>(p) * Q;
    const int q = static_cast<int>(std::max_element(row, row + Q) - row);
    label[p] = q;
    conf[p] = row[q];
    per_class[q].push_back(row[q]);
  }
  std::vector<double> tau(Q, conf_threshold);
  for (int q = 0; q < Q; ++q) {
    auto& v = per_class[q];
    if (v.empty()) continue;
    const auto idx = static_cast<std::size_t>(
        std::floor((1.0 - class_fraction) * static_cast<double>(v.size() - 1)));
    std::nth_element(v.begin(), v.begin() + idx, v.end());
    tau[q] = std::min(conf_threshold, v[idx]);
  }
  LabelMap out(teacher.height, teacher.width);
  for (int p = 0; p < P; ++p) out.labels[p] = conf[p] >= tau[label[p]] ? label[p] : kIgnoreLabel;
  return out;
}

void Sgd::step(ParamSet& params, const ParamSet& grad, double lr) {
  require(lr > 0.0, "learning rate must be positive");
  require(grad.present() == params.present(), "sgd: gradient groups differ from parameters");
  if (velocity_.present() != params.present() || !(velocity_.shape == params.shape)) {
    velocity_ = ParamSet::zeros(params.shape, params.present());
  }
  for (auto g : kAllGroups) {
    if (!params.has(g)) continue;
    auto& v = velocity_[g];
    auto& p = params[g];
    const auto& d = grad[g];
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = momentum_ * v[i] + d[i];
      p[i] -= lr * v[i];
    }
  }
}

}  // namespace fedstyle
