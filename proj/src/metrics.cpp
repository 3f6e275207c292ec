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

#include "fedstyle/metrics.hpp"

#include <cmath>
#include <limits>

#include "fedstyle/error.hpp"

namespace fedstyle {

ConfusionMatrix::ConfusionMatrix(int classes)
    : classes_(classes), counts_(static_cast<std::size_t>(classes) * classes, 0) {
  require(classes >= 1, "confusion matrix needs at least one class");
}

void ConfusionMatrix::add(int truth, int pred) {
  if (truth == kIgnoreLabel) return;
  require(truth >= 0 && truth < classes_ && pred >= 0 && pred < classes_,
          "confusion matrix: class index out of range");
  ++counts_[truth * classes_ + pred];
}

void ConfusionMatrix::add(const LabelMap& truth, const LabelMap& pred) {
  require(truth.labels.size() == pred.labels.size(), "confusion matrix: label map size mismatch");
  for (std::size_t i = 0; i < truth.labels.size(); ++i) add(truth.labels[i], pred.labels[i]);
}

double ConfusionMatrix::iou(int cls) const {
  std::uint64_t row = 0, col = 0;
  for (int j = 0; j < classes_; ++j) {
    row += at(cls, j);
    col += at(j, cls);
  }
  const std::uint64_t tp = at(cls, cls);
  const std::uint64_t uni = row + col - tp;
  if (uni == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(tp) / static_cast<double>(uni);
}

std::vector<double> ConfusionMatrix::per_class_iou() const {
  std::vector<double> out(classes_);
  for (int q = 0; q < classes_; ++q) out[q] = iou(q);
  return out;
}

double ConfusionMatrix::miou() const {
  double s = 0.0;
  int n = 0;
  for (int q = 0; q < classes_; ++q) {
    const double v = iou(q);
    if (std::isnan(v)) continue;
    s += v;
    ++n;
  }
  return n ? s / n : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace fedstyle
