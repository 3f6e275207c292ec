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
#include <vector>

#include "fedstyle/image.hpp"

namespace fedstyle {

// Rows are ground truth, columns predictions. Ignored ground-truth pixels are
// skipped.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes);

  void add(int truth, int pred);
  void add(const LabelMap& truth, const LabelMap& pred);

  int classes() const { return classes_; }
  std::uint64_t at(int truth, int pred) const { return counts_[truth * classes_ + pred]; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }

  // NaN when the class never occurs in truth or prediction.
  double iou(int cls) const;
  std::vector<double> per_class_iou() const;
  // Mean over classes with a defined IoU; NaN if none.
  double miou() const;

 private:
  int classes_;
  std::vector<std::uint64_t> counts_;
};

}  // namespace fedstyle
