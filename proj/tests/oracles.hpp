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

// Independent reference implementations used by the tests. These are the
// slow, direct formulas; they share no code with the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <numbers>
#include <vector>

#include "fedstyle/image.hpp"
#include "fedstyle/rng.hpp"

namespace oracle {

using cd = std::complex<double>;

// Direct O(N^4) DFT of one channel, output in centered layout: bin (r, c)
// holds frequency (r - H/2, c - W/2).
inline std::vector<cd> dft_centered(const fedstyle::ImageTensor& img, int channel) {
  const int h = img.height, w = img.width;
  std::vector<cd> out(static_cast<std::size_t>(h) * w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int u = r - h / 2, v = c - w / 2;
      cd acc = 0.0;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double ang = -2.0 * std::numbers::pi *
                             (static_cast<double>(u) * y / h + static_cast<double>(v) * x / w);
          acc += img.at(channel, y, x) * cd(std::cos(ang), std::sin(ang));
        }
      }
      out[static_cast<std::size_t>(r) * w + c] = acc;
    }
  }
  return out;
}

// Direct inverse DFT of a centered spectrum; returns the real part and the
// largest imaginary magnitude.
inline std::vector<double> idft_centered(const std::vector<cd>& spec, int h, int w,
                                         double* max_imag = nullptr) {
  std::vector<double> out(static_cast<std::size_t>(h) * w);
  double mi = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      cd acc = 0.0;
      for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
          const int u = r - h / 2, v = c - w / 2;
          const double ang = 2.0 * std::numbers::pi *
                             (static_cast<double>(u) * y / h + static_cast<double>(v) * x / w);
          acc += spec[static_cast<std::size_t>(r) * w + c] * cd(std::cos(ang), std::sin(ang));
        }
      }
      acc /= static_cast<double>(h) * w;
      out[static_cast<std::size_t>(y) * w + x] = acc.real();
      mi = std::max(mi, std::abs(acc.imag()));
    }
  }
  if (max_imag) *max_imag = mi;
  return out;
}

inline fedstyle::ImageTensor random_image(fedstyle::Rng& rng, int h, int w, int c) {
  fedstyle::ImageTensor img(h, w, c);
  for (double& v : img.values) v = rng.uniform();
  return img;
}

inline double dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Brute-force silhouette pieces over explicit (point, label) lists.
inline double intra(const std::vector<std::vector<double>>& pts, const std::vector<int>& lab,
                    std::size_t i) {
  double s = 0.0;
  int n = 0;
  for (std::size_t j = 0; j < pts.size(); ++j) {
    if (j != i && lab[j] == lab[i]) {
      s += dist(pts[i], pts[j]);
      ++n;
    }
  }
  return n ? s / n : 0.0;
}

inline double inter(const std::vector<std::vector<double>>& pts, const std::vector<int>& lab,
                    std::size_t i) {
  std::map<int, std::pair<double, int>> acc;
  for (std::size_t j = 0; j < pts.size(); ++j) {
    if (lab[j] != lab[i]) {
      acc[lab[j]].first += dist(pts[i], pts[j]);
      acc[lab[j]].second += 1;
    }
  }
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [k, v] : acc) best = std::min(best, v.first / v.second);
  return best;
}

inline double silhouette(const std::vector<std::vector<double>>& pts, const std::vector<int>& lab) {
  std::map<int, int> size;
  for (int l : lab) ++size[l];
  double total = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (size[lab[i]] == 1) continue;  // singleton: s = 0
    const double a = intra(pts, lab, i), b = inter(pts, lab, i);
    const double m = std::max(a, b);
    total += m > 0.0 ? (b - a) / m : 0.0;
  }
  return total / static_cast<double>(pts.size());
}

}  // namespace oracle
