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
#include <iosfwd>
#include <span>
#include <vector>

#include "fedstyle/image.hpp"

namespace fedstyle {

// Per-channel 2-D spectrum in centered layout: the zero-frequency bin of a
// height x width plane sits at row height / 2, column width / 2 (integer
// division), i.e. the usual fftshift convention. Bins are stored like
// ImageTensor values (channel-major, then row-major).
struct Spectrum {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> amplitude;  // >= 0
  std::vector<double> phase;      // radians in (-pi, pi]

  std::size_t index(int c, int row, int col) const {
    return (static_cast<std::size_t>(c) * height + row) * width + col;
  }
};

// Low-frequency amplitude window of side `window` (odd) centered on the
// zero-frequency bin. values are channel-major, then row-major within the
// window; this order is part of the serialized format.
struct Style {
  int channels = 0;
  int window = 0;
  std::vector<double> values;

  std::size_t index(int c, int row, int col) const {
    return (static_cast<std::size_t>(c) * window + row) * window + col;
  }
  bool same_shape(const Style& o) const {
    return channels == o.channels && window == o.window;
  }
};

void validate(const Style& style);

Spectrum fft2(const ImageTensor& img);

// Inverse of fft2. Throws InvalidArgument if the imaginary residue of the
// inverse exceeds 1e-8 (the spectrum is not that of a real image). When
// `clamp` is set the output is clipped to [0, 1].
ImageTensor ifft2(const Spectrum& spec, bool clamp = false);

Style extract_style(const ImageTensor& img, int window);
Style extract_style(const Spectrum& spec, int window);

Style mean_style(std::span<const Style> styles);

// Replaces the centered window of img's amplitude spectrum by `style`,
// keeping phase and every other amplitude bin.
ImageTensor apply_style(const ImageTensor& img, const Style& style,
                        bool clamp = false);

// Binary record: u32 channels, u32 window, u32 flags (reserved, 0), then
// channels * window^2 little-endian f64 values.
void write_style(std::ostream& out, const Style& style);
Style read_style(std::istream& in);

}  // namespace fedstyle
