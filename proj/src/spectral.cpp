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

#include "fedstyle/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>
#include <utility>

#include "binary_io.hpp"

namespace fedstyle {

void validate(const ImageTensor& img) {
  require(img.height >= 2 && img.width >= 2,
          "image must be at least 2x2, got " + std::to_string(img.height) + "x" +
              std::to_string(img.width));
  require(img.channels >= 1, "image must have at least one channel");
  require(img.values.size() == static_cast<std::size_t>(img.height) * img.width * img.channels,
          "image payload size does not match its shape");
  for (double v : img.values) require(std::isfinite(v), "image contains non-finite values");
}

void validate(const Style& style) {
  require(style.channels >= 1, "style must have at least one channel");
  require(style.window >= 1 && style.window % 2 == 1, "style window must be odd and >= 1");
  require(style.values.size() ==
              static_cast<std::size_t>(style.channels) * style.window * style.window,
          "style payload size does not match channels * window^2");
  for (double v : style.values) {
    require(std::isfinite(v) && v >= 0.0, "style values must be finite and non-negative");
  }
}

namespace {

struct FftwFree {
  void operator()(fftw_complex* p) const { fftw_free(p); }
};
using Buffer = std::unique_ptr<fftw_complex[], FftwFree>;

Buffer make_buffer(std::size_t n) {
  return Buffer(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n)));
}

// FFTW planning is not thread-safe; execution through the new-array interface
// is. Plans are built once per (height, width) on fftw_malloc'd scratch, so
// every later buffer from make_buffer satisfies the planner's alignment.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  std::pair<fftw_plan, fftw_plan> get(int h, int w) {
    std::lock_guard lock(mu_);
    auto it = plans_.find({h, w});
    if (it != plans_.end()) return it->second;
    Buffer a = make_buffer(static_cast<std::size_t>(h) * w);
    Buffer b = make_buffer(static_cast<std::size_t>(h) * w);
    fftw_plan fwd = fftw_plan_dft_2d(h, w, a.get(), b.get(), FFTW_FORWARD, FFTW_ESTIMATE);
    fftw_plan bwd = fftw_plan_dft_2d(h, w, a.get(), b.get(), FFTW_BACKWARD, FFTW_ESTIMATE);
    return plans_.emplace(std::pair{h, w}, std::pair{fwd, bwd}).first->second;
  }

  ~PlanCache() {
    for (auto& [key, p] : plans_) {
      fftw_destroy_plan(p.first);
      fftw_destroy_plan(p.second);
    }
  }

 private:
  std::mutex mu_;
  std::map<std::pair<int, int>, std::pair<fftw_plan, fftw_plan>> plans_;
};

int centered(int k, int n) { return (k + n / 2) % n; }

double wrap_phase(double p) { return p <= -std::numbers::pi ? std::numbers::pi : p; }

// Row/column of the first window bin in centered layout.
std::pair<int, int> window_origin(int height, int width, int window) {
  return {height / 2 - window / 2, width / 2 - window / 2};
}

void check_window(int height, int width, int window) {
  require(window >= 1 && window % 2 == 1,
          "style window must be odd and >= 1, got " + std::to_string(window));
  require(window <= std::min(height, width),
          "style window " + std::to_string(window) + " exceeds image size " +
              std::to_string(height) + "x" + std::to_string(width));
}

}  // namespace

Spectrum fft2(const ImageTensor& img) {
  validate(img);
  const int h = img.height, w = img.width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  auto [fwd, bwd] = PlanCache::instance().get(h, w);
  (void)bwd;
  Buffer in = make_buffer(plane), out = make_buffer(plane);

  Spectrum spec{h, w, img.channels, std::vector<double>(img.values.size()),
                std::vector<double>(img.values.size())};
  for (int c = 0; c < img.channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      in[i][0] = img.values[c * plane + i];
      in[i][1] = 0.0;
    }
    fftw_execute_dft(fwd, in.get(), out.get());
    for (int ky = 0; ky < h; ++ky) {
      for (int kx = 0; kx < w; ++kx) {
        const std::complex<double> z(out[ky * w + kx][0], out[ky * w + kx][1]);
        const std::size_t dst = spec.index(c, centered(ky, h), centered(kx, w));
        spec.amplitude[dst] = std::abs(z);
        spec.phase[dst] = wrap_phase(std::arg(z));
      }
    }
  }
  return spec;
}

ImageTensor ifft2(const Spectrum& spec, bool clamp) {
  const int h = spec.height, w = spec.width;
  require(h >= 2 && w >= 2 && spec.channels >= 1, "spectrum has invalid shape");
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  require(spec.amplitude.size() == plane * spec.channels &&
              spec.phase.size() == spec.amplitude.size(),
          "spectrum payload size does not match its shape");
  auto [fwd, bwd] = PlanCache::instance().get(h, w);
  (void)fwd;
  Buffer in = make_buffer(plane), out = make_buffer(plane);

  ImageTensor img(h, w, spec.channels);
  const double scale = 1.0 / static_cast<double>(plane);
  for (int c = 0; c < spec.channels; ++c) {
    for (int ky = 0; ky < h; ++ky) {
      for (int kx = 0; kx < w; ++kx) {
        const std::size_t src = spec.index(c, centered(ky, h), centered(kx, w));
        const auto z = std::polar(spec.amplitude[src], spec.phase[src]);
        in[ky * w + kx][0] = z.real();
        in[ky * w + kx][1] = z.imag();
      }
    }
    fftw_execute_dft(bwd, in.get(), out.get());
    double max_real = 0.0, max_imag = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      max_real = std::max(max_real, std::abs(out[i][0] * scale));
      max_imag = std::max(max_imag, std::abs(out[i][1] * scale));
    }
    if (max_imag >= 1e-8 * std::max(1.0, max_real)) {
      throw InvalidArgument("inverse transform has imaginary residue " +
                            std::to_string(max_imag) + "; spectrum is not Hermitian");
    }
    for (std::size_t i = 0; i < plane; ++i) {
      double v = out[i][0] * scale;
      if (clamp) v = std::clamp(v, 0.0, 1.0);
      img.values[c * plane + i] = v;
    }
  }
  return img;
}

Style extract_style(const Spectrum& spec, int window) {
  check_window(spec.height, spec.width, window);
  const auto [r0, c0] = window_origin(spec.height, spec.width, window);
  Style style{spec.channels, window,
              std::vector<double>(static_cast<std::size_t>(spec.channels) * window * window)};
  for (int c = 0; c < spec.channels; ++c)
    for (int r = 0; r < window; ++r)
      for (int q = 0; q < window; ++q)
        style.values[style.index(c, r, q)] = spec.amplitude[spec.index(c, r0 + r, c0 + q)];
  return style;
}

Style extract_style(const ImageTensor& img, int window) {
  validate(img);
  check_window(img.height, img.width, window);
  return extract_style(fft2(img), window);
}

Style mean_style(std::span<const Style> styles) {
  require(!styles.empty(), "mean_style needs at least one style");
  Style mean = styles.front();
  validate(mean);
  for (std::size_t i = 1; i < styles.size(); ++i) {
    require(styles[i].same_shape(mean), "mean_style: heterogeneous style shapes");
    require(styles[i].values.size() == mean.values.size(), "mean_style: malformed style");
    for (std::size_t j = 0; j < mean.values.size(); ++j) mean.values[j] += styles[i].values[j];
  }
  const double inv = 1.0 / static_cast<double>(styles.size());
  for (double& v : mean.values) v *= inv;
  return mean;
}

ImageTensor apply_style(const ImageTensor& img, const Style& style, bool clamp) {
  validate(img);
  validate(style);
  require(style.channels == img.channels, "style channel count does not match image");
  check_window(img.height, img.width, style.window);
  Spectrum spec = fft2(img);
  const auto [r0, c0] = window_origin(spec.height, spec.width, style.window);
  for (int c = 0; c < spec.channels; ++c)
    for (int r = 0; r < style.window; ++r)
      for (int q = 0; q < style.window; ++q)
        spec.amplitude[spec.index(c, r0 + r, c0 + q)] = style.values[style.index(c, r, q)];
  return ifft2(spec, clamp);
}

void write_style(std::ostream& out, const Style& style) {
  validate(style);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(style.channels));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(style.window));
  detail::put<std::uint32_t>(out, 0u);
  for (double v : style.values) detail::put_f64(out, v);
}

Style read_style(std::istream& in) {
  Style style;
  style.channels = static_cast<int>(detail::get<std::uint32_t>(in, "style channels"));
  style.window = static_cast<int>(detail::get<std::uint32_t>(in, "style window"));
  const auto flags = detail::get<std::uint32_t>(in, "style flags");
  if (flags != 0) throw FormatError("unsupported style flags " + std::to_string(flags));
  if (style.channels < 1 || style.channels > 64 || style.window < 1 || style.window > 255 ||
      style.window % 2 == 0) {
    throw FormatError("style header out of range");
  }
  style.values.resize(static_cast<std::size_t>(style.channels) * style.window * style.window);
  for (double& v : style.values) v = detail::get_f64(in, "style values");
  try {
    validate(style);
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what());
  }
  return style;
}

}  // namespace fedstyle
