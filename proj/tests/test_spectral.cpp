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

#include <sstream>

#include "doctest.h"
#include "fedstyle/error.hpp"
#include "fedstyle/spectral.hpp"
#include "oracles.hpp"

using namespace fedstyle;

namespace {

double max_abs(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("fft2 matches the direct DFT in centered layout") {
  Rng rng(11);
  for (auto [h, w] : {std::pair{4, 4}, {5, 7}, {8, 6}, {9, 9}}) {
    const ImageTensor img = oracle::random_image(rng, h, w, 2);
    const Spectrum s = fft2(img);
    for (int c = 0; c < 2; ++c) {
      const auto ref = oracle::dft_centered(img, c);
      for (int r = 0; r < h; ++r) {
        for (int col = 0; col < w; ++col) {
          const auto z = ref[static_cast<std::size_t>(r) * w + col];
          const auto i = s.index(c, r, col);
          CHECK(std::abs(s.amplitude[i] - std::abs(z)) < 1e-10);
          const auto got = std::polar(s.amplitude[i], s.phase[i]);
          CHECK(std::abs(got - z) < 1e-10);
        }
      }
    }
  }
}

TEST_CASE("constant image has all energy in the zero-frequency bin") {
  ImageTensor img(6, 8, 1, 0.25);
  const Spectrum s = fft2(img);
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 8; ++c) {
      const double expected = (r == 3 && c == 4) ? 0.25 * 48 : 0.0;
      CHECK(s.amplitude[s.index(0, r, c)] == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("round trip and Parseval on seeded images") {
  Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const int h = rng.range(2, 33), w = rng.range(2, 33), ch = rng.range(1, 3);
    const ImageTensor img = oracle::random_image(rng, h, w, ch);
    const Spectrum s = fft2(img);
    CHECK(max_abs(ifft2(s).values, img.values) < 1e-9);
    double spatial = 0.0, freq = 0.0;
    for (double v : img.values) spatial += v * v;
    for (double a : s.amplitude) freq += a * a;
    freq /= static_cast<double>(h) * w;
    CHECK(std::abs(spatial - freq) / spatial < 1e-9);
  }
}

TEST_CASE("ifft2 rejects spectra of non-real images") {
  ImageTensor img(4, 4, 1, 0.5);
  Spectrum s = fft2(img);
  s.amplitude[s.index(0, 2, 3)] = 1.0;  // break conjugate symmetry
  s.phase[s.index(0, 2, 3)] = 0.3;
  CHECK_THROWS_AS(ifft2(s), InvalidArgument);
}

TEST_CASE("ifft2 clamp clips to the unit interval") {
  ImageTensor img(4, 4, 1, 0.5);
  img.at(0, 1, 1) = 1.0;
  Spectrum s = fft2(img);
  for (double& a : s.amplitude) a *= 3.0;
  const ImageTensor out = ifft2(s, true);
  for (double v : out.values) CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("extract_style reads the centered amplitude window") {
  Rng rng(5);
  const ImageTensor img = oracle::random_image(rng, 7, 10, 3);
  const Style st = extract_style(img, 3);
  CHECK(st.channels == 3);
  CHECK(st.window == 3);
  REQUIRE(st.values.size() == 27);
  for (int c = 0; c < 3; ++c) {
    const auto ref = oracle::dft_centered(img, c);
    for (int r = 0; r < 3; ++r) {
      for (int col = 0; col < 3; ++col) {
        const auto z = ref[static_cast<std::size_t>(3 + r - 1) * 10 + (5 + col - 1)];
        CHECK(st.values[st.index(c, r, col)] == doctest::Approx(std::abs(z)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("extract_style window 1 is the per-channel DC magnitude") {
  ImageTensor img(4, 4, 2);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      img.at(0, y, x) = 0.1 * (y + x);
      img.at(1, y, x) = 0.5;
    }
  const Style st = extract_style(img, 1);
  CHECK(st.values[0] == doctest::Approx(0.1 * 48).epsilon(1e-12));
  CHECK(st.values[1] == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("extract_style argument errors") {
  ImageTensor img(8, 8, 1, 0.1);
  CHECK_THROWS_AS(extract_style(img, 2), InvalidArgument);
  CHECK_THROWS_AS(extract_style(img, 0), InvalidArgument);
  CHECK_THROWS_AS(extract_style(img, 9), InvalidArgument);
  ImageTensor bad(8, 8, 1, 0.1);
  bad.values[3] = std::nan("");
  CHECK_THROWS_AS(extract_style(bad, 3), InvalidArgument);
}

TEST_CASE("apply_style contracts against the direct DFT") {
  Rng rng(17);
  const int h = 9, w = 8, win = 3;
  const ImageTensor src = oracle::random_image(rng, h, w, 2);
  const ImageTensor ref = oracle::random_image(rng, h, w, 2);
  const Style st = extract_style(ref, win);
  const ImageTensor out = apply_style(src, st);
  for (int c = 0; c < 2; ++c) {
    const auto before = oracle::dft_centered(src, c);
    const auto after = oracle::dft_centered(out, c);
    const auto target = oracle::dft_centered(ref, c);
    for (int r = 0; r < h; ++r) {
      for (int col = 0; col < w; ++col) {
        const auto i = static_cast<std::size_t>(r) * w + col;
        const bool in_window = std::abs(r - h / 2) <= 1 && std::abs(col - w / 2) <= 1;
        const double amp = in_window ? std::abs(target[i]) : std::abs(before[i]);
        CHECK(std::abs(std::abs(after[i]) - amp) < 1e-9);
        if (std::abs(before[i]) > 1e-6 && amp > 1e-6) {
          CHECK(std::abs(std::arg(after[i] / before[i])) < 1e-8);
        }
      }
    }
  }
}

TEST_CASE("apply_style is idempotent and self-consistent") {
  Rng rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const int h = rng.range(8, 20), w = rng.range(8, 20);
    const ImageTensor a = oracle::random_image(rng, h, w, 3);
    const ImageTensor b = oracle::random_image(rng, h, w, 3);
    const Style st = extract_style(b, 5);
    const ImageTensor once = apply_style(a, st);
    const ImageTensor twice = apply_style(once, st);
    CHECK(max_abs(once.values, twice.values) < 1e-9);
    CHECK(max_abs(extract_style(once, 5).values, st.values) < 1e-9);
    CHECK(max_abs(apply_style(a, extract_style(a, 5)).values, a.values) < 1e-9);
  }
}

TEST_CASE("apply_style rejects mismatched shapes") {
  ImageTensor img(8, 8, 3, 0.2);
  Style st = extract_style(ImageTensor(8, 8, 1, 0.2), 3);
  CHECK_THROWS_AS(apply_style(img, st), InvalidArgument);
  Style wide = extract_style(ImageTensor(16, 16, 3, 0.2), 11);
  CHECK_THROWS_AS(apply_style(img, wide), InvalidArgument);
}

TEST_CASE("mean_style averages elementwise") {
  Rng rng(2);
  std::vector<Style> styles;
  for (int i = 0; i < 4; ++i) styles.push_back(extract_style(oracle::random_image(rng, 8, 8, 2), 3));
  const Style m = mean_style(styles);
  for (std::size_t j = 0; j < m.values.size(); ++j) {
    double s = 0.0;
    for (const auto& st : styles) s += st.values[j];
    CHECK(m.values[j] == doctest::Approx(s / 4).epsilon(1e-14));
  }
  CHECK_THROWS_AS(mean_style(std::span<const Style>{}), InvalidArgument);
  styles.push_back(extract_style(oracle::random_image(rng, 8, 8, 2), 5));
  CHECK_THROWS_AS(mean_style(styles), InvalidArgument);
}

TEST_CASE("style record round trip and corruption") {
  Rng rng(8);
  const Style st = extract_style(oracle::random_image(rng, 10, 10, 3), 3);
  std::stringstream buf;
  write_style(buf, st);
  CHECK(buf.str().size() == 12 + 27 * 8);
  const Style back = read_style(buf);
  CHECK(back.values == st.values);
  CHECK(back.channels == 3);
  CHECK(back.window == 3);

  std::string bytes;
  {
    std::stringstream b;
    write_style(b, st);
    bytes = b.str();
  }
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_style(truncated), FormatError);
  std::string flagged = bytes;
  flagged[8] = 1;
  std::stringstream bad(flagged);
  CHECK_THROWS_AS(read_style(bad), FormatError);
}
