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

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fedstyle/clustering.hpp"
#include "fedstyle/config.hpp"
#include "fedstyle/error.hpp"
#include "fedstyle/experiment.hpp"
#include "fedstyle/spectral.hpp"
#include "fedstyle/synthdata.hpp"

namespace py = pybind11;
using namespace fedstyle;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

ImageTensor to_image(const Array& a) {
  if (a.ndim() != 3) throw InvalidArgument("image must have shape (channels, height, width)");
  ImageTensor img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)),
                  static_cast<int>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), img.values.begin());
  return img;
}

Array from_values(const std::vector<double>& v, std::vector<py::ssize_t> shape) {
  Array out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

Array from_image(const ImageTensor& img) {
  return from_values(img.values, {img.channels, img.height, img.width});
}

Style to_style(const Array& a) {
  if (a.ndim() != 3 || a.shape(1) != a.shape(2)) {
    throw InvalidArgument("style must have shape (channels, window, window)");
  }
  Style s{static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
          std::vector<double>(a.data(), a.data() + a.size())};
  validate(s);
  return s;
}

Array from_style(const Style& s) { return from_values(s.values, {s.channels, s.window, s.window}); }

std::vector<StylePoint> to_points(const Array& pts) {
  if (pts.ndim() != 2) throw InvalidArgument("points must have shape (clients, dims)");
  std::vector<StylePoint> out;
  const auto d = pts.shape(1);
  for (py::ssize_t i = 0; i < pts.shape(0); ++i)
    out.push_back({static_cast<int>(i), std::vector<double>(pts.data(i, 0), pts.data(i, 0) + d)});
  return out;
}

py::dict partition_dict(const ClusterPartition& p) {
  py::dict d;
  d["labels"] = p.labels;
  d["centroids"] = p.centroids;
  d["silhouette"] = p.silhouette;
  d["num_clusters"] = p.num_clusters();
  return d;
}

}  // namespace

PYBIND11_MODULE(_fedstyle, m) {
  m.doc() = "Spectral styles, style clustering and the federated adaptation simulator";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

  m.def("fft2", [](const Array& img) {
    const Spectrum s = fft2(to_image(img));
    return py::make_tuple(from_values(s.amplitude, {s.channels, s.height, s.width}),
                          from_values(s.phase, {s.channels, s.height, s.width}));
  }, py::arg("image"), "Centered amplitude and phase spectra, each (channels, height, width).");

  m.def("ifft2", [](const Array& amplitude, const Array& phase, bool clamp) {
    const ImageTensor shape = to_image(amplitude);
    if (phase.size() != amplitude.size()) throw InvalidArgument("amplitude and phase shapes differ");
    Spectrum s{shape.height, shape.width, shape.channels, shape.values,
               std::vector<double>(phase.data(), phase.data() + phase.size())};
    return from_image(ifft2(s, clamp));
  }, py::arg("amplitude"), py::arg("phase"), py::arg("clamp") = false);

  m.def("extract_style", [](const Array& img, int window) {
    return from_style(extract_style(to_image(img), window));
  }, py::arg("image"), py::arg("window"));

  m.def("apply_style", [](const Array& img, const Array& style, bool clamp) {
    return from_image(apply_style(to_image(img), to_style(style), clamp));
  }, py::arg("image"), py::arg("style"), py::arg("clamp") = false);

  m.def("mean_style", [](const std::vector<Array>& styles) {
    std::vector<Style> s;
    for (const auto& a : styles) s.push_back(to_style(a));
    return from_style(mean_style(s));
  }, py::arg("styles"));

  m.def("silhouette", [](const Array& points, const std::vector<int>& labels) {
    return silhouette(make_partition(to_points(points), labels));
  }, py::arg("points"), py::arg("labels"));

  m.def("kmeans", [](const Array& points, int h, std::uint64_t seed) {
    return partition_dict(kmeans(to_points(points), h, seed));
  }, py::arg("points"), py::arg("h"), py::arg("seed") = 0);

  m.def("select_clustering", [](const Array& points, std::uint64_t seed, int m_, int n, int runs) {
    const auto pts = to_points(points);
    SelectionParams p = default_selection(static_cast<int>(pts.size()), seed);
    if (m_ > 0) p.m = m_;
    if (n > 0) p.n = n;
    if (runs > 0) p.runs = runs;
    return partition_dict(select_clustering(pts, p));
  }, py::arg("points"), py::arg("seed") = 0, py::arg("m") = 0, py::arg("n") = 0,
     py::arg("runs") = 0, "Cluster-count search; zero keeps the default for m, n and runs.");

  m.def("default_config", [] { return to_text(ExperimentConfig{}); });
  m.def("normalize_config", [](const std::string& text) { return to_text(parse_config(text)); },
        py::arg("text"), "Parses a config and returns its canonical text.");

  m.def("run_experiment", [](const std::string& text, const std::string& out,
                             const std::vector<std::uint64_t>& seeds) {
    ExperimentConfig cfg = parse_config(text);
    cfg.out_dir = out;
    if (!seeds.empty()) cfg.seeds = seeds;
    validate(cfg);
    ExperimentResult r;
    {
      py::gil_scoped_release release;
      r = run_experiment(cfg);
    }
    if (!r.ok) throw std::runtime_error(r.error);
    return summary_to_json(r.summary, cfg);
  }, py::arg("config"), py::arg("out"), py::arg("seeds") = std::vector<std::uint64_t>{},
     "Runs every seed and returns summary.json as text.");

  m.def("export_world", [](const std::string& text, std::uint64_t seed, const std::string& out) {
    const ExperimentConfig cfg = parse_config(text);
    export_world(gen_world(cfg.world, seed), out);
  }, py::arg("config"), py::arg("seed"), py::arg("out"));
}
