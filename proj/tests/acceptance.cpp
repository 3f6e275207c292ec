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

// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// non-zero when any selected criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedstyle/clustering.hpp"
#include "fedstyle/config.hpp"
#include "fedstyle/experiment.hpp"
#include "fedstyle/federation.hpp"
#include "fedstyle/model.hpp"
#include "fedstyle/spectral.hpp"
#include "fedstyle/synthdata.hpp"
#include "oracles.hpp"

using namespace fedstyle;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double max_abs(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ---------------------------------------------------------------------------
// 1. Spectral oracles on 100 images of 8..32 px.

Outcome spectral_suite() {
  double roundtrip = 0.0, parseval = 0.0, contract = 0.0, dft = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(derive_seed(1, {seed}));
    const int h = rng.range(8, 32), w = rng.range(8, 32), ch = 3;
    const int win = 2 * rng.range(0, 2) + 1;
    const ImageTensor img = oracle::random_image(rng, h, w, ch);
    const ImageTensor ref = oracle::random_image(rng, h, w, ch);

    const Spectrum spec = fft2(img);
    roundtrip = std::max(roundtrip, max_abs(ifft2(spec).values, img.values));

    double energy = 0.0, spec_energy = 0.0;
    for (double v : img.values) energy += v * v;
    for (double a : spec.amplitude) spec_energy += a * a;
    spec_energy /= static_cast<double>(h) * w;
    parseval = std::max(parseval, std::abs(energy - spec_energy) / energy);

    // Window bins against a direct DFT.
    const Style st = extract_style(img, win);
    const int r = win / 2;
    for (int c = 0; c < ch; ++c) {
      for (int du = -r; du <= r; ++du) {
        for (int dv = -r; dv <= r; ++dv) {
          std::complex<double> acc = 0.0;
          for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
              const double ang = -2.0 * std::numbers::pi *
                                 (static_cast<double>(du) * y / h + static_cast<double>(dv) * x / w);
              acc += img.at(c, y, x) * std::polar(1.0, ang);
            }
          dft = std::max(dft, std::abs(std::abs(acc) - st.values[st.index(c, du + r, dv + r)]));
        }
      }
    }

    // apply_style: window amplitude replaced, phase and outer amplitude kept.
    const Style target = extract_style(ref, win);
    const ImageTensor out = apply_style(img, target);
    contract = std::max(contract, max_abs(extract_style(out, win).values, target.values));
    contract = std::max(contract, max_abs(apply_style(img, st).values, img.values));
    const Spectrum after = fft2(out);
    for (int c = 0; c < ch; ++c) {
      for (int row = 0; row < h; ++row) {
        for (int col = 0; col < w; ++col) {
          const std::size_t i = spec.index(c, row, col);
          const bool inside = std::abs(row - h / 2) <= r && std::abs(col - w / 2) <= r;
          const double amp =
              inside ? target.values[target.index(c, row - h / 2 + r, col - w / 2 + r)]
                     : spec.amplitude[i];
          const auto expect = std::polar(amp, spec.phase[i]);
          const auto got = std::polar(after.amplitude[i], after.phase[i]);
          contract = std::max(contract, std::abs(got - expect));
        }
      }
    }
  }
  const bool ok = roundtrip < 1e-9 && parseval < 1e-9 && contract < 1e-9 && dft < 1e-9;
  return {ok, fmt("round-trip %.2e, Parseval %.2e, contracts %.2e, window vs DFT %.2e (limit 1e-9)",
                  roundtrip, parseval, contract, dft)};
}

// ---------------------------------------------------------------------------
// 2. Clustering oracles and planted-blob recovery.

std::vector<int> labels_by_id(const ClusterPartition& p) { return p.labels; }

bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j)
      if ((a[i] == a[j]) != (b[i] == b[j])) return false;
  return a.size() == b.size();
}

Outcome clustering_suite() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(derive_seed(2, {seed}));
    const int n = rng.range(3, 12), dim = rng.range(1, 5), h = rng.range(2, n - 1);
    std::vector<StylePoint> pts;
    std::vector<std::vector<double>> raw;
    std::vector<int> lab(n);
    for (int i = 0; i < n; ++i) {
      std::vector<double> v(dim);
      for (double& x : v) x = rng.uniform(-1.0, 1.0);
      raw.push_back(v);
      pts.push_back({i, v});
      lab[i] = i < h ? i : rng.range(0, h - 1);  // every label used
    }
    const ClusterPartition part = make_partition(pts, lab);
    for (int i = 0; i < n; ++i) {
      worst = std::max(worst, std::abs(intra_cluster_dist(part, i) - oracle::intra(raw, lab, i)));
      worst = std::max(worst, std::abs(inter_cluster_dist(part, i) - oracle::inter(raw, lab, i)));
    }
    worst = std::max(worst, std::abs(silhouette(part) - oracle::silhouette(raw, lab)));
  }

  int recovered = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(3, {seed}));
    const int k = 4, per = 5, dim = 6;
    std::vector<StylePoint> pts;
    std::vector<int> planted;
    for (int c = 0; c < k; ++c) {
      std::vector<double> center(dim);
      for (double& x : center) x = rng.uniform(-1.0, 1.0);
      center[c] += 10.0;
      for (int i = 0; i < per; ++i) {
        std::vector<double> v = center;
        for (double& x : v) x += 0.2 * rng.normal();
        pts.push_back({static_cast<int>(pts.size()), v});
        planted.push_back(c);
      }
    }
    const auto part = select_clustering(pts, default_selection(k * per, seed));
    if (part.num_clusters() == k && same_partition(labels_by_id(part), planted)) ++recovered;
  }
  return {worst <= 1e-12 && recovered == 20,
          fmt("max |lib - brute force| %.2e (limit 1e-12), planted blobs recovered %d/20", worst,
              recovered)};
}

// ---------------------------------------------------------------------------
// 3. Finite-difference gradient checks.

template <class Loss>
double fd_rel_error(ParamSet p, const ParamSet& grad, Loss loss, double eps = 1e-5) {
  double worst = 0.0;
  for (auto g : kAllGroups) {
    for (std::size_t i = 0; i < p[g].size(); ++i) {
      const double keep = p[g][i];
      p[g][i] = keep + eps;
      const double up = loss(p);
      p[g][i] = keep - eps;
      const double down = loss(p);
      p[g][i] = keep;
      const double numeric = (up - down) / (2 * eps);
      const double denom = std::max({std::abs(numeric), std::abs(grad[g][i]), 1e-6});
      worst = std::max(worst, std::abs(numeric - grad[g][i]) / denom);
    }
  }
  return worst;
}

ParamSet random_params(const ModelShape& s, Rng& rng) {
  ParamSet p = init_params(s, rng.next());
  for (auto g : kAllGroups)
    for (double& v : p[g]) v += rng.uniform(-0.5, 0.5);
  return p;
}

LabelMap random_labels(Rng& rng, int h, int w, int classes, double ignore) {
  LabelMap m(h, w);
  for (int& l : m.labels) l = rng.uniform() < ignore ? kIgnoreLabel : rng.range(0, classes - 1);
  return m;
}

Outcome gradient_suite() {
  const ModelShape shape{3, 4, 4};
  double sup = 0.0, ce = 0.0, kd = 0.0, total = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(4, {seed}));
    const ParamSet p = random_params(shape, rng);
    const ImageTensor img = oracle::random_image(rng, 6, 6, 3);
    const LabelMap truth = random_labels(rng, 6, 6, 4, 0.0);
    const LabelMap pseudo = random_labels(rng, 6, 6, 4, 0.3);
    const Logits teacher = forward(random_params(shape, rng), img);
    const double lambda = rng.uniform(0.1, 5.0);
    sup = std::max(sup, fd_rel_error(p, ce_loss_grad(p, img, truth).grad, [&](const ParamSet& x) {
                     return ce_loss_grad(x, img, truth).loss;
                   }));
    ce = std::max(ce, fd_rel_error(p, ce_loss_grad(p, img, pseudo).grad, [&](const ParamSet& x) {
                    return ce_loss_grad(x, img, pseudo).loss;
                  }));
    kd = std::max(kd, fd_rel_error(p, kd_loss_grad(p, img, teacher).grad, [&](const ParamSet& x) {
                    return kd_loss_grad(x, img, teacher).loss;
                  }));
    total = std::max(total, fd_rel_error(p, local_loss_grad(p, img, pseudo, &teacher, lambda).grad,
                                         [&](const ParamSet& x) {
                                           return local_loss_grad(x, img, pseudo, &teacher, lambda)
                                               .total;
                                         }));
  }
  return {std::max({sup, ce, kd, total}) < 1e-4,
          fmt("max relative error: supervised CE %.2e, pseudo-label CE %.2e, KD %.2e, "
              "combined %.2e (limit 1e-4)",
              sup, ce, kd, total)};
}

// ---------------------------------------------------------------------------
// 4. Aggregation equivalences.

Outcome aggregation_suite() {
  const ModelShape shape{3, 5, 4};
  double fedavg = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(5, {seed}));
    const int clients = rng.range(2, 9), clusters = rng.range(1, clients);
    std::vector<StylePoint> pts;
    std::vector<int> lab;
    for (int i = 0; i < clients; ++i) {
      pts.push_back({i * 3 + 1, {rng.uniform()}});
      lab.push_back(i < clusters ? i : rng.range(0, clusters - 1));
    }
    const auto part = make_partition(pts, lab);
    const ClusterModels prev =
        ClusterModels::init(random_params(shape, rng), part.num_clusters(), GroupSet::none());
    std::vector<ClientResult> ups;
    const int sampled = rng.range(1, clients);
    for (int i = 0; i < sampled; ++i)
      ups.push_back({pts[i].client_id, random_params(shape, rng),
                     static_cast<std::size_t>(rng.range(1, 40))});
    const ClusterModels next = aggregate(prev, ups, part);

    ParamSet expect = ParamSet::zeros(shape);
    double total = 0.0;
    for (const auto& u : ups) total += static_cast<double>(u.n_samples);
    for (const auto& u : ups)
      for (auto g : kAllGroups)
        for (std::size_t k = 0; k < expect[g].size(); ++k)
          expect[g][k] += static_cast<double>(u.n_samples) / total * u.params[g][k];
    for (int c = 0; c < next.num_clusters(); ++c) fedavg = std::max(fedavg, max_abs_diff(next.model(c), expect));
  }

  // Scripted trajectory w_t = a + t b with integer entries: every running
  // mean is a half-integer, so the comparison is exact.
  Rng rng(6);
  ParamSet a = ParamSet::zeros(shape), b = ParamSet::zeros(shape);
  for (auto g : kAllGroups) {
    for (double& v : a[g]) v = rng.range(-50, 50);
    for (double& v : b[g]) v = rng.range(-50, 50);
  }
  ClusterModels models = ClusterModels::init(a, 1, GroupSet::none());
  ParamSet sum = ParamSet::zeros(shape);
  const int start = 1, rounds = 5;
  for (int t = 1; t <= rounds; ++t) {
    ParamSet w = a;
    axpy(t, b, w);
    models.phi = w;
    teacher_refresh(models, t, 1, start);
    axpy(1.0, w, sum);
  }
  scale(sum, 1.0 / rounds);
  const bool swat_exact = models.teachers[0] == sum;
  return {fedavg <= 1e-12 && swat_exact,
          fmt("no cluster groups vs weighted FedAvg %.2e (limit 1e-12); SWAt teacher %s mean of 5 "
              "checkpoints",
              fedavg, swat_exact ? "equals" : "differs from")};
}

// ---------------------------------------------------------------------------
// End-to-end runs on the default world.

std::vector<RoundRecord> run_default(const Ablation& ab, std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.ablation = ab;
  cfg.seeds = {seed};
  validate(cfg);
  return run(cfg.effective_federation(seed), gen_world(cfg.world, cfg.world_seed_for(seed))).records;
}

Outcome cluster_accuracy_suite() {
  const ExperimentConfig cfg;
  double worst = 1.0;
  std::string all;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const World world = gen_world(cfg.world, cfg.world_seed_for(seed));
    const FederationConfig fed = cfg.effective_federation(seed);
    std::vector<StylePoint> pts;
    std::map<int, int> truth;
    for (const auto& c : world.clients) {
      pts.push_back({c.client_id, Client(c.client_id, c.images).upload_style(fed.style_window).mean_style.values});
      truth[c.client_id] = c.domain_id;
    }
    const auto part = select_clustering(pts, selection_params(fed, static_cast<int>(pts.size())));
    const double acc = cluster_accuracy(part, truth);
    worst = std::min(worst, acc);
    all += fmt(" %.2f", acc);
  }
  return {worst >= 0.95, "cluster accuracy per seed:" + all + fmt(" (min %.3f, limit 0.95)", worst)};
}

Outcome fda_pretrain_suite() {
  double fda = 0.0, plain = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Ablation with{true, false, false, false, true};
    Ablation without{false, false, false, false, true};
    fda += run_default(with, seed).front().miou / 5;
    plain += run_default(without, seed).front().miou / 5;
  }
  const double delta = 100 * (fda - plain);
  return {delta >= 3.0, fmt("target mIoU FDA pre-training %.2f vs plain %.2f, delta %+.2f (limit +3)",
                            100 * fda, 100 * plain, delta)};
}

struct AblationRuns {
  // st, st+kd, st+kd+swat, full; per seed
  std::vector<std::vector<RunSummary>> summaries;
  std::vector<std::vector<RoundRecord>> full_seed0;
};

AblationRuns& ablation_runs() {
  static AblationRuns runs = [] {
    AblationRuns r;
    const Ablation variants[4] = {{true, true, false, false, false},
                                  {true, true, true, false, false},
                                  {true, true, true, true, false},
                                  {true, true, true, true, true}};
    for (const auto& ab : variants) {
      r.summaries.emplace_back();
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto recs = run_default(ab, seed);
        r.summaries.back().push_back(summarize(recs, seed));
        if (&ab == &variants[3] && seed == 0) r.full_seed0.push_back(std::move(recs));
      }
    }
    return r;
  }();
  return runs;
}

Outcome ordering_suite() {
  const auto& s = ablation_runs().summaries;
  double mean[4];
  for (int v = 0; v < 4; ++v) mean[v] = 100 * combine(s[v]).miou_mean;
  const bool ordered = mean[0] < mean[1] && mean[1] <= mean[2] && mean[2] <= mean[3];
  const double gain = mean[3] - mean[0];
  return {ordered && gain >= 2.0,
          fmt("mIoU ST %.2f, +KD %.2f, +SWAt %.2f, full %.2f; full - ST %+.2f (limit +2), "
              "ordering %s",
              mean[0], mean[1], mean[2], mean[3], gain, ordered ? "holds" : "violated")};
}

Outcome stability_suite() {
  const auto& s = ablation_runs().summaries;
  int count = 0;
  std::string detail;
  for (int i = 0; i < 5; ++i) {
    const double without = 100 * s[0][i].miou_std_rounds, with = 100 * s[2][i].miou_std_rounds;
    if (with <= without) ++count;
    detail += fmt(" %.3f/%.3f", with, without);
  }
  return {count >= 4, fmt("std over last rounds, KD+SWAt/ST per seed:%s; %d/5 not larger (limit 4)",
                          detail.c_str(), count)};
}

Outcome determinism_suite() {
  const Ablation full{};
  const auto first = ablation_runs().full_seed0.front();
  const auto again = run_default(full, 0);
  std::string a, b;
  for (const auto& r : first) a += to_json_line(r) + "\n";
  for (const auto& r : again) b += to_json_line(r) + "\n";
  return {a == b, fmt("rounds.jsonl of two identical runs: %zu vs %zu bytes, %s", a.size(), b.size(),
                      a == b ? "identical" : "different")};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> check;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  app.add_option("criteria", only, "Criterion numbers to run (default: all)")
      ->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {1, "spectral oracles", 5, spectral_suite},
      {2, "clustering oracles", 10, clustering_suite},
      {3, "gradient checks", 10, gradient_suite},
      {4, "aggregation equivalences", 0, aggregation_suite},
      {5, "clustering accuracy", 30, cluster_accuracy_suite},
      {6, "FDA pre-training ablation", 180, fda_pretrain_suite},
      {7, "component ablation ordering", 600, ordering_suite},
      {8, "stability with KD and SWAt", 0, stability_suite},
      {9, "determinism", 0, determinism_suite},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0 && secs > c.budget_s) {
      o.pass = false;
      o.detail += fmt("; took %.1f s, budget %.0f s", secs, c.budget_s);
    }
    std::printf("criterion %d %s: %s - %s [%.1f s]\n", c.id, c.name, o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
