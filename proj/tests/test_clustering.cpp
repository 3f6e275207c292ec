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

#include <algorithm>

#include "doctest.h"
#include "fedstyle/clustering.hpp"
#include "fedstyle/error.hpp"
#include "json.hpp"
#include "oracles.hpp"

using namespace fedstyle;

namespace {

std::vector<StylePoint> points_of(const std::vector<std::vector<double>>& v) {
  std::vector<StylePoint> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back({static_cast<int>(i), v[i]});
  return out;
}

// Blobs around well-separated centers; planted[i] is the blob of point i.
std::vector<StylePoint> blobs(Rng& rng, int k, int per, int dim, double sigma, double spacing,
                              std::vector<int>& planted) {
  std::vector<std::vector<double>> centers(k, std::vector<double>(dim));
  for (int c = 0; c < k; ++c) {
    for (int d = 0; d < dim; ++d) centers[c][d] = rng.uniform() * 0.5 * spacing;
    centers[c][c % dim] += spacing * (1 + c / dim);
  }
  std::vector<StylePoint> pts;
  planted.clear();
  int id = 0;
  for (int c = 0; c < k; ++c) {
    for (int i = 0; i < per; ++i) {
      std::vector<double> v = centers[c];
      for (double& x : v) x += sigma * rng.normal();
      pts.push_back({id++, v});
      planted.push_back(c);
    }
  }
  return pts;
}

// True when both labelings induce the same partition of the points.
bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j)
      if ((a[i] == a[j]) != (b[i] == b[j])) return false;
  return true;
}

std::vector<int> labels_by_id(const ClusterPartition& p) {
  std::vector<int> out;
  for (const auto& pt : p.points) out.push_back(p.cluster_of(pt.client_id));
  return out;
}

}  // namespace

TEST_CASE("make_partition relabels and computes centroids") {
  auto pts = points_of({{0, 0}, {0, 2}, {10, 0}});
  const std::vector<int> labels = {7, 7, 3};
  const auto p = make_partition(pts, labels);
  CHECK(p.num_clusters() == 2);
  CHECK(p.cluster_of(0) == 0);
  CHECK(p.cluster_of(2) == 1);
  CHECK(p.centroids[0] == std::vector<double>{0, 1});
  CHECK(p.members(0) == std::vector<int>{0, 1});
  CHECK_NOTHROW(validate(p));
  CHECK_THROWS_AS(p.cluster_of(9), InvalidArgument);
}

TEST_CASE("kmeans with h = 1 gives the global mean") {
  auto pts = points_of({{1, 2}, {3, 4}, {5, 9}});
  const auto p = kmeans(pts, 1, 0);
  CHECK(p.num_clusters() == 1);
  CHECK(p.centroids[0][0] == doctest::Approx(3.0));
  CHECK(p.centroids[0][1] == doctest::Approx(5.0));
  CHECK_THROWS_AS(kmeans(pts, 4, 0), InvalidArgument);
  CHECK_THROWS_AS(kmeans(pts, 0, 0), InvalidArgument);
}

TEST_CASE("kmeans recovers three planted blobs for any seed") {
  Rng rng(1);
  std::vector<int> planted;
  const auto pts = blobs(rng, 3, 7, 2, 0.1, 10.0, planted);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = kmeans(pts, 3, seed);
    CHECK(same_partition(labels_by_id(p), planted));
    CHECK_NOTHROW(validate(p));
  }
}

TEST_CASE("kmeans keeps clusters non-empty with duplicate points") {
  auto pts = points_of({{0}, {0}, {0}, {0}, {1}});
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = kmeans(pts, 3, seed);
    CHECK(p.num_clusters() == 3);
    CHECK_NOTHROW(validate(p));
  }
}

TEST_CASE("kmeans rejects duplicate ids and ragged points") {
  std::vector<StylePoint> dup = {{1, {0.0}}, {1, {1.0}}};
  CHECK_THROWS_AS(kmeans(dup, 1, 0), InvalidArgument);
  std::vector<StylePoint> ragged = {{1, {0.0}}, {2, {1.0, 2.0}}};
  CHECK_THROWS_AS(kmeans(ragged, 1, 0), InvalidArgument);
}

TEST_CASE("intra and inter distance examples") {
  auto p = make_partition(points_of({{0, 0}, {0, 2}, {7, 7}}), std::vector<int>{0, 0, 1});
  CHECK(intra_cluster_dist(p, 0) == doctest::Approx(2.0));
  CHECK(intra_cluster_dist(p, 2) == 0.0);
  CHECK_THROWS_AS(intra_cluster_dist(p, 5), InvalidArgument);

  auto two = make_partition(points_of({{0, 0}, {3, 4}}), std::vector<int>{0, 1});
  CHECK(inter_cluster_dist(two, 0) == doctest::Approx(5.0));

  auto q = make_partition(points_of({{0, 0}, {1, 0}, {3, 0}, {5, 0}}), std::vector<int>{0, 1, 2, 2});
  CHECK(inter_cluster_dist(q, 0) == doctest::Approx(1.0));

  auto one = make_partition(points_of({{0, 0}, {1, 0}}), std::vector<int>{0, 0});
  CHECK_THROWS_AS(inter_cluster_dist(one, 0), InvalidArgument);
  CHECK_THROWS_AS(silhouette(one), InvalidArgument);
}

TEST_CASE("distances and silhouette match brute-force oracles") {
  Rng rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = rng.range(4, 12), k = rng.range(2, std::min(4, n)), dim = rng.range(1, 5);
    std::vector<std::vector<double>> v(n, std::vector<double>(dim));
    for (auto& row : v)
      for (double& x : row) x = rng.uniform(-3, 3);
    std::vector<int> lab(n);
    for (int i = 0; i < n; ++i) lab[i] = i < k ? i : static_cast<int>(rng.below(k));
    const auto p = make_partition(points_of(v), lab);
    for (int i = 0; i < n; ++i) {
      CHECK(std::abs(intra_cluster_dist(p, i) - oracle::intra(v, lab, i)) < 1e-12);
      CHECK(std::abs(inter_cluster_dist(p, i) - oracle::inter(v, lab, i)) < 1e-12);
    }
    CHECK(std::abs(silhouette(p) - oracle::silhouette(v, lab)) < 1e-12);
  }
}

TEST_CASE("silhouette examples") {
  auto singles = make_partition(points_of({{0}, {1}, {5}}), std::vector<int>{0, 1, 2});
  CHECK(silhouette(singles) == 0.0);
  Rng rng(4);
  std::vector<int> planted;
  const auto pts = blobs(rng, 2, 6, 3, 0.05, 20.0, planted);
  CHECK(silhouette(make_partition(pts, planted)) >= 0.9);
}

TEST_CASE("select_clustering recovers four planted blobs") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(1000 + s);
    std::vector<int> planted;
    const auto pts = blobs(rng, 4, 5, 3, 0.1, 10.0, planted);
    std::vector<SelectionTrace> trace;
    const auto p = select_clustering(pts, {2, 8, 5, s}, &trace);
    CHECK(p.num_clusters() == 4);
    CHECK(same_partition(labels_by_id(p), planted));
    CHECK(trace.size() == 6);
    for (const auto& t : trace) CHECK(p.silhouette >= t.silhouette);
  }
}

TEST_CASE("select_clustering edge cases and determinism") {
  auto two = points_of({{0.0}, {1.0}});
  CHECK(select_clustering(two, {2, 3, 1, 0}).num_clusters() == 2);
  CHECK_THROWS_AS(select_clustering(two, {2, 2, 1, 0}), InvalidArgument);
  CHECK_THROWS_AS(select_clustering(two, {1, 3, 1, 0}), InvalidArgument);
  CHECK_THROWS_AS(select_clustering(two, {2, 4, 1, 0}), InvalidArgument);
  CHECK_THROWS_AS(select_clustering(two, {2, 3, 0, 0}), InvalidArgument);

  Rng rng(6);
  std::vector<int> planted;
  const auto pts = blobs(rng, 3, 6, 4, 1.5, 4.0, planted);
  const auto a = select_clustering(pts, {2, 7, 4, 42});
  const auto b = select_clustering(pts, {2, 7, 4, 42});
  CHECK(a.labels == b.labels);
  CHECK(a.centroids == b.centroids);
  CHECK(a.silhouette == b.silhouette);
}

TEST_CASE("select_clustering is invariant to input order") {
  Rng rng(12);
  std::vector<int> planted;
  auto pts = blobs(rng, 3, 6, 3, 1.0, 4.0, planted);
  const auto ref = select_clustering(pts, {2, 7, 5, 3});
  for (int perm = 0; perm < 5; ++perm) {
    for (std::size_t i = pts.size() - 1; i > 0; --i) std::swap(pts[i], pts[rng.below(i + 1)]);
    const auto p = select_clustering(pts, {2, 7, 5, 3});
    CHECK(p.silhouette == ref.silhouette);
    CHECK(same_partition(labels_by_id(p), labels_by_id(ref)));
  }
}

TEST_CASE("select_clustering is invariant to uniform scaling") {
  Rng rng(13);
  std::vector<int> planted;
  const auto pts = blobs(rng, 3, 6, 3, 1.2, 4.0, planted);
  const auto ref = select_clustering(pts, {2, 7, 5, 9});
  for (double lambda : {0.01, 0.5, 3.0, 250.0}) {
    auto scaled = pts;
    for (auto& p : scaled)
      for (double& x : p.vector) x *= lambda;
    const auto p = select_clustering(scaled, {2, 7, 5, 9});
    CHECK(p.labels == ref.labels);
  }
}

TEST_CASE("default selection range") {
  auto p = default_selection(30, 1);
  CHECK(p.m == 2);
  CHECK(p.n == 9);
  CHECK(p.runs == 10);
  CHECK(default_selection(5, 1).n == 5);
  CHECK(default_selection(2, 1).n == 3);
}

TEST_CASE("assign_by_style") {
  auto p = make_partition(points_of({{0.0}, {10.0}}), std::vector<int>{0, 1});
  CHECK(assign_by_style(std::vector<double>{4.0}, p) == 0);
  CHECK(assign_by_style(std::vector<double>{10.0}, p) == 1);
  CHECK(assign_by_style(std::vector<double>{5.0}, p) == 0);  // tie -> smaller index
  CHECK_THROWS_AS(assign_by_style(std::vector<double>{1.0, 2.0}, p), InvalidArgument);

  Rng rng(21);
  std::vector<std::vector<double>> v(9, std::vector<double>(3));
  for (auto& row : v)
    for (double& x : row) x = rng.uniform(-5, 5);
  const auto q = make_partition(points_of(v), std::vector<int>{0, 1, 2, 0, 1, 2, 0, 1, 2});
  for (int t = 0; t < 100; ++t) {
    std::vector<double> s(3);
    for (double& x : s) x = rng.uniform(-6, 6);
    int best = 0;
    for (int c = 1; c < q.num_clusters(); ++c)
      if (oracle::dist(s, q.centroids[c]) < oracle::dist(s, q.centroids[best])) best = c;
    CHECK(assign_by_style(s, q) == best);
  }
}

TEST_CASE("cluster_accuracy") {
  auto pts = points_of({{0}, {1}, {2}, {3}});
  auto one = make_partition(pts, std::vector<int>{0, 0, 0, 0});
  CHECK(cluster_accuracy(one, {{0, 5}, {1, 5}, {2, 9}, {3, 5}}) == doctest::Approx(0.75));
  auto exact = make_partition(pts, std::vector<int>{0, 0, 1, 1});
  CHECK(cluster_accuracy(exact, {{0, 2}, {1, 2}, {2, 1}, {3, 1}}) == 1.0);
  CHECK_THROWS_AS(cluster_accuracy(exact, {{0, 2}, {1, 2}, {2, 1}}), InvalidArgument);
  CHECK_THROWS_AS(cluster_accuracy(exact, {{0, 2}, {1, 2}, {2, 1}, {7, 1}}), InvalidArgument);

  Rng rng(5);
  std::vector<std::vector<double>> v(20, std::vector<double>{0.0});
  std::vector<int> lab(20);
  std::map<int, int> truth;
  for (int i = 0; i < 20; ++i) {
    lab[i] = i < 4 ? i : static_cast<int>(rng.below(4));
    truth[i] = static_cast<int>(rng.below(3));
  }
  const auto p = make_partition(points_of(v), lab);
  int correct = 0;
  for (int c = 0; c < p.num_clusters(); ++c) {
    std::map<int, int> votes;
    for (int id : p.members(c)) ++votes[truth[id]];
    int best = 0;
    for (const auto& [d, n] : votes) best = std::max(best, n);
    correct += best;
  }
  CHECK(cluster_accuracy(p, truth) == doctest::Approx(correct / 20.0).epsilon(1e-15));
}

TEST_CASE("partition JSON export") {
  auto p = make_partition(points_of({{0.0}, {1.0}, {9.0}}), std::vector<int>{0, 0, 1});
  const auto j = nlohmann::json::parse(partition_to_json(p, {2, 3, 4, 10}));
  CHECK(j["clusters"] == nlohmann::json::parse("[[0,1],[2]]"));
  CHECK(j["centroids"][0][0] == 0.5);
  CHECK(j["h_range"] == nlohmann::json::parse("[2,3]"));
  CHECK(j["seeds"].size() == 4);
  CHECK(j.contains("silhouette"));
}
