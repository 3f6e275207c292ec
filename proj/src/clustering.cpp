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

#include "fedstyle/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "json.hpp"

#include "fedstyle/rng.hpp"

namespace fedstyle {
namespace {

double dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double dist2(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void canonicalize(std::vector<StylePoint>& points) {
  require(!points.empty(), "clustering needs at least one point");
  std::sort(points.begin(), points.end(),
            [](const StylePoint& a, const StylePoint& b) { return a.client_id < b.client_id; });
  const std::size_t dim = points.front().vector.size();
  require(dim > 0, "style points must be non-empty vectors");
  for (std::size_t i = 0; i < points.size(); ++i) {
    require(points[i].vector.size() == dim, "style points have different dimensions");
    for (double v : points[i].vector) require(std::isfinite(v), "style point is not finite");
    if (i > 0) {
      require(points[i].client_id != points[i - 1].client_id,
              "duplicate client id " + std::to_string(points[i].client_id));
    }
  }
}

std::vector<std::vector<double>> member_means(const std::vector<StylePoint>& points,
                                              std::span<const int> labels, int k) {
  const std::size_t dim = points.front().vector.size();
  std::vector<std::vector<double>> cent(k, std::vector<double>(dim, 0.0));
  std::vector<int> count(k, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    ++count[labels[i]];
    for (std::size_t d = 0; d < dim; ++d) cent[labels[i]][d] += points[i].vector[d];
  }
  for (int c = 0; c < k; ++c) {
    if (count[c] == 0) continue;
    for (double& v : cent[c]) v /= count[c];
  }
  return cent;
}

int nearest(std::span<const double> v, const std::vector<std::vector<double>>& centroids) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = dist2(v, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

// Moves the point farthest from its own centroid (taken from a cluster with
// more than one member) into each empty cluster.
void repair_empty(const std::vector<StylePoint>& points, std::vector<int>& labels,
                  std::vector<std::vector<double>>& centroids) {
  const int k = static_cast<int>(centroids.size());
  for (int empty = 0; empty < k; ++empty) {
    std::vector<int> count(k, 0);
    for (int l : labels) ++count[l];
    if (count[empty] > 0) continue;
    std::size_t pick = points.size();
    double pick_d = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (count[labels[i]] < 2) continue;
      const double d = dist2(points[i].vector, centroids[labels[i]]);
      if (d > pick_d) {
        pick_d = d;
        pick = i;
      }
    }
    labels[pick] = empty;
    centroids[empty] = points[pick].vector;
  }
}

}  // namespace

int ClusterPartition::cluster_of(int client_id) const { return labels[position_of(client_id)]; }

std::size_t ClusterPartition::position_of(int client_id) const {
  auto it = std::lower_bound(points.begin(), points.end(), client_id,
                             [](const StylePoint& p, int id) { return p.client_id < id; });
  if (it == points.end() || it->client_id != client_id) {
    throw InvalidArgument("client " + std::to_string(client_id) + " is not in the partition");
  }
  return static_cast<std::size_t>(it - points.begin());
}

std::vector<int> ClusterPartition::members(int cluster) const {
  std::vector<int> ids;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (labels[i] == cluster) ids.push_back(points[i].client_id);
  return ids;
}

std::map<int, int> ClusterPartition::assignments() const {
  std::map<int, int> out;
  for (std::size_t i = 0; i < points.size(); ++i) out[points[i].client_id] = labels[i];
  return out;
}

void validate(const ClusterPartition& part) {
  require(!part.points.empty(), "partition has no points");
  require(part.labels.size() == part.points.size(), "partition labels misaligned");
  const int k = part.num_clusters();
  require(k >= 1, "partition has no clusters");
  std::vector<int> count(k, 0);
  for (int l : part.labels) {
    require(l >= 0 && l < k, "partition label out of range");
    ++count[l];
  }
  for (int c = 0; c < k; ++c) require(count[c] > 0, "partition has an empty cluster");
  const auto means = member_means(part.points, part.labels, k);
  for (int c = 0; c < k; ++c) {
    require(part.centroids[c].size() == part.points.front().vector.size(),
            "centroid dimension mismatch");
    for (std::size_t d = 0; d < means[c].size(); ++d) {
      require(std::abs(means[c][d] - part.centroids[c][d]) <=
                  1e-9 * std::max(1.0, std::abs(means[c][d])),
              "centroid is not the mean of its members");
    }
  }
}

ClusterPartition make_partition(std::vector<StylePoint> points, std::span<const int> labels) {
  require(points.size() == labels.size(), "make_partition: labels/points size mismatch");
  std::vector<std::pair<int, int>> order;  // (client_id, label)
  for (std::size_t i = 0; i < points.size(); ++i) order.emplace_back(points[i].client_id, labels[i]);
  canonicalize(points);
  std::sort(order.begin(), order.end());
  std::map<int, int> relabel;
  ClusterPartition part;
  part.points = std::move(points);
  for (auto [id, l] : order) {
    auto [it, inserted] = relabel.emplace(l, static_cast<int>(relabel.size()));
    part.labels.push_back(it->second);
  }
  part.centroids = member_means(part.points, part.labels, static_cast<int>(relabel.size()));
  part.silhouette = relabel.size() >= 2 ? silhouette(part) : 0.0;
  return part;
}

ClusterPartition kmeans(std::vector<StylePoint> points, int h, std::uint64_t seed) {
  canonicalize(points);
  const int n = static_cast<int>(points.size());
  require(h >= 1 && h <= n, "kmeans: need 1 <= h <= number of points (h=" + std::to_string(h) +
                                ", points=" + std::to_string(n) + ")");

  Rng rng(seed);
  std::vector<std::vector<double>> centroids;
  centroids.push_back(points[rng.below(n)].vector);
  std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
  while (static_cast<int>(centroids.size()) < h) {
    int far = 0;
    double far_d = -1.0;
    for (int i = 0; i < n; ++i) {
      min_d[i] = std::min(min_d[i], dist2(points[i].vector, centroids.back()));
      if (min_d[i] > far_d) {
        far_d = min_d[i];
        far = i;
      }
    }
    centroids.push_back(points[far].vector);
  }

  std::vector<int> labels(n, -1);
  for (int iter = 0; iter < 300; ++iter) {
    std::vector<int> next(n);
    for (int i = 0; i < n; ++i) next[i] = nearest(points[i].vector, centroids);
    repair_empty(points, next, centroids);
    const bool unchanged = next == labels;
    labels = std::move(next);
    auto updated = member_means(points, labels, h);
    double shift = 0.0;
    for (int c = 0; c < h; ++c) shift = std::max(shift, dist(updated[c], centroids[c]));
    centroids = std::move(updated);
    if (unchanged || shift < 1e-9) break;
  }

  ClusterPartition part;
  part.points = std::move(points);
  part.labels = std::move(labels);
  part.centroids = std::move(centroids);
  part.silhouette = h >= 2 ? silhouette(part) : 0.0;
  return part;
}

double intra_cluster_dist(const ClusterPartition& part, int client_id) {
  const std::size_t k = part.position_of(client_id);
  const int c = part.labels[k];
  double sum = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < part.points.size(); ++i) {
    if (part.labels[i] != c) continue;
    ++count;
    if (i != k) sum += dist(part.points[k].vector, part.points[i].vector);
  }
  return count > 1 ? sum / (count - 1) : 0.0;
}

double inter_cluster_dist(const ClusterPartition& part, int client_id) {
  require(part.num_clusters() >= 2, "inter_cluster_dist needs at least two clusters");
  const std::size_t k = part.position_of(client_id);
  std::vector<double> sum(part.num_clusters(), 0.0);
  std::vector<int> count(part.num_clusters(), 0);
  for (std::size_t i = 0; i < part.points.size(); ++i) {
    sum[part.labels[i]] += dist(part.points[k].vector, part.points[i].vector);
    ++count[part.labels[i]];
  }
  double best = std::numeric_limits<double>::infinity();
  for (int c = 0; c < part.num_clusters(); ++c) {
    if (c == part.labels[k] || count[c] == 0) continue;
    best = std::min(best, sum[c] / count[c]);
  }
  return best;
}

namespace {

double silhouette_from(const ClusterPartition& part, std::span<const double> a) {
  std::vector<int> size(part.num_clusters(), 0);
  for (int l : part.labels) ++size[l];
  double total = 0.0;
  for (std::size_t k = 0; k < part.points.size(); ++k) {
    if (size[part.labels[k]] <= 1) continue;
    const double b = inter_cluster_dist(part, part.points[k].client_id);
    const double denom = std::max(a[k], b);
    if (denom > 0.0) total += (b - a[k]) / denom;
  }
  return total / static_cast<double>(part.points.size());
}

std::vector<double> all_intra(const ClusterPartition& part) {
  std::vector<double> a(part.points.size());
  for (std::size_t k = 0; k < a.size(); ++k) a[k] = intra_cluster_dist(part, part.points[k].client_id);
  return a;
}

}  // namespace

double silhouette(const ClusterPartition& part) {
  require(part.num_clusters() >= 2, "silhouette needs at least two clusters");
  const auto a = all_intra(part);
  return silhouette_from(part, a);
}

SelectionParams default_selection(int num_clients, std::uint64_t base_seed) {
  SelectionParams p;
  p.m = 2;
  p.n = std::max(std::min(num_clients, 9), p.m + 1);
  p.runs = 10;
  p.base_seed = base_seed;
  return p;
}

ClusterPartition select_clustering(const std::vector<StylePoint>& points,
                                   const SelectionParams& params,
                                   std::vector<SelectionTrace>* trace) {
  const int count = static_cast<int>(points.size());
  require(params.m >= 2 && params.m < params.n && params.n - 1 <= count,
          "select_clustering: infeasible range m=" + std::to_string(params.m) +
              ", n=" + std::to_string(params.n) + " for " + std::to_string(count) + " points");
  require(params.runs >= 1, "select_clustering: runs must be >= 1");

  ClusterPartition best;
  double best_sil = -std::numeric_limits<double>::infinity();
  if (trace) trace->clear();
  for (int h = params.m; h < params.n; ++h) {
    ClusterPartition best_run;
    double best_sum = std::numeric_limits<double>::infinity();
    for (int r = 0; r < params.runs; ++r) {
      ClusterPartition run = kmeans(points, h, params.base_seed + static_cast<std::uint64_t>(r));
      const auto a = all_intra(run);
      const double sum = std::accumulate(a.begin(), a.end(), 0.0);
      if (sum < best_sum) {
        best_sum = sum;
        best_run = std::move(run);
      }
    }
    const double sil = best_run.silhouette;
    if (trace) trace->push_back({h, best_sum, sil});
    if (sil > best_sil) {
      best_sil = sil;
      best = std::move(best_run);
    }
  }
  return best;
}

int assign_by_style(std::span<const double> style, const ClusterPartition& part) {
  require(part.num_clusters() >= 1, "assign_by_style: partition has no centroids");
  for (const auto& c : part.centroids) {
    require(c.size() == style.size(), "assign_by_style: style dimension " +
                                          std::to_string(style.size()) +
                                          " does not match centroid dimension " +
                                          std::to_string(c.size()));
  }
  return nearest(style, part.centroids);
}

int assign_by_style(const Style& style, const ClusterPartition& part) {
  return assign_by_style(std::span<const double>(style.values), part);
}

double cluster_accuracy(const ClusterPartition& part, const std::map<int, int>& truth) {
  require(truth.size() == part.points.size(), "cluster_accuracy: id sets differ");
  std::vector<std::map<int, int>> votes(part.num_clusters());
  for (std::size_t i = 0; i < part.points.size(); ++i) {
    auto it = truth.find(part.points[i].client_id);
    require(it != truth.end(), "cluster_accuracy: id sets differ");
    ++votes[part.labels[i]][it->second];
  }
  int correct = 0;
  for (const auto& v : votes) {
    int best = 0;
    for (const auto& [domain, n] : v) best = std::max(best, n);  // map order: smaller id wins ties
    correct += best;
  }
  return static_cast<double>(correct) / static_cast<double>(part.points.size());
}

std::string partition_to_json(const ClusterPartition& part, const SelectionParams& params) {
  nlohmann::json j;
  j["clusters"] = nlohmann::json::array();
  for (int c = 0; c < part.num_clusters(); ++c) j["clusters"].push_back(part.members(c));
  j["centroids"] = part.centroids;
  j["silhouette"] = part.silhouette;
  j["h_range"] = {params.m, params.n};
  std::vector<std::uint64_t> seeds;
  for (int r = 0; r < params.runs; ++r) seeds.push_back(params.base_seed + r);
  j["seeds"] = seeds;
  return j.dump(2);
}

}  // namespace fedstyle
