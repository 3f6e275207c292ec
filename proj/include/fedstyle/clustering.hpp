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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fedstyle/spectral.hpp"

namespace fedstyle {

// One client's flattened mean style.
struct StylePoint {
  int client_id = 0;
  std::vector<double> vector;
};

// Hard partition of clients into non-empty clusters. points are kept sorted
// by client_id; labels[i] is the cluster of points[i].
struct ClusterPartition {
  std::vector<StylePoint> points;
  std::vector<int> labels;
  std::vector<std::vector<double>> centroids;
  double silhouette = 0.0;

  int num_clusters() const { return static_cast<int>(centroids.size()); }
  // Throws InvalidArgument for unknown ids.
  int cluster_of(int client_id) const;
  std::size_t position_of(int client_id) const;
  std::vector<int> members(int cluster) const;  // client ids, ascending
  std::map<int, int> assignments() const;
};

// Checks every invariant: non-empty clusters, labels in range, centroids equal
// to member means within 1e-9.
void validate(const ClusterPartition& part);

// Builds a partition from explicit labels (relabeled to 0..C-1 in order of
// first appearance by client id); centroids are member means.
ClusterPartition make_partition(std::vector<StylePoint> points, std::span<const int> labels);

// Lloyd's algorithm with farthest-first initialization. The first center is
// drawn with `seed` among the points ordered by client id, so the result does
// not depend on input order.
ClusterPartition kmeans(std::vector<StylePoint> points, int h, std::uint64_t seed);

double intra_cluster_dist(const ClusterPartition& part, int client_id);
double inter_cluster_dist(const ClusterPartition& part, int client_id);
double silhouette(const ClusterPartition& part);

struct SelectionParams {
  int m = 2;   // smallest cluster count tried
  int n = 9;   // cluster counts tried are m..n-1
  int runs = 10;
  std::uint64_t base_seed = 0;
};

// Defaults m = 2, n = min(K, 9) raised to m + 1 when K is small, runs = 10.
SelectionParams default_selection(int num_clients, std::uint64_t base_seed);

struct SelectionTrace {
  int h = 0;
  double sum_intra = 0.0;
  double silhouette = 0.0;
};

// For every h in [m, n) keeps the run (of `runs` seeds) with the smallest
// summed intra-cluster distance, then returns the h with the largest
// silhouette; ties go to the smaller h. `trace`, when given, receives the
// per-h winners in ascending h.
ClusterPartition select_clustering(const std::vector<StylePoint>& points,
                                   const SelectionParams& params,
                                   std::vector<SelectionTrace>* trace = nullptr);

// argmin_c ||style - centroid_c||, ties to the smaller index.
int assign_by_style(std::span<const double> style, const ClusterPartition& part);
int assign_by_style(const Style& style, const ClusterPartition& part);

// Fraction of clients whose true domain equals the majority domain of their
// cluster (majority ties go to the smaller domain id).
double cluster_accuracy(const ClusterPartition& part, const std::map<int, int>& truth);

// JSON export: {clusters, centroids, silhouette, h_range, seeds}.
std::string partition_to_json(const ClusterPartition& part, const SelectionParams& params);

}  // namespace fedstyle
