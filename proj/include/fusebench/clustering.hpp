// fusebench/clustering.hpp

// Copyright 2026  fusebench contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Multi-embedding test-side handling: agglomerative clustering on cosine
// similarity (average linkage), union of the k = 1..k_max partitions,
// per-cluster aggregation, and max-over-clusters trial scoring.

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "fusebench/quality_net.hpp"
#include "fusebench/types.hpp"

namespace fusebench {

inline double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw ValidationError("cosine of vectors with different dimensions");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (size_t k = 0; k < u.size(); ++k) {
    dot += u[k] * v[k];
    nu += u[k] * u[k];
    nv += v[k] * v[k];
  }
  if (nu == 0.0 || nv == 0.0)
    throw ValidationError("cosine of a zero vector");
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

// Disjoint, covering index sets over an embedding collection.
struct Partition {
  std::vector<std::vector<int>> clusters;
};

// Possibly overlapping index sets, the union of several partitions.
struct ClusterSet {
  std::vector<std::vector<int>> clusters;
  int k_max = 1;
};

struct AhcStop {
  static AhcStop threshold(double tau) { return {tau, std::nullopt}; }
  static AhcStop count(int k) { return {0.0, k}; }

  double tau = 0.5;
  std::optional<int> k;
};

// Average-linkage agglomeration on cosine similarity.  In threshold mode,
// merging stops once the best pair's linkage drops below tau; in count mode,
// when exactly k clusters remain.  Ties break on the lexicographically
// smallest (i, j) pair of current cluster indices, so results are identical
// across platforms.
inline Partition ahc(const std::vector<std::vector<double>>& embeddings,
                     const AhcStop& stop) {
  const int n = static_cast<int>(embeddings.size());
  if (n == 0) throw ValidationError("ahc of an empty collection");
  if (stop.k && (*stop.k < 1 || *stop.k > n))
    throw ValidationError("cluster count must be in [1, " +
                          std::to_string(n) + "]");

  // Pairwise cosine matrix; linkage updates keep weighted averages of these.
  std::vector<double> sim(static_cast<size_t>(n) * static_cast<size_t>(n),
                          0.0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double c = cosine(embeddings[static_cast<size_t>(i)],
                        embeddings[static_cast<size_t>(j)]);
      sim[static_cast<size_t>(i * n + j)] = c;
      sim[static_cast<size_t>(j * n + i)] = c;
    }

  std::vector<std::vector<int>> clusters;
  clusters.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) clusters.push_back({i});
  // linkage[a][b]: mean pairwise similarity between clusters a and b.
  std::vector<std::vector<double>> linkage(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    linkage[static_cast<size_t>(i)].resize(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j)
      linkage[static_cast<size_t>(i)][static_cast<size_t>(j)] =
          sim[static_cast<size_t>(i * n + j)];
  }

  while (static_cast<int>(clusters.size()) > (stop.k ? *stop.k : 1)) {
    int best_i = -1, best_j = -1;
    double best = -std::numeric_limits<double>::infinity();
    const int m = static_cast<int>(clusters.size());
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j) {
        double l = linkage[static_cast<size_t>(i)][static_cast<size_t>(j)];
        if (l > best) {
          best = l;
          best_i = i;
          best_j = j;
        }
      }
    if (!stop.k && best < stop.tau) break;

    const double ni = static_cast<double>(
        clusters[static_cast<size_t>(best_i)].size());
    const double nj = static_cast<double>(
        clusters[static_cast<size_t>(best_j)].size());
    for (int k = 0; k < m; ++k) {
      if (k == best_i || k == best_j) continue;
      double merged =
          (ni * linkage[static_cast<size_t>(best_i)][static_cast<size_t>(k)] +
           nj * linkage[static_cast<size_t>(best_j)][static_cast<size_t>(k)]) /
          (ni + nj);
      linkage[static_cast<size_t>(best_i)][static_cast<size_t>(k)] = merged;
      linkage[static_cast<size_t>(k)][static_cast<size_t>(best_i)] = merged;
    }
    auto& dst = clusters[static_cast<size_t>(best_i)];
    auto& src = clusters[static_cast<size_t>(best_j)];
    dst.insert(dst.end(), src.begin(), src.end());
    std::sort(dst.begin(), dst.end());
    clusters.erase(clusters.begin() + best_j);
    linkage.erase(linkage.begin() + best_j);
    for (auto& row : linkage) row.erase(row.begin() + best_j);
  }

  Partition p;
  p.clusters = std::move(clusters);
  return p;
}

// Union of the count-mode partitions for k = 1..k_max, deduplicated.
inline ClusterSet partition_union(
    const std::vector<std::vector<double>>& embeddings, int k_max) {
  const int n = static_cast<int>(embeddings.size());
  if (k_max < 1 || k_max > n)
    throw ValidationError("k_max must be in [1, " + std::to_string(n) + "]");
  ClusterSet out;
  out.k_max = k_max;
  std::set<std::vector<int>> seen;
  for (int k = 1; k <= k_max; ++k) {
    Partition p = ahc(embeddings, AhcStop::count(k));
    for (std::vector<int>& cluster : p.clusters)
      if (seen.insert(cluster).second) out.clusters.push_back(cluster);
  }
  return out;
}

// Eq-1 weighted average over the cluster members when qualities are given,
// plain arithmetic mean otherwise.
inline std::vector<double> aggregate_cluster(
    const std::vector<std::vector<double>>& embeddings,
    std::span<const int> cluster,
    std::span<const double> qualities = std::span<const double>()) {
  if (cluster.empty()) throw ValidationError("aggregate of an empty cluster");
  std::vector<std::vector<double>> members;
  members.reserve(cluster.size());
  std::vector<double> weights;
  for (int idx : cluster) {
    members.push_back(embeddings.at(static_cast<size_t>(idx)));
    if (!qualities.empty())
      weights.push_back(qualities[static_cast<size_t>(idx)]);
  }
  if (qualities.empty()) weights.assign(members.size(), 1.0);
  return weighted_average(members, weights);
}

struct TrialScore {
  double score = 0.0;
  int best_cluster = 0;
};

// Scores the enrollment aggregate against every cluster aggregate and keeps
// the maximum; ties go to the smallest cluster index.
inline TrialScore trial_score(
    std::span<const double> enroll_agg,
    const std::vector<std::vector<double>>& embeddings,
    const ClusterSet& clusters,
    std::span<const double> qualities = std::span<const double>()) {
  if (clusters.clusters.empty())
    throw ValidationError("trial_score with an empty cluster set");
  TrialScore best;
  best.score = -std::numeric_limits<double>::infinity();
  best.best_cluster = -1;
  for (size_t c = 0; c < clusters.clusters.size(); ++c) {
    std::vector<double> agg =
        aggregate_cluster(embeddings, clusters.clusters[c], qualities);
    double s = cosine(enroll_agg, agg);
    if (s > best.score) {
      best.score = s;
      best.best_cluster = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace fusebench
