// fusebench/normalization.hpp

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

// Adaptive-symmetric score normalization against an imposter cohort: each
// trial side is z-normalized by the mean/std of its top-K cohort scores and
// the two sides are averaged.

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "fusebench/types.hpp"

namespace fusebench {

inline constexpr double kSigmaFloor = 1e-6;
inline constexpr int kDefaultTopK = 200;

struct CohortStats {
  std::string id;
  double mu = 0.0;
  double sigma = kSigmaFloor;
  int k_used = 1;
};

// Mean and population standard deviation of the K = min(top_k, n) largest
// cohort scores.  sigma is floored at 1e-6 so degenerate cohorts stay usable.
inline CohortStats cohort_stats(std::span<const double> scores_vs_cohort,
                                int top_k, const std::string& id = "") {
  if (scores_vs_cohort.empty())
    throw ValidationError("empty cohort score list" +
                          (id.empty() ? "" : " for '" + id + "'"));
  if (top_k < 2) throw ValidationError("top_k must be >= 2");
  for (double s : scores_vs_cohort)
    if (!std::isfinite(s)) throw ValidationError("non-finite cohort score");

  const int k = std::min<int>(top_k, static_cast<int>(scores_vs_cohort.size()));
  std::vector<double> top(scores_vs_cohort.begin(), scores_vs_cohort.end());
  std::partial_sort(top.begin(), top.begin() + k, top.end(),
                    std::greater<double>());
  top.resize(static_cast<size_t>(k));

  double mu = 0.0;
  for (double s : top) mu += s;
  mu /= k;
  double var = 0.0;
  for (double s : top) var += (s - mu) * (s - mu);
  var /= k;

  CohortStats stats;
  stats.id = id;
  stats.mu = mu;
  stats.sigma = std::max(std::sqrt(var), kSigmaFloor);
  stats.k_used = k;
  return stats;
}

inline double as_norm(double s, const CohortStats& enroll_stats,
                      const CohortStats& test_stats) {
  return 0.5 * ((s - enroll_stats.mu) / enroll_stats.sigma +
                (s - test_stats.mu) / test_stats.sigma);
}

}  // namespace fusebench
