// fusebench/metrics.hpp

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

// Detection-performance metrics for two-class verification scores.
//
// Decision convention throughout: accept iff score >= threshold, so ties
// count as accepts.  At threshold t,
//   p_fn(t) = |{s in targets    : s <  t}| / |targets|
//   p_fp(t) = |{s in nontargets : s >= t}| / |nontargets|
// Both rates are step functions of t; sweeping the midpoints between
// consecutive distinct pooled scores plus one point below the minimum and
// one above the maximum visits every reachable operating point, which makes
// the min-cost sweep exact.

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "fusebench/types.hpp"

namespace fusebench {

struct DetPoint {
  double threshold = 0.0;
  double p_fn = 0.0;
  double p_fp = 0.0;
};

struct CostConfig {
  double p_tar = 0.05;
};

namespace detail {

inline void check_scores(std::span<const double> tar,
                         std::span<const double> non) {
  if (tar.empty()) throw ValidationError("no target scores");
  if (non.empty()) throw ValidationError("no nontarget scores");
  for (double s : tar)
    if (!std::isfinite(s)) throw ValidationError("non-finite target score");
  for (double s : non)
    if (!std::isfinite(s)) throw ValidationError("non-finite nontarget score");
}

// False-positive-to-false-negative exchange rate of the cost function.
// Written as 1/p - 1 rather than (1-p)/p: algebraically identical, and the
// former evaluates exactly (e.g. to 19.0 at p = 0.05) in double precision.
inline double cost_beta(double p_tar) {
  if (!(p_tar > 0.0 && p_tar < 1.0))
    throw ValidationError("p_tar must be in (0,1)");
  return 1.0 / p_tar - 1.0;
}

}  // namespace detail

inline double detection_cost(double p_fn, double p_fp, const CostConfig& cfg) {
  double beta = detail::cost_beta(cfg.p_tar);
  if (!(p_fn >= 0.0 && p_fn <= 1.0) || !(p_fp >= 0.0 && p_fp <= 1.0))
    throw ValidationError("error rates must be in [0,1]");
  return p_fn + beta * p_fp;
}

// Bayes decision threshold for scores that are calibrated LLRs.
inline double bayes_threshold(double p_tar) {
  return std::log(detail::cost_beta(p_tar));
}

inline std::vector<DetPoint> det_points(std::span<const double> tar,
                                        std::span<const double> non) {
  detail::check_scores(tar, non);
  std::vector<double> pooled(tar.begin(), tar.end());
  pooled.insert(pooled.end(), non.begin(), non.end());
  std::sort(pooled.begin(), pooled.end());
  pooled.erase(std::unique(pooled.begin(), pooled.end()), pooled.end());

  std::vector<double> thresholds;
  thresholds.reserve(pooled.size() + 1);
  thresholds.push_back(pooled.front() - 1.0);
  for (size_t i = 0; i + 1 < pooled.size(); ++i)
    thresholds.push_back(0.5 * (pooled[i] + pooled[i + 1]));
  thresholds.push_back(pooled.back() + 1.0);

  std::vector<double> tar_sorted(tar.begin(), tar.end());
  std::vector<double> non_sorted(non.begin(), non.end());
  std::sort(tar_sorted.begin(), tar_sorted.end());
  std::sort(non_sorted.begin(), non_sorted.end());

  std::vector<DetPoint> points;
  points.reserve(thresholds.size());
  for (double t : thresholds) {
    auto n_fn = std::lower_bound(tar_sorted.begin(), tar_sorted.end(), t) -
                tar_sorted.begin();
    auto n_fp = non_sorted.end() -
                std::lower_bound(non_sorted.begin(), non_sorted.end(), t);
    points.push_back({t,
                      static_cast<double>(n_fn) /
                          static_cast<double>(tar_sorted.size()),
                      static_cast<double>(n_fp) /
                          static_cast<double>(non_sorted.size())});
  }
  return points;
}

// Equal error rate: the common value where piecewise-linear interpolation
// (in threshold) of the p_fn and p_fp sweeps cross.  p_fn - p_fp runs
// monotonically from -1 to +1 over the sweep, so the crossing exists and is
// unique up to flat segments.
inline double eer(std::span<const double> tar, std::span<const double> non) {
  std::vector<DetPoint> points = det_points(tar, non);
  double prev_diff = points.front().p_fn - points.front().p_fp;  // == -1
  for (size_t i = 1; i < points.size(); ++i) {
    double diff = points[i].p_fn - points[i].p_fp;
    if (diff >= 0.0) {
      if (diff == 0.0) return points[i].p_fn;
      double t = (0.0 - prev_diff) / (diff - prev_diff);
      return points[i - 1].p_fn + t * (points[i].p_fn - points[i - 1].p_fn);
    }
    prev_diff = diff;
  }
  return points.back().p_fn;  // unreachable: last diff is +1
}

// Exact minimum of the detection cost over all thresholds.
inline double min_c(std::span<const double> tar, std::span<const double> non,
                    const CostConfig& cfg) {
  double beta = detail::cost_beta(cfg.p_tar);
  double best = std::numeric_limits<double>::infinity();
  for (const DetPoint& p : det_points(tar, non))
    best = std::min(best, p.p_fn + beta * p.p_fp);
  return best;
}

// Cost at the fixed Bayes threshold log((1-p_tar)/p_tar); assumes the scores
// are calibrated LLRs.
inline double act_c(std::span<const double> tar, std::span<const double> non,
                    const CostConfig& cfg) {
  detail::check_scores(tar, non);
  double beta = detail::cost_beta(cfg.p_tar);
  double threshold = std::log(beta);
  size_t n_fn = 0, n_fp = 0;
  for (double s : tar)
    if (s < threshold) ++n_fn;
  for (double s : non)
    if (s >= threshold) ++n_fp;
  return static_cast<double>(n_fn) / static_cast<double>(tar.size()) +
         beta * static_cast<double>(n_fp) / static_cast<double>(non.size());
}

// Cost of log-likelihood ratios, in bits.  0 for perfect LLRs, 1 for a
// system whose scores carry no information (all zeros).
inline double cllr(std::span<const double> tar, std::span<const double> non) {
  detail::check_scores(tar, non);
  auto softplus = [](double x) {
    // log(1 + e^x), stable for large |x|
    return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
  };
  double sum_tar = 0.0;
  for (double s : tar) sum_tar += softplus(-s);
  double sum_non = 0.0;
  for (double s : non) sum_non += softplus(s);
  const double ln2 = std::log(2.0);
  return 0.5 * (sum_tar / static_cast<double>(tar.size()) +
                sum_non / static_cast<double>(non.size())) /
         ln2;
}

}  // namespace fusebench
