// tests/test_metrics.cpp

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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "fusebench/metrics.hpp"
#include "fusebench/random.hpp"
#include "oracles.hpp"

using namespace fusebench;
using Catch::Matchers::WithinAbs;

namespace {

std::pair<std::vector<double>, std::vector<double>> random_scores(
    Rng& rng, int max_n = 50) {
  int n_tar = 1 + rng.uniform_int(max_n);
  int n_non = 1 + rng.uniform_int(max_n);
  std::vector<double> tar, non;
  for (int i = 0; i < n_tar; ++i) tar.push_back(rng.normal() + 1.0);
  for (int i = 0; i < n_non; ++i) non.push_back(rng.normal() - 1.0);
  return {tar, non};
}

}  // namespace

TEST_CASE("det_points sweeps one point per threshold region") {
  std::vector<double> tar{1.0}, non{0.0};
  auto points = det_points(tar, non);
  REQUIRE(points.size() == 3);
  CHECK(points[0].p_fn == 0.0);
  CHECK(points[0].p_fp == 1.0);
  CHECK(points[1].p_fn == 0.0);
  CHECK(points[1].p_fp == 0.0);
  CHECK(points[2].p_fn == 1.0);
  CHECK(points[2].p_fp == 0.0);
}

TEST_CASE("det_points with identical singleton classes") {
  std::vector<double> s{0.5};
  auto points = det_points(s, s);
  REQUIRE(points.size() == 2);
  CHECK(points[0].p_fn == 0.0);
  CHECK(points[0].p_fp == 1.0);
  CHECK(points[1].p_fn == 1.0);
  CHECK(points[1].p_fp == 0.0);
}

TEST_CASE("det_points matches the exhaustive sweep oracle") {
  std::vector<double> tar{0.0, 1.0, 2.0}, non{-1.0, 0.5};
  auto points = det_points(tar, non);
  auto thresholds = oracle::sweep_thresholds(tar, non);
  // 5 distinct pooled scores -> 4 midpoints plus the two end regions.
  REQUIRE(points.size() == 6);
  REQUIRE(thresholds.size() == points.size());
  for (size_t i = 0; i < points.size(); ++i) {
    CHECK(points[i].threshold == thresholds[i]);
    CHECK(points[i].p_fn == oracle::p_fn_at(tar, thresholds[i]));
    CHECK(points[i].p_fp == oracle::p_fp_at(non, thresholds[i]));
  }
}

TEST_CASE("det_points rejects empty classes and NaN") {
  std::vector<double> ok{0.0}, empty;
  std::vector<double> bad{std::nan("")};
  CHECK_THROWS_AS(det_points(empty, ok), ValidationError);
  CHECK_THROWS_AS(det_points(ok, empty), ValidationError);
  CHECK_THROWS_AS(det_points(bad, ok), ValidationError);
}

TEST_CASE("eer on separable, interpolated and inverted inputs") {
  CHECK(eer(std::vector<double>{2.0, 3.0}, std::vector<double>{-1.0, 0.0}) ==
        0.0);
  CHECK_THAT(eer(std::vector<double>{0.0, 1.0, 2.0},
                 std::vector<double>{-1.0, 0.5}),
             WithinAbs(1.0 / 3.0, 1e-15));
  CHECK(eer(std::vector<double>{0.0}, std::vector<double>{1.0}) == 1.0);
}

TEST_CASE("detection cost evaluates the weighted error sum") {
  CostConfig cfg{0.05};
  CHECK(detection_cost(0.0, 0.0, cfg) == 0.0);
  CHECK_THAT(detection_cost(0.1, 0.01, cfg), WithinAbs(0.29, 1e-15));
  CHECK(detection_cost(1.0, 0.0, cfg) == 1.0);
  CHECK(detection_cost(0.0, 1.0, cfg) == 19.0);
  CHECK_THROWS_AS(detection_cost(0.0, 0.0, CostConfig{0.0}), ValidationError);
  CHECK_THROWS_AS(detection_cost(0.0, 0.0, CostConfig{1.0}), ValidationError);
}

TEST_CASE("min_c examples") {
  CostConfig cfg{0.05};
  CHECK(min_c(std::vector<double>{2.0, 3.0}, std::vector<double>{0.0, 2.5},
              cfg) == 0.5);
  CHECK(min_c(std::vector<double>{2.0, 3.0}, std::vector<double>{-1.0, 0.0},
              cfg) == 0.0);
  std::vector<double> same{0.3, 0.7, 1.1};
  CHECK(min_c(same, same, cfg) == 1.0);
}

TEST_CASE("act_c at the fixed Bayes threshold") {
  CostConfig cfg{0.05};
  CHECK(act_c(std::vector<double>{3.0}, std::vector<double>{0.0}, cfg) == 0.0);
  CHECK_THAT(act_c(std::vector<double>{3.0, 2.0},
                   std::vector<double>{3.5, 0.0}, cfg),
             WithinAbs(10.0, 1e-12));
}

TEST_CASE("cllr closed-form cases") {
  CHECK_THAT(cllr(std::vector<double>{0.0}, std::vector<double>{0.0}),
             WithinAbs(1.0, 1e-15));
  CHECK_THAT(cllr(std::vector<double>{700.0}, std::vector<double>{-700.0}),
             WithinAbs(0.0, 1e-12));
  double ln3 = std::log(3.0);
  CHECK_THAT(cllr(std::vector<double>{ln3}, std::vector<double>{-ln3}),
             WithinAbs(std::log2(4.0 / 3.0), 1e-15));
}

TEST_CASE("min_c never exceeds act_c") {
  Rng rng(42);
  CostConfig cfg{0.05};
  for (int rep = 0; rep < 300; ++rep) {
    auto [tar, non] = random_scores(rng);
    CHECK(min_c(tar, non, cfg) <= act_c(tar, non, cfg));
  }
}

TEST_CASE("eer and min_c are invariant under increasing transforms") {
  Rng rng(7);
  CostConfig cfg{0.05};
  for (int rep = 0; rep < 50; ++rep) {
    auto [tar, non] = random_scores(rng, 30);
    auto affine = [](double s) { return 2.0 * s + 1.0; };
    auto squash = [](double s) { return std::tanh(s); };
    for (auto f : {+affine, +squash}) {
      std::vector<double> tar2, non2;
      for (double s : tar) tar2.push_back(f(s));
      for (double s : non) non2.push_back(f(s));
      CHECK_THAT(eer(tar2, non2), WithinAbs(eer(tar, non), 1e-12));
      CHECK_THAT(min_c(tar2, non2, cfg),
                 WithinAbs(min_c(tar, non, cfg), 1e-12));
    }
  }
}

TEST_CASE("act_c is not invariant under score scaling") {
  CostConfig cfg{0.05};
  // theta* ~ 2.944: scaling by 2 pushes the nontarget past the threshold.
  std::vector<double> tar{3.5}, non{2.0};
  std::vector<double> tar2{7.0}, non2{4.0};
  CHECK(act_c(tar, non, cfg) == 0.0);
  CHECK(act_c(tar2, non2, cfg) == 19.0);
}

TEST_CASE("det curves are monotone in the threshold") {
  Rng rng(99);
  for (int rep = 0; rep < 100; ++rep) {
    auto [tar, non] = random_scores(rng, 40);
    auto points = det_points(tar, non);
    for (size_t i = 1; i < points.size(); ++i) {
      CHECK(points[i].threshold > points[i - 1].threshold);
      CHECK(points[i].p_fn >= points[i - 1].p_fn);
      CHECK(points[i].p_fp <= points[i - 1].p_fp);
    }
  }
}

TEST_CASE("all metrics agree with the naive sweep oracle") {
  Rng rng(2026);
  CostConfig cfg{0.05};
  for (int rep = 0; rep < 50; ++rep) {
    auto [tar, non] = random_scores(rng);
    CHECK_THAT(eer(tar, non), WithinAbs(oracle::eer(tar, non), 1e-12));
    CHECK_THAT(min_c(tar, non, cfg),
               WithinAbs(oracle::min_c(tar, non, 0.05), 1e-12));
    CHECK_THAT(act_c(tar, non, cfg),
               WithinAbs(oracle::act_c(tar, non, 0.05), 1e-12));
    CHECK_THAT(cllr(tar, non), WithinAbs(oracle::cllr(tar, non), 1e-12));
  }
}
