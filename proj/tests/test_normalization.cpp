// tests/test_normalization.cpp

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

#include <vector>

#include "fusebench/normalization.hpp"
#include "fusebench/random.hpp"

using namespace fusebench;
using Catch::Matchers::WithinAbs;

TEST_CASE("cohort stats over the top-K scores") {
  std::vector<double> cohort{0.5, 0.3, 0.7, 0.1};
  CohortStats s = cohort_stats(cohort, 2);
  CHECK(s.k_used == 2);
  CHECK_THAT(s.mu, WithinAbs(0.6, 1e-15));
  CHECK_THAT(s.sigma, WithinAbs(0.1, 1e-15));
}

TEST_CASE("constant cohorts hit the sigma floor") {
  std::vector<double> cohort{0.2, 0.2, 0.2};
  CHECK(cohort_stats(cohort, 2).sigma == 1e-6);
  CHECK(cohort_stats(cohort, 100).sigma == 1e-6);
}

TEST_CASE("top_k clamps to the cohort size") {
  std::vector<double> cohort{0.1, 0.4};
  CohortStats s = cohort_stats(cohort, 50);
  CHECK(s.k_used == 2);
  CHECK_THAT(s.mu, WithinAbs(0.25, 1e-15));
}

TEST_CASE("cohort stats reject bad inputs") {
  std::vector<double> empty;
  CHECK_THROWS_AS(cohort_stats(empty, 5), ValidationError);
  std::vector<double> ok{0.1, 0.2};
  CHECK_THROWS_AS(cohort_stats(ok, 1), ValidationError);
}

TEST_CASE("as_norm examples") {
  CohortStats e{"e", 0.6, 0.1, 2};
  CohortStats t{"t", 0.1, 0.1, 2};
  CHECK_THAT(as_norm(1.0, e, t), WithinAbs(6.5, 1e-12));

  CohortStats centered{"c", 0.4, 0.25, 3};
  CHECK(as_norm(0.4, centered, centered) == 0.0);

  // Equal stats on both sides reduce to a plain z-norm.
  CohortStats z{"z", 0.2, 0.5, 4};
  CHECK_THAT(as_norm(0.9, z, z), WithinAbs((0.9 - 0.2) / 0.5, 1e-15));
}

TEST_CASE("as_norm is affine-invariant when the cohort moves with the score") {
  Rng rng(77);
  for (int rep = 0; rep < 40; ++rep) {
    std::vector<double> cohort_e, cohort_t;
    for (int i = 0; i < 25; ++i) cohort_e.push_back(rng.normal());
    for (int i = 0; i < 30; ++i) cohort_t.push_back(rng.normal());
    double s = rng.normal();
    double base = as_norm(s, cohort_stats(cohort_e, 10),
                          cohort_stats(cohort_t, 10));
    for (double alpha : {0.5, 3.0}) {
      for (double beta : {-2.0, 5.0}) {
        auto transform = [&](const std::vector<double>& v) {
          std::vector<double> out;
          for (double x : v) out.push_back(alpha * x + beta);
          return out;
        };
        double mapped = as_norm(alpha * s + beta,
                                cohort_stats(transform(cohort_e), 10),
                                cohort_stats(transform(cohort_t), 10));
        CHECK_THAT(mapped, WithinAbs(base, 1e-9));
      }
    }
  }
}

TEST_CASE("as_norm is strictly increasing in the trial score") {
  CohortStats e{"e", 0.1, 0.2, 5};
  CohortStats t{"t", -0.3, 0.7, 5};
  double prev = as_norm(-2.0, e, t);
  for (double s = -1.8; s < 2.0; s += 0.2) {
    double cur = as_norm(s, e, t);
    CHECK(cur > prev);
    prev = cur;
  }
}

TEST_CASE("as_norm is symmetric in its two sides") {
  CohortStats a{"a", 0.25, 0.11, 7};
  CohortStats b{"b", -0.4, 0.33, 9};
  CHECK(as_norm(0.6, a, b) == as_norm(0.6, b, a));
}
