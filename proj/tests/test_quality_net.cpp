// tests/test_quality_net.cpp

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

#include "fusebench/quality_net.hpp"
#include "fusebench/random.hpp"
#include "fusebench/synth.hpp"
#include "oracles.hpp"

using namespace fusebench;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

QualityNetParams random_params(Rng& rng, int d, int h, int classes,
                               double scale = 1.0, double margin = 0.0) {
  QualityNetParams p;
  p.scale = scale;
  p.margin = margin;
  for (int i = 0; i < h * d; ++i) p.w1.push_back(rng.normal() * 0.5);
  for (int i = 0; i < h; ++i) p.b1.push_back(rng.normal() * 0.1);
  for (int i = 0; i < h; ++i) p.w2.push_back(rng.normal() * 0.5);
  p.b2 = rng.normal() * 0.1;
  for (int j = 0; j < classes; ++j) {
    std::vector<double> row = rng.normal_vector(d);
    row = l2_normalize(row);
    p.head.insert(p.head.end(), row.begin(), row.end());
  }
  return p;
}

double tuple_loss(const QualityNetParams& params,
                  const std::vector<std::vector<double>>& members, int y) {
  std::vector<double> q;
  for (const auto& e : members) q.push_back(quality_forward(params, e));
  std::vector<double> ebar = weighted_average(members, q);
  return arcface_loss(params, ebar, y).loss;
}

}  // namespace

TEST_CASE("quality_forward is 0.5 for all-zero parameters") {
  QualityNetParams p;
  p.w1.assign(8 * 4, 0.0);
  p.b1.assign(8, 0.0);
  p.w2.assign(8, 0.0);
  p.b2 = 0.0;
  p.head.assign(2 * 4, 0.0);
  std::vector<double> e{1.0, -2.0, 0.5, 3.0};
  CHECK(quality_forward(p, e) == 0.5);
}

TEST_CASE("quality_forward stays strictly inside (0,1) and is deterministic") {
  Rng rng(12);
  QualityNetParams p = random_params(rng, 6, 16, 3);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> e = rng.normal_vector(6);
    double q = quality_forward(p, e);
    CHECK(q > 0.0);
    CHECK(q < 1.0);
    CHECK(quality_forward(p, e) == q);
  }
  std::vector<double> wrong_dim{1.0, 2.0};
  CHECK_THROWS_AS(quality_forward(p, wrong_dim), ValidationError);
}

TEST_CASE("weighted_average follows the quality weights") {
  std::vector<std::vector<double>> embs = {{1.0, 0.0}, {0.0, 1.0}};
  std::vector<double> q{0.75, 0.25};
  std::vector<double> avg = weighted_average(embs, q);
  CHECK_THAT(avg[0], WithinAbs(0.75, 1e-15));
  CHECK_THAT(avg[1], WithinAbs(0.25, 1e-15));

  std::vector<double> equal{0.4, 0.4};
  std::vector<double> mean = weighted_average(embs, equal);
  CHECK_THAT(mean[0], WithinAbs(0.5, 1e-15));

  std::vector<std::vector<double>> none;
  std::vector<double> no_q;
  CHECK_THROWS_AS(weighted_average(none, no_q), ValidationError);
}

TEST_CASE("weighted_average is invariant to rescaling the quality vector") {
  Rng rng(4);
  std::vector<std::vector<double>> embs;
  std::vector<double> q;
  for (int i = 0; i < 5; ++i) {
    embs.push_back(rng.normal_vector(7));
    q.push_back(rng.uniform(0.05, 1.0));
  }
  std::vector<double> base = weighted_average(embs, q);
  for (double c : {1e-3, 0.1, 1.0, 1e3}) {
    std::vector<double> scaled;
    for (double v : q) scaled.push_back(c * v);
    std::vector<double> rescaled = weighted_average(embs, scaled);
    for (size_t k = 0; k < base.size(); ++k)
      CHECK_THAT(rescaled[k], WithinAbs(base[k], 1e-12));
  }
}

TEST_CASE("tiny qualities are clamped, keeping the average finite") {
  std::vector<std::vector<double>> embs = {{2.0, 0.0}, {0.0, 2.0}};
  std::vector<double> q{0.9, 1e-9};
  std::vector<double> avg = weighted_average(embs, q);
  CHECK_THAT(avg[0], WithinRel(2.0, 1e-5));
  CHECK_THAT(avg[1], WithinAbs(0.0, 1e-5));
}

TEST_CASE("arcface loss equals log 2 in the symmetric margin-free case") {
  QualityNetParams p;
  p.scale = 1.0;
  p.margin = 0.0;
  // Two head rows at the same angle from the input direction.
  p.w1.assign(1 * 2, 0.0);
  p.b1.assign(1, 0.0);
  p.w2.assign(1, 0.0);
  double s32 = std::sqrt(3.0) / 2.0;
  p.head = {0.5, s32, 0.5, -s32};  // both rows have cos 0.5 against (1,0)
  std::vector<double> ebar{1.0, 0.0};
  ArcFaceResult r = arcface_loss(p, ebar, 0);
  CHECK_THAT(r.loss, WithinAbs(std::log(2.0), 1e-15));
}

TEST_CASE("zero margin reduces to softmax cross-entropy on scaled cosines") {
  Rng rng(9);
  for (int rep = 0; rep < 20; ++rep) {
    QualityNetParams p = random_params(rng, 5, 4, 4, 7.0, 0.0);
    std::vector<double> ebar = rng.normal_vector(5);
    int y = rng.uniform_int(4);
    ArcFaceResult r = arcface_loss(p, ebar, y);

    // Plain cross-entropy, computed separately.
    std::vector<double> u = l2_normalize(ebar);
    std::vector<double> logits;
    for (int j = 0; j < 4; ++j) {
      double c = 0.0;
      for (int k = 0; k < 5; ++k)
        c += p.head[static_cast<size_t>(j * 5 + k)] *
             u[static_cast<size_t>(k)];
      logits.push_back(p.scale * c);
    }
    double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    double ce = mx + std::log(z) - logits[static_cast<size_t>(y)];
    CHECK_THAT(r.loss, WithinAbs(ce, 1e-12));
  }
}

TEST_CASE("arcface gradients match central finite differences") {
  Rng rng(33);
  const double h = 1e-5;
  for (int rep = 0; rep < 20; ++rep) {
    QualityNetParams p = random_params(rng, 6, 4, 5, 12.0, 0.25);
    std::vector<double> ebar = rng.normal_vector(6);
    int y = rng.uniform_int(5);
    ArcFaceResult r = arcface_loss(p, ebar, y);

    for (int k = 0; k < 6; ++k) {
      double fd = oracle::central_diff(
          [&](double v) {
            std::vector<double> e2 = ebar;
            e2[static_cast<size_t>(k)] = v;
            return arcface_loss(p, e2, y).loss;
          },
          ebar[static_cast<size_t>(k)], h);
      double analytic = r.grad_ebar[static_cast<size_t>(k)];
      CHECK_THAT(analytic,
                 WithinAbs(fd, 1e-4 * std::max(1.0, std::fabs(fd))));
    }
    for (size_t k = 0; k < p.head.size(); ++k) {
      double fd = oracle::central_diff(
          [&](double v) {
            QualityNetParams p2 = p;
            p2.head[k] = v;
            return arcface_loss(p2, ebar, y).loss;
          },
          p.head[k], h);
      CHECK_THAT(r.grad_head[k],
                 WithinAbs(fd, 1e-4 * std::max(1.0, std::fabs(fd))));
    }
  }
}

TEST_CASE("arcface rejects a zero-norm aggregate and bad class index") {
  Rng rng(3);
  QualityNetParams p = random_params(rng, 3, 2, 2);
  std::vector<double> zero{0.0, 0.0, 0.0};
  CHECK_THROWS_AS(arcface_loss(p, zero, 0), ValidationError);
  std::vector<double> ok{1.0, 0.0, 0.0};
  CHECK_THROWS_AS(arcface_loss(p, ok, 2), ValidationError);
}

TEST_CASE("full composition gradient matches finite differences") {
  Rng rng(71);
  const double h = 1e-5;
  for (int rep = 0; rep < 20; ++rep) {
    QualityNetParams p = random_params(rng, 5, 3, 4, 9.0, 0.2);
    std::vector<std::vector<double>> members;
    for (int i = 0; i < 3; ++i)
      members.push_back(l2_normalize(rng.normal_vector(5)));
    int y = rng.uniform_int(4);
    std::vector<std::span<const double>> tuple;
    for (const auto& e : members) tuple.emplace_back(e);
    TupleGrads g = quality_tuple_backward(p, tuple, y);
    CHECK_THAT(g.loss, WithinAbs(tuple_loss(p, members, y), 1e-12));

    auto check_param = [&](double* slot, double analytic) {
      double original = *slot;
      double fd = oracle::central_diff(
          [&](double v) {
            *slot = v;
            double loss = tuple_loss(p, members, y);
            *slot = original;
            return loss;
          },
          original, h);
      CHECK_THAT(analytic,
                 WithinAbs(fd, 1e-4 * std::max(1.0, std::fabs(fd))));
    };
    for (size_t k = 0; k < p.w1.size(); ++k) check_param(&p.w1[k], g.w1[k]);
    for (size_t k = 0; k < p.b1.size(); ++k) check_param(&p.b1[k], g.b1[k]);
    for (size_t k = 0; k < p.w2.size(); ++k) check_param(&p.w2[k], g.w2[k]);
    check_param(&p.b2, g.b2);
    for (size_t k = 0; k < p.head.size(); ++k)
      check_param(&p.head[k], g.head[k]);
  }
}

namespace {

std::vector<Embedding> two_tier_data(std::uint64_t seed, int n_identities,
                                     int dim, int samples) {
  SynthConfig cfg;
  cfg.n_identities = n_identities;
  cfg.dim_speaker = dim;
  cfg.dim_face = dim;
  cfg.samples_per_identity = samples;
  cfg.noise_low = 0.1;
  cfg.noise_high = 1.2;
  cfg.p_degraded = 0.5;
  cfg.seed = seed;
  Prototypes protos = gen_identities(cfg);
  return gen_observations(cfg, protos).speaker;
}

}  // namespace

TEST_CASE("training is bit-deterministic under a fixed seed") {
  std::vector<Embedding> data = two_tier_data(5, 6, 8, 8);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 123;
  QualityTrainResult a = train_quality_net(data, cfg);
  QualityTrainResult b = train_quality_net(data, cfg);
  CHECK(a.params == b.params);
  CHECK(a.epoch_mean_loss == b.epoch_mean_loss);
}

TEST_CASE("training loss decreases and head rows stay unit norm") {
  std::vector<Embedding> data = two_tier_data(8, 10, 16, 12);
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.seed = 99;
  QualityTrainResult r = train_quality_net(data, cfg);
  CHECK(r.epoch_mean_loss.back() < r.epoch_mean_loss.front());
  const int d = r.params.dim();
  for (int j = 0; j < r.params.classes(); ++j) {
    double norm_sq = 0.0;
    for (int k = 0; k < d; ++k) {
      double v = r.params.head[static_cast<size_t>(j * d + k)];
      norm_sq += v * v;
    }
    CHECK_THAT(std::sqrt(norm_sq), WithinAbs(1.0, 1e-9));
  }
}

TEST_CASE("clean embeddings earn higher predicted quality than noisy ones") {
  // Hold out the last quarter of each identity's samples.
  std::vector<Embedding> all = two_tier_data(17, 24, 24, 16);
  std::vector<Embedding> train, held;
  for (size_t i = 0; i < all.size(); ++i)
    ((i % 16) < 12 ? train : held).push_back(all[i]);
  TrainConfig cfg;
  cfg.epochs = 250;
  cfg.learning_rate = 0.1;
  cfg.seed = 7;
  QualityNetParams net = train_quality_net(train, cfg).params;
  double sum_clean = 0.0, sum_noisy = 0.0;
  int n_clean = 0, n_noisy = 0;
  for (const Embedding& e : held) {
    double q = quality_forward(net, e);
    if (*e.true_noise <= 0.1) {
      sum_clean += q;
      ++n_clean;
    } else if (*e.true_noise >= 0.5) {
      sum_noisy += q;
      ++n_noisy;
    }
  }
  REQUIRE(n_clean > 0);
  REQUIRE(n_noisy > 0);
  CHECK(sum_clean / n_clean > sum_noisy / n_noisy);
}

TEST_CASE("identities with too few samples are skipped with a warning") {
  std::vector<Embedding> data = two_tier_data(5, 4, 8, 6);
  // Strip one identity down to 2 samples (tuple size is 3).
  std::vector<Embedding> pruned;
  int kept_id0 = 0;
  for (const Embedding& e : data) {
    if (*e.identity == "id0000" && kept_id0 >= 2) continue;
    if (*e.identity == "id0000") ++kept_id0;
    pruned.push_back(e);
  }
  TrainConfig cfg;
  cfg.epochs = 1;
  QualityTrainResult r = train_quality_net(pruned, cfg);
  REQUIRE(r.warnings.size() == 1);
  CHECK(r.warnings[0].find("id0000") != std::string::npos);

  // With fewer than two trainable identities, training must fail.
  std::vector<Embedding> tiny;
  for (const Embedding& e : data)
    if (*e.identity == "id0001" || (*e.identity == "id0000" &&
                                    tiny.size() < 2))
      tiny.push_back(e);
  CHECK_THROWS_AS(train_quality_net(tiny, cfg), ValidationError);
}

TEST_CASE("predict_qualities maps the batch in order") {
  Rng rng(6);
  QualityNetParams p = random_params(rng, 4, 8, 2);
  std::vector<Embedding> none;
  CHECK(predict_qualities(p, none).empty());

  std::vector<Embedding> batch;
  for (int i = 0; i < 3; ++i) {
    Embedding e;
    e.id = "x" + std::to_string(i);
    e.values = rng.normal_vector(4);
    batch.push_back(e);
  }
  auto out = predict_qualities(p, batch);
  REQUIRE(out.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(out[static_cast<size_t>(i)].first == batch[static_cast<size_t>(i)].id);
    CHECK(out[static_cast<size_t>(i)].second ==
          quality_forward(p, batch[static_cast<size_t>(i)]));
  }
}

TEST_CASE("quality net parameters round-trip through the TSV format") {
  oracle::TempDir dir("qnet_io");
  Rng rng(44);
  QualityNetParams p = random_params(rng, 5, 7, 3, 30.0, 0.2);
  save_quality_net(p, dir / "net.tsv");
  QualityNetParams back = load_quality_net(dir / "net.tsv");
  CHECK(back == p);
}
