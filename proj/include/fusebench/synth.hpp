// fusebench/synth.hpp

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

// Ground-truth-bearing synthetic two-modality embedding data.  Identities
// are unit vectors on the sphere; an observation is
// normalize(prototype + sigma * gaussian), with sigma drawn per segment and
// per modality: with probability p_degraded, uniform in
// [noise_low, noise_high], otherwise noise_low.  sigma is recorded as
// true_noise, giving every generated embedding a ground-truth quality.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fusebench/random.hpp"
#include "fusebench/types.hpp"

namespace fusebench {

struct SynthConfig {
  int n_identities = 100;
  int dim_speaker = 64;
  int dim_face = 64;
  int samples_per_identity = 20;
  double noise_low = 0.1;
  double noise_high = 1.5;
  double p_degraded = 0.5;
  int trials = 2000;
  std::uint64_t seed = 0;
};

inline void validate(const SynthConfig& cfg) {
  if (cfg.n_identities < 2)
    throw ValidationError("need at least 2 identities");
  if (cfg.dim_speaker < 1 || cfg.dim_face < 1)
    throw ValidationError("embedding dimensions must be >= 1");
  if (cfg.samples_per_identity < 1)
    throw ValidationError("samples_per_identity must be >= 1");
  if (cfg.noise_low < 0.0)
    throw ValidationError("noise_low must be >= 0");
  if (!(cfg.noise_high > cfg.noise_low))
    throw ValidationError("noise_high must be > noise_low");
  if (!(cfg.p_degraded >= 0.0 && cfg.p_degraded <= 1.0))
    throw ValidationError("p_degraded must be in [0,1]");
  if (cfg.trials < 1) throw ValidationError("trials must be >= 1");
}

inline std::uint64_t substream(std::uint64_t seed, std::uint64_t tag) {
  return splitmix64(seed + tag * 0x9e3779b97f4a7c15ULL);
}

inline std::vector<double> l2_normalize(std::vector<double> v) {
  double norm_sq = 0.0;
  for (double x : v) norm_sq += x * x;
  if (norm_sq == 0.0) throw ValidationError("cannot normalize a zero vector");
  double inv = 1.0 / std::sqrt(norm_sq);
  for (double& x : v) x *= inv;
  return v;
}

struct Prototypes {
  std::vector<std::string> identity_names;
  std::vector<std::vector<double>> speaker;
  std::vector<std::vector<double>> face;
};

// Unit-norm identity prototypes per modality (Gaussian, then normalized, so
// uniform on the sphere).  Near-orthogonal at desk-scale dimensions.
inline Prototypes gen_identities(const SynthConfig& cfg) {
  validate(cfg);
  Prototypes protos;
  Rng rng(substream(cfg.seed, 1));
  char buf[32];
  for (int i = 0; i < cfg.n_identities; ++i) {
    std::snprintf(buf, sizeof(buf), "id%04d", i);
    protos.identity_names.emplace_back(buf);
    protos.speaker.push_back(l2_normalize(rng.normal_vector(cfg.dim_speaker)));
  }
  for (int i = 0; i < cfg.n_identities; ++i)
    protos.face.push_back(l2_normalize(rng.normal_vector(cfg.dim_face)));
  return protos;
}

// Parallel per-modality observation collections: element k of both vectors
// is the same segment seen by the two modalities, with independent noise.
struct Observations {
  std::vector<Embedding> speaker;
  std::vector<Embedding> face;
};

inline Observations gen_observations(const SynthConfig& cfg,
                                     const Prototypes& protos) {
  validate(cfg);
  Observations obs;
  Rng rng(substream(cfg.seed, 2));
  auto draw = [&](const std::vector<double>& proto, Modality modality,
                  const std::string& id, const std::string& identity) {
    double sigma = cfg.noise_low;
    if (rng.uniform() < cfg.p_degraded)
      sigma = rng.uniform(cfg.noise_low, cfg.noise_high);
    std::vector<double> v(proto.size());
    for (size_t k = 0; k < v.size(); ++k)
      v[k] = proto[k] + sigma * rng.normal();
    Embedding e;
    e.id = id;
    e.modality = modality;
    e.values = l2_normalize(std::move(v));
    e.identity = identity;
    e.true_noise = sigma;
    return e;
  };
  char buf[48];
  for (size_t i = 0; i < protos.identity_names.size(); ++i) {
    const std::string& identity = protos.identity_names[i];
    for (int s = 0; s < cfg.samples_per_identity; ++s) {
      std::snprintf(buf, sizeof(buf), "%s.s%03d", identity.c_str(), s);
      obs.speaker.push_back(
          draw(protos.speaker[i], Modality::kSpeaker, buf, identity));
      obs.face.push_back(draw(protos.face[i], Modality::kFace, buf, identity));
    }
  }
  return obs;
}

// One simulated test recording: a bag of segment indices (into the parallel
// observation arrays) drawn from 1..k_max identities.
struct SynthRecording {
  std::string id;
  std::vector<int> segments;
  std::set<std::string> identities;
};

struct SynthTrials {
  // identity -> per-modality enrollment sample indices (the M lowest-noise
  // samples of that identity in that modality).
  std::map<std::string, std::vector<int>> enroll_speaker;
  std::map<std::string, std::vector<int>> enroll_face;
  std::vector<SynthRecording> recordings;
  ScoreTable skeleton;  // one record per trial, no systems yet
  std::vector<KeyEntry> key;
};

// Builds enrollments, test recordings and a labeled trial list over the
// given observations.  Every member identity of a recording yields a target
// trial; nontargets are sampled globally at nine per target, so the target
// fraction sits at 0.1 by construction.
inline SynthTrials gen_trials(const SynthConfig& cfg, const Observations& obs,
                              int k_max = 3, int enroll_m = 3) {
  validate(cfg);
  if (k_max < 1) throw ValidationError("k_max must be >= 1");
  if (enroll_m < 1) throw ValidationError("enroll_m must be >= 1");
  if (obs.speaker.size() != obs.face.size() || obs.speaker.empty())
    throw ValidationError("observations must be parallel and non-empty");

  // Index samples by identity, in order of first appearance.
  std::vector<std::string> identities;
  std::map<std::string, std::vector<int>> samples;
  for (size_t i = 0; i < obs.speaker.size(); ++i) {
    const std::string& identity = *obs.speaker[i].identity;
    auto [it, inserted] = samples.try_emplace(identity);
    if (inserted) identities.push_back(identity);
    it->second.push_back(static_cast<int>(i));
  }
  const int pool = static_cast<int>(identities.size());
  if (pool < 2) throw ValidationError("need at least 2 identities in pool");
  if (k_max > pool) throw ValidationError("k_max exceeds identity pool");

  SynthTrials out;
  // Enrollment: the enroll_m cleanest samples per identity and modality.
  auto pick_cleanest = [&](const std::vector<Embedding>& embs,
                           const std::vector<int>& idx) {
    if (static_cast<int>(idx.size()) < enroll_m)
      throw ValidationError("identity has fewer than " +
                            std::to_string(enroll_m) + " samples");
    std::vector<int> order = idx;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return *embs[static_cast<size_t>(a)].true_noise <
             *embs[static_cast<size_t>(b)].true_noise;
    });
    order.resize(static_cast<size_t>(enroll_m));
    std::sort(order.begin(), order.end());
    return order;
  };
  // Segments for recordings come from the non-enrollment remainder.
  std::map<std::string, std::vector<int>> free_samples;
  for (const std::string& identity : identities) {
    const std::vector<int>& idx = samples[identity];
    out.enroll_speaker[identity] = pick_cleanest(obs.speaker, idx);
    out.enroll_face[identity] = pick_cleanest(obs.face, idx);
    std::set<int> used(out.enroll_speaker[identity].begin(),
                       out.enroll_speaker[identity].end());
    used.insert(out.enroll_face[identity].begin(),
                out.enroll_face[identity].end());
    std::vector<int>& free = free_samples[identity];
    for (int i : idx)
      if (!used.count(i)) free.push_back(i);
    if (free.size() < 2)
      throw ValidationError("identity '" + identity +
                            "' has too few samples left for test recordings");
  }

  Rng rng(substream(cfg.seed, 3));
  const double mean_k = 0.5 * (1.0 + static_cast<double>(k_max));
  int n_rec = std::max(
      1, static_cast<int>(std::lround(cfg.trials / (10.0 * mean_k))));
  int n_targets = 0;
  char buf[32];
  for (int r = 0; r < n_rec; ++r) {
    SynthRecording rec;
    std::snprintf(buf, sizeof(buf), "rec%04d", r);
    rec.id = buf;
    int k = 1 + rng.uniform_int(k_max);
    for (int who : rng.sample_without_replacement(pool, k)) {
      const std::string& identity = identities[static_cast<size_t>(who)];
      rec.identities.insert(identity);
      const std::vector<int>& free = free_samples[identity];
      int n_seg = 2 + rng.uniform_int(
                          std::min(3, static_cast<int>(free.size()) - 1));
      for (int pick : rng.sample_without_replacement(
               static_cast<int>(free.size()), n_seg))
        rec.segments.push_back(free[static_cast<size_t>(pick)]);
    }
    std::sort(rec.segments.begin(), rec.segments.end());
    n_targets += k;
    out.recordings.push_back(std::move(rec));
  }

  // Target trials: every (member identity, recording) pair.
  std::vector<std::pair<int, int>> nontarget_candidates;
  for (int r = 0; r < n_rec; ++r)
    for (int who = 0; who < pool; ++who)
      if (!out.recordings[static_cast<size_t>(r)].identities.count(
              identities[static_cast<size_t>(who)]))
        nontarget_candidates.emplace_back(who, r);
  rng.shuffle(nontarget_candidates);
  size_t n_nontargets =
      std::min(nontarget_candidates.size(), static_cast<size_t>(9) *
                                                static_cast<size_t>(n_targets));

  std::vector<std::pair<std::string, std::string>> trial_pairs;
  std::vector<TrialLabel> labels;
  for (const SynthRecording& rec : out.recordings)
    for (const std::string& identity : rec.identities) {
      trial_pairs.emplace_back(identity, rec.id);
      labels.push_back(TrialLabel::kTarget);
    }
  for (size_t i = 0; i < n_nontargets; ++i) {
    const auto& [who, r] = nontarget_candidates[i];
    trial_pairs.emplace_back(identities[static_cast<size_t>(who)],
                             out.recordings[static_cast<size_t>(r)].id);
    labels.push_back(TrialLabel::kNontarget);
  }

  for (size_t i = 0; i < trial_pairs.size(); ++i) {
    TrialRecord rec;
    rec.enroll_id = trial_pairs[i].first;
    rec.test_id = trial_pairs[i].second;
    rec.label = labels[i];
    out.skeleton.records.push_back(std::move(rec));
    out.key.push_back({trial_pairs[i].first, trial_pairs[i].second,
                       labels[i]});
  }
  return out;
}

}  // namespace fusebench
