// fusebench/bench.hpp

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

// End-to-end synthetic benchmark.  Identities are split four ways (quality
// training / normalization cohort / dev / eval, disjoint); per modality the
// pipeline is score -> as-norm -> calibrate, with calibration and fusion
// trained on dev only; the report carries seven fusion variants, each with
// EER/minC/actC on both splits:
//
//   audio-only, visual-only, sum, lr, lr-qspk, lr-qface, lr-qall

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fusebench/calibration.hpp"
#include "fusebench/clustering.hpp"
#include "fusebench/io.hpp"
#include "fusebench/metrics.hpp"
#include "fusebench/normalization.hpp"
#include "fusebench/quality_net.hpp"
#include "fusebench/synth.hpp"
#include "fusebench/text.hpp"
#include "fusebench/types.hpp"

namespace fusebench {

struct BenchConfig {
  SynthConfig synth;
  int k_max = 3;
  int enroll_m = 3;
  int top_k = 200;
  double p_tar = 0.05;
  double lambda = 1e-6;
  int qnet_epochs = 150;
  double qnet_lr = 0.05;
  int qnet_hidden = 0;  // 0 selects max(16, dim/2)
  int qnet_tuple = 3;
  double qnet_scale = 30.0;
  double qnet_margin = 0.2;
};

struct MetricTriple {
  double eer = 0.0;
  double min_c = 0.0;
  double act_c = 0.0;
};

struct VariantResult {
  std::string name;
  MetricTriple dev;
  MetricTriple eval;
};

struct BenchReport {
  std::vector<VariantResult> rows;
};

// Disjoint identity pools: 40% quality training, 20% cohort, 20% dev,
// remainder eval.
struct IdentitySplit {
  std::vector<int> qtrain;
  std::vector<int> cohort;
  std::vector<int> dev;
  std::vector<int> eval;
};

inline IdentitySplit split_identities(int n_identities) {
  int n_q = std::max(2, n_identities * 4 / 10);
  int n_c = std::max(1, n_identities * 2 / 10);
  int n_dev = std::max(2, n_identities * 2 / 10);
  if (n_q + n_c + n_dev + 2 > n_identities)
    throw ValidationError("need at least " +
                          std::to_string(n_q + n_c + n_dev + 2) +
                          " identities for the four benchmark pools");
  IdentitySplit split;
  int cursor = 0;
  for (int i = 0; i < n_q; ++i) split.qtrain.push_back(cursor++);
  for (int i = 0; i < n_c; ++i) split.cohort.push_back(cursor++);
  for (int i = 0; i < n_dev; ++i) split.dev.push_back(cursor++);
  while (cursor < n_identities) split.eval.push_back(cursor++);
  return split;
}

namespace detail {

inline Observations filter_observations(const Observations& obs,
                                        const std::set<std::string>& keep) {
  Observations out;
  for (size_t i = 0; i < obs.speaker.size(); ++i) {
    if (!obs.speaker[i].identity || !keep.count(*obs.speaker[i].identity))
      continue;
    out.speaker.push_back(obs.speaker[i]);
    out.face.push_back(obs.face[i]);
  }
  return out;
}

// Everything scoring needs for one (split, modality) pair.
struct SideScores {
  std::vector<double> raw;       // max-over-cluster cosine per trial
  std::vector<double> normed;    // as-normed
  std::vector<double> q_enroll;  // per trial
  std::vector<double> q_test;
};

inline SideScores score_side(const SynthTrials& trials,
                             const std::vector<Embedding>& split_obs,
                             const std::map<std::string, std::vector<int>>&
                                 enroll_map,
                             const QualityNetParams& net,
                             const std::vector<Embedding>& cohort_obs,
                             int k_max, int top_k) {
  std::vector<std::vector<double>> values;
  values.reserve(split_obs.size());
  for (const Embedding& e : split_obs) values.push_back(e.values);
  std::vector<double> member_q(values.size());
  for (size_t i = 0; i < values.size(); ++i)
    member_q[i] = quality_forward(net, values[i]);

  // Enrollment aggregates and their qualities / cohort stats.
  std::map<std::string, std::vector<double>> enroll_agg;
  std::map<std::string, double> enroll_quality;
  std::map<std::string, CohortStats> enroll_stats;
  std::vector<std::vector<double>> cohort_values;
  cohort_values.reserve(cohort_obs.size());
  for (const Embedding& e : cohort_obs) cohort_values.push_back(e.values);
  for (const auto& [identity, idx] : enroll_map) {
    std::vector<std::vector<double>> members;
    std::vector<double> weights;
    for (int i : idx) {
      members.push_back(values[static_cast<size_t>(i)]);
      weights.push_back(member_q[static_cast<size_t>(i)]);
    }
    std::vector<double> agg = weighted_average(members, weights);
    enroll_quality[identity] = quality_forward(net, l2_normalize(agg));
    std::vector<double> cohort_scores;
    cohort_scores.reserve(cohort_values.size());
    for (const auto& c : cohort_values) cohort_scores.push_back(cosine(agg, c));
    enroll_stats[identity] = cohort_stats(cohort_scores, top_k, identity);
    enroll_agg[identity] = std::move(agg);
  }

  // Per-recording cluster aggregates, their qualities, and cohort stats.
  struct RecordingView {
    std::vector<std::vector<double>> cluster_aggs;
    std::vector<double> cluster_quality;
    CohortStats stats;
  };
  std::map<std::string, RecordingView> recordings;
  for (const SynthRecording& rec : trials.recordings) {
    std::vector<std::vector<double>> segs;
    std::vector<double> seg_q;
    for (int i : rec.segments) {
      segs.push_back(values[static_cast<size_t>(i)]);
      seg_q.push_back(member_q[static_cast<size_t>(i)]);
    }
    int k_here = std::min<int>(k_max, static_cast<int>(segs.size()));
    ClusterSet clusters = partition_union(segs, k_here);
    RecordingView view;
    for (const std::vector<int>& cluster : clusters.clusters) {
      std::vector<double> agg = aggregate_cluster(segs, cluster, seg_q);
      view.cluster_quality.push_back(
          quality_forward(net, l2_normalize(agg)));
      view.cluster_aggs.push_back(std::move(agg));
    }
    std::vector<double> cohort_scores;
    cohort_scores.reserve(cohort_values.size());
    for (const auto& c : cohort_values) {
      double best = -std::numeric_limits<double>::infinity();
      for (const auto& agg : view.cluster_aggs)
        best = std::max(best, cosine(c, agg));
      cohort_scores.push_back(best);
    }
    view.stats = cohort_stats(cohort_scores, top_k, rec.id);
    recordings.emplace(rec.id, std::move(view));
  }

  SideScores out;
  out.raw.reserve(trials.skeleton.records.size());
  for (const TrialRecord& t : trials.skeleton.records) {
    const std::vector<double>& agg = enroll_agg.at(t.enroll_id);
    const RecordingView& view = recordings.at(t.test_id);
    double best = -std::numeric_limits<double>::infinity();
    size_t best_idx = 0;
    for (size_t c = 0; c < view.cluster_aggs.size(); ++c) {
      double s = cosine(agg, view.cluster_aggs[c]);
      if (s > best) {
        best = s;
        best_idx = c;
      }
    }
    out.raw.push_back(best);
    out.normed.push_back(
        as_norm(best, enroll_stats.at(t.enroll_id), view.stats));
    out.q_enroll.push_back(enroll_quality.at(t.enroll_id));
    out.q_test.push_back(view.cluster_quality[best_idx]);
  }
  return out;
}

inline std::pair<std::vector<double>, std::vector<double>> split_by_label(
    const std::vector<double>& scores, const SynthTrials& trials) {
  std::vector<double> tar, non;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (*trials.skeleton.records[i].label == TrialLabel::kTarget)
      tar.push_back(scores[i]);
    else
      non.push_back(scores[i]);
  }
  return {std::move(tar), std::move(non)};
}

inline MetricTriple score_metrics(const std::vector<double>& tar,
                                  const std::vector<double>& non,
                                  double p_tar) {
  CostConfig cost{p_tar};
  MetricTriple m;
  m.eer = eer(tar, non);
  m.min_c = min_c(tar, non, cost);
  m.act_c = act_c(tar, non, cost);
  return m;
}

inline MetricTriple table_metrics(const ScoreTable& table,
                                  const std::string& system, double p_tar) {
  std::vector<double> tar, non;
  for (const TrialRecord& rec : table.records) {
    double s = rec.systems.at(system).score;
    if (*rec.label == TrialLabel::kTarget)
      tar.push_back(s);
    else
      non.push_back(s);
  }
  return score_metrics(tar, non, p_tar);
}

}  // namespace detail

inline const std::vector<std::string>& bench_variant_names() {
  static const std::vector<std::string> names = {
      "audio-only", "visual-only", "sum", "lr",
      "lr-qspk",    "lr-qface",    "lr-qall"};
  return names;
}

inline BenchReport run_benchmark(const BenchConfig& cfg) {
  validate(cfg.synth);
  if (cfg.k_max < 1) throw ValidationError("k_max must be >= 1");
  if (!(cfg.p_tar > 0.0 && cfg.p_tar < 1.0))
    throw ValidationError("p_tar must be in (0,1)");

  Prototypes protos = gen_identities(cfg.synth);
  Observations obs = gen_observations(cfg.synth, protos);
  IdentitySplit split = split_identities(cfg.synth.n_identities);

  auto names_of = [&](const std::vector<int>& idx) {
    std::set<std::string> names;
    for (int i : idx)
      names.insert(protos.identity_names[static_cast<size_t>(i)]);
    return names;
  };
  Observations obs_qtrain =
      detail::filter_observations(obs, names_of(split.qtrain));
  Observations obs_cohort =
      detail::filter_observations(obs, names_of(split.cohort));
  Observations obs_dev = detail::filter_observations(obs, names_of(split.dev));
  Observations obs_eval =
      detail::filter_observations(obs, names_of(split.eval));

  TrainConfig tc;
  tc.tuple_size = cfg.qnet_tuple;
  tc.epochs = cfg.qnet_epochs;
  tc.learning_rate = cfg.qnet_lr;
  tc.hidden = cfg.qnet_hidden;
  tc.scale = cfg.qnet_scale;
  tc.margin = cfg.qnet_margin;
  tc.seed = substream(cfg.synth.seed, 10);
  QualityNetParams net_spk = train_quality_net(obs_qtrain.speaker, tc).params;
  tc.seed = substream(cfg.synth.seed, 11);
  QualityNetParams net_face = train_quality_net(obs_qtrain.face, tc).params;

  SynthConfig dev_cfg = cfg.synth;
  dev_cfg.seed = substream(cfg.synth.seed, 20);
  SynthTrials dev_trials =
      gen_trials(dev_cfg, obs_dev, cfg.k_max, cfg.enroll_m);
  SynthConfig eval_cfg = cfg.synth;
  eval_cfg.seed = substream(cfg.synth.seed, 21);
  SynthTrials eval_trials =
      gen_trials(eval_cfg, obs_eval, cfg.k_max, cfg.enroll_m);

  detail::SideScores dev_spk = detail::score_side(
      dev_trials, obs_dev.speaker, dev_trials.enroll_speaker, net_spk,
      obs_cohort.speaker, cfg.k_max, cfg.top_k);
  detail::SideScores dev_face = detail::score_side(
      dev_trials, obs_dev.face, dev_trials.enroll_face, net_face,
      obs_cohort.face, cfg.k_max, cfg.top_k);
  detail::SideScores eval_spk = detail::score_side(
      eval_trials, obs_eval.speaker, eval_trials.enroll_speaker, net_spk,
      obs_cohort.speaker, cfg.k_max, cfg.top_k);
  detail::SideScores eval_face = detail::score_side(
      eval_trials, obs_eval.face, eval_trials.enroll_face, net_face,
      obs_cohort.face, cfg.k_max, cfg.top_k);

  // Per-modality calibration, trained on dev.
  auto calibrate = [&](const detail::SideScores& dev_side) {
    std::vector<FeatureRow> rows;
    for (size_t i = 0; i < dev_side.normed.size(); ++i)
      rows.push_back({{dev_side.normed[i]},
                      *dev_trials.skeleton.records[i].label});
    return train_cllr_lr(rows, cfg.p_tar, cfg.lambda);
  };
  LrTrainResult cal_spk = calibrate(dev_spk);
  LrTrainResult cal_face = calibrate(dev_face);
  auto apply_cal = [](const LrTrainResult& cal, const std::vector<double>& s) {
    std::vector<double> out;
    out.reserve(s.size());
    for (double v : s) out.push_back(cal.w[0] * v + cal.d);
    return out;
  };
  std::vector<double> dev_llr_spk = apply_cal(cal_spk, dev_spk.normed);
  std::vector<double> dev_llr_face = apply_cal(cal_face, dev_face.normed);
  std::vector<double> eval_llr_spk = apply_cal(cal_spk, eval_spk.normed);
  std::vector<double> eval_llr_face = apply_cal(cal_face, eval_face.normed);

  // Merged two-system tables with calibrated LLRs and qualities.
  auto merge = [&](const SynthTrials& trials, const std::vector<double>& spk,
                   const std::vector<double>& face,
                   const detail::SideScores& side_spk,
                   const detail::SideScores& side_face) {
    ScoreTable table;
    table.roster = {"face", "speaker"};
    for (size_t i = 0; i < trials.skeleton.records.size(); ++i) {
      TrialRecord rec;
      rec.enroll_id = trials.skeleton.records[i].enroll_id;
      rec.test_id = trials.skeleton.records[i].test_id;
      rec.label = trials.skeleton.records[i].label;
      rec.systems.emplace("speaker",
                          SystemEntry{spk[i], side_spk.q_enroll[i],
                                      side_spk.q_test[i]});
      rec.systems.emplace("face", SystemEntry{face[i], side_face.q_enroll[i],
                                              side_face.q_test[i]});
      table.records.push_back(std::move(rec));
    }
    return table;
  };
  ScoreTable dev_table =
      merge(dev_trials, dev_llr_spk, dev_llr_face, dev_spk, dev_face);
  ScoreTable eval_table =
      merge(eval_trials, eval_llr_spk, eval_llr_face, eval_spk, eval_face);

  BenchReport report;
  auto add_row = [&](const std::string& name, const MetricTriple& dev,
                     const MetricTriple& eval) {
    report.rows.push_back({name, dev, eval});
  };

  auto single = [&](const std::vector<double>& dev_scores,
                    const std::vector<double>& eval_scores) {
    auto [dev_tar, dev_non] = detail::split_by_label(dev_scores, dev_trials);
    auto [ev_tar, ev_non] = detail::split_by_label(eval_scores, eval_trials);
    return std::make_pair(detail::score_metrics(dev_tar, dev_non, cfg.p_tar),
                          detail::score_metrics(ev_tar, ev_non, cfg.p_tar));
  };
  auto [dev_audio, eval_audio] = single(dev_llr_spk, eval_llr_spk);
  add_row("audio-only", dev_audio, eval_audio);
  auto [dev_visual, eval_visual] = single(dev_llr_face, eval_llr_face);
  add_row("visual-only", dev_visual, eval_visual);

  ScoreTable dev_sum = sum_fuse(dev_table);
  ScoreTable eval_sum = sum_fuse(eval_table);
  add_row("sum", detail::table_metrics(dev_sum, "sum", cfg.p_tar),
          detail::table_metrics(eval_sum, "sum", cfg.p_tar));

  auto lr_variant = [&](const std::string& name, bool q_spk, bool q_face) {
    std::map<std::string, bool> use_q = {{"speaker", q_spk},
                                         {"face", q_face}};
    auto [params, fused_dev] =
        fuse_with_qualities(dev_table, cfg.p_tar, use_q, cfg.lambda);
    ScoreTable fused_eval = apply_fusion_params(params, eval_table);
    add_row(name, detail::table_metrics(fused_dev, "fused", cfg.p_tar),
            detail::table_metrics(fused_eval, "fused", cfg.p_tar));
  };
  lr_variant("lr", false, false);
  lr_variant("lr-qspk", true, false);
  lr_variant("lr-qface", false, true);
  lr_variant("lr-qall", true, true);

  return report;
}

// Report TSV: a '#' header row, then one row per variant.
inline void save_bench_report(const BenchReport& report,
                              const std::filesystem::path& path) {
  AtomicWriter writer(path);
  std::ostream& out = writer.stream();
  out << "#variant\tdev_eer\tdev_minc\tdev_actc\teval_eer\teval_minc"
         "\teval_actc\n";
  for (const VariantResult& row : report.rows)
    out << row.name << '\t' << format_double(row.dev.eer) << '\t'
        << format_double(row.dev.min_c) << '\t' << format_double(row.dev.act_c)
        << '\t' << format_double(row.eval.eer) << '\t'
        << format_double(row.eval.min_c) << '\t'
        << format_double(row.eval.act_c) << '\n';
  writer.commit();
}

// TOML-style 'key = value' config with '#' comments; unknown keys are
// errors so typos cannot silently fall back to defaults.
inline BenchConfig load_bench_config(const std::filesystem::path& path) {
  std::ifstream in = detail::open_input(path);
  BenchConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t\r");
      size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string()
                                    : s.substr(a, b - a + 1);
    };
    std::string stripped = trim(line);
    if (stripped.empty()) continue;
    size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ParseError(path.string(), lineno, "expected key = value");
    std::string key = trim(stripped.substr(0, eq));
    std::string value = trim(stripped.substr(eq + 1));
    double v = 0.0;
    if (!try_parse_double(value, &v))
      throw ParseError(path.string(), lineno,
                       "unparsable value '" + value + "'");
    auto as_int = [&](const char* what) {
      if (v != std::floor(v))
        throw ParseError(path.string(), lineno,
                         std::string(what) + " must be an integer");
      return static_cast<int>(v);
    };
    if (key == "n_identities") cfg.synth.n_identities = as_int(key.c_str());
    else if (key == "dim_speaker") cfg.synth.dim_speaker = as_int(key.c_str());
    else if (key == "dim_face") cfg.synth.dim_face = as_int(key.c_str());
    else if (key == "samples_per_identity")
      cfg.synth.samples_per_identity = as_int(key.c_str());
    else if (key == "noise_low") cfg.synth.noise_low = v;
    else if (key == "noise_high") cfg.synth.noise_high = v;
    else if (key == "p_degraded") cfg.synth.p_degraded = v;
    else if (key == "trials") cfg.synth.trials = as_int(key.c_str());
    else if (key == "seed")
      cfg.synth.seed = static_cast<std::uint64_t>(v);
    else if (key == "k_max") cfg.k_max = as_int(key.c_str());
    else if (key == "enroll_m") cfg.enroll_m = as_int(key.c_str());
    else if (key == "top_k") cfg.top_k = as_int(key.c_str());
    else if (key == "p_tar") cfg.p_tar = v;
    else if (key == "lambda") cfg.lambda = v;
    else if (key == "qnet_epochs") cfg.qnet_epochs = as_int(key.c_str());
    else if (key == "qnet_lr") cfg.qnet_lr = v;
    else if (key == "qnet_hidden") cfg.qnet_hidden = as_int(key.c_str());
    else if (key == "qnet_tuple") cfg.qnet_tuple = as_int(key.c_str());
    else if (key == "qnet_scale") cfg.qnet_scale = v;
    else if (key == "qnet_margin") cfg.qnet_margin = v;
    else
      throw ParseError(path.string(), lineno, "unknown key '" + key + "'");
  }
  return cfg;
}

}  // namespace fusebench
