// tools/fusebench_main.cpp

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

// Command-line front end.  One subcommand per pipeline stage:
//
//   synth           generate a synthetic two-modality corpus
//   train-quality   train the embedding-quality network
//   predict-quality score embeddings with a trained quality network
//   score           enrollment-vs-recording cosine scoring with clustering
//   norm            adaptive-symmetric score normalization against a cohort
//   calibrate       single-system LLR calibration
//   fuse            multi-system fusion (sum rule or logistic regression)
//   eval            EER / minC / actC / Cllr for labeled score files
//   det             detection trade-off sweep as CSV
//   bench           end-to-end synthetic benchmark report
//
// Exit codes: 0 success, 1 data/validation error, 2 usage error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fusebench/bench.hpp"
#include "fusebench/calibration.hpp"
#include "fusebench/clustering.hpp"
#include "fusebench/io.hpp"
#include "fusebench/metrics.hpp"
#include "fusebench/normalization.hpp"
#include "fusebench/quality_net.hpp"
#include "fusebench/synth.hpp"
#include "fusebench/types.hpp"

namespace fs = std::filesystem;
using namespace fusebench;

namespace {

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("FUSEBENCH_SEED")) {
    double v = 0.0;
    if (!try_parse_double(env, &v) || v < 0)
      throw ValidationError("FUSEBENCH_SEED is not a non-negative number");
    return static_cast<std::uint64_t>(v);
  }
  return 0;
}

// Group ids like 'rec0001/s03' by the prefix before the first '/'; a bare id
// forms its own singleton group.  First-appearance order is kept.
std::vector<std::pair<std::string, std::vector<size_t>>> group_by_prefix(
    const std::vector<Embedding>& embeddings) {
  std::vector<std::pair<std::string, std::vector<size_t>>> groups;
  std::map<std::string, size_t> index;
  for (size_t i = 0; i < embeddings.size(); ++i) {
    std::string prefix = embeddings[i].id.substr(
        0, embeddings[i].id.find('/'));
    auto [it, inserted] = index.try_emplace(prefix, groups.size());
    if (inserted) groups.push_back({prefix, {}});
    groups[it->second].second.push_back(i);
  }
  return groups;
}

struct TestGroup {
  std::string id;
  std::vector<std::vector<double>> cluster_aggs;
  std::vector<double> cluster_qualities;  // empty without a quality net
};

struct ScoringContext {
  std::vector<std::pair<std::string, std::vector<double>>> enroll_aggs;
  std::vector<double> enroll_qualities;  // aligned with enroll_aggs
  std::vector<TestGroup> test_groups;
  bool with_quality = false;
};

ScoringContext build_scoring_context(const std::vector<Embedding>& enroll,
                                     const std::vector<Embedding>& test,
                                     const QualityNetParams* net, int k_max,
                                     std::optional<double> ahc_threshold) {
  ScoringContext ctx;
  ctx.with_quality = net != nullptr;

  auto member_quality = [&](const std::vector<Embedding>& embs,
                            const std::vector<size_t>& idx) {
    std::vector<double> q;
    if (!net) return q;
    q.reserve(idx.size());
    for (size_t i : idx) q.push_back(quality_forward(*net, embs[i]));
    return q;
  };

  for (const auto& [id, idx] : group_by_prefix(enroll)) {
    std::vector<std::vector<double>> members;
    for (size_t i : idx) members.push_back(enroll[i].values);
    std::vector<double> q = member_quality(enroll, idx);
    if (q.empty()) q.assign(members.size(), 1.0);
    std::vector<double> agg = weighted_average(members, q);
    if (net)
      ctx.enroll_qualities.push_back(
          quality_forward(*net, l2_normalize(agg)));
    ctx.enroll_aggs.emplace_back(id, std::move(agg));
  }

  for (const auto& [id, idx] : group_by_prefix(test)) {
    std::vector<std::vector<double>> segs;
    for (size_t i : idx) segs.push_back(test[i].values);
    std::vector<double> q = member_quality(test, idx);
    ClusterSet clusters;
    if (ahc_threshold) {
      Partition p = ahc(segs, AhcStop::threshold(*ahc_threshold));
      clusters.clusters = p.clusters;
      clusters.k_max = static_cast<int>(p.clusters.size());
    } else {
      clusters =
          partition_union(segs, std::min<int>(k_max,
                                              static_cast<int>(segs.size())));
    }
    TestGroup group;
    group.id = id;
    for (const std::vector<int>& cluster : clusters.clusters) {
      std::vector<double> agg = aggregate_cluster(
          segs, cluster,
          q.empty() ? std::span<const double>() : std::span<const double>(q));
      if (net)
        group.cluster_qualities.push_back(
            quality_forward(*net, l2_normalize(agg)));
      group.cluster_aggs.push_back(std::move(agg));
    }
    ctx.test_groups.push_back(std::move(group));
  }
  return ctx;
}

int run_synth(const SynthConfig& synth_cfg, int k_max, int enroll_m,
              const fs::path& out_dir) {
  validate(synth_cfg);
  Prototypes protos = gen_identities(synth_cfg);
  Observations obs = gen_observations(synth_cfg, protos);
  IdentitySplit split = split_identities(synth_cfg.n_identities);

  auto names_of = [&](const std::vector<int>& idx) {
    std::set<std::string> names;
    for (int i : idx)
      names.insert(protos.identity_names[static_cast<size_t>(i)]);
    return names;
  };
  fs::create_directories(out_dir);

  auto write_pool = [&](const std::vector<int>& ids, const std::string& stem) {
    std::set<std::string> keep = names_of(ids);
    Observations pool;
    for (size_t i = 0; i < obs.speaker.size(); ++i) {
      if (!keep.count(*obs.speaker[i].identity)) continue;
      pool.speaker.push_back(obs.speaker[i]);
      pool.face.push_back(obs.face[i]);
    }
    save_embeddings(pool.speaker, out_dir / (stem + "_speaker.tsv"));
    save_embeddings(pool.face, out_dir / (stem + "_face.tsv"));
    return pool;
  };
  write_pool(split.qtrain, "train");
  write_pool(split.cohort, "cohort");

  auto write_split = [&](const std::vector<int>& ids, const std::string& name,
                         std::uint64_t tag) {
    std::set<std::string> keep = names_of(ids);
    Observations pool;
    for (size_t i = 0; i < obs.speaker.size(); ++i) {
      if (!keep.count(*obs.speaker[i].identity)) continue;
      pool.speaker.push_back(obs.speaker[i]);
      pool.face.push_back(obs.face[i]);
    }
    SynthConfig cfg = synth_cfg;
    cfg.seed = substream(synth_cfg.seed, tag);
    SynthTrials trials = gen_trials(cfg, pool, k_max, enroll_m);
    fs::path dir = out_dir / name;
    fs::create_directories(dir);

    auto write_side = [&](const std::vector<Embedding>& embs,
                          const std::map<std::string, std::vector<int>>& em,
                          const std::string& file) {
      // Enrollment samples, grouped as identity/e<k>.
      std::vector<Embedding> out;
      for (const auto& [identity, idx] : em) {
        int k = 0;
        for (int i : idx) {
          Embedding e = embs[static_cast<size_t>(i)];
          e.id = identity + "/e" + std::to_string(k++);
          e.identity.reset();
          out.push_back(std::move(e));
        }
      }
      save_embeddings(out, dir / file);
    };
    write_side(pool.speaker, trials.enroll_speaker, "enroll_speaker.tsv");
    write_side(pool.face, trials.enroll_face, "enroll_face.tsv");

    auto write_test = [&](const std::vector<Embedding>& embs,
                          const std::string& file) {
      std::vector<Embedding> out;
      for (const SynthRecording& rec : trials.recordings) {
        int k = 0;
        for (int i : rec.segments) {
          Embedding e = embs[static_cast<size_t>(i)];
          e.id = rec.id + "/s" + std::to_string(k++);
          e.identity.reset();
          out.push_back(std::move(e));
        }
      }
      save_embeddings(out, dir / file);
    };
    write_test(pool.speaker, "test_speaker.tsv");
    write_test(pool.face, "test_face.tsv");

    std::vector<std::pair<std::string, std::string>> pairs;
    for (const TrialRecord& rec : trials.skeleton.records)
      pairs.emplace_back(rec.enroll_id, rec.test_id);
    save_trial_list(pairs, dir / "trials.tsv");
    save_key(trials.key, dir / "key.tsv");
  };
  write_split(split.dev, "dev", 20);
  write_split(split.eval, "eval", 21);
  std::cerr << "synth: wrote corpus to " << out_dir.string() << "\n";
  return 0;
}

int run_score(const std::string& enroll_path, const std::string& test_path,
              const std::string& out_path, std::string system, int k_max,
              std::optional<double> ahc_threshold,
              const std::string& quality_params_path,
              const std::string& trials_path, int threads) {
  std::vector<Embedding> enroll = load_embeddings(enroll_path);
  std::vector<Embedding> test = load_embeddings(test_path);
  std::optional<QualityNetParams> net;
  if (!quality_params_path.empty())
    net = load_quality_net(quality_params_path);
  if (system.empty()) system = modality_name(test.front().modality);

  ScoringContext ctx = build_scoring_context(
      enroll, test, net ? &*net : nullptr, k_max, ahc_threshold);

  std::map<std::string, size_t> enroll_index, test_index;
  for (size_t i = 0; i < ctx.enroll_aggs.size(); ++i)
    enroll_index[ctx.enroll_aggs[i].first] = i;
  for (size_t i = 0; i < ctx.test_groups.size(); ++i)
    test_index[ctx.test_groups[i].id] = i;

  std::vector<std::pair<size_t, size_t>> pairs;
  if (!trials_path.empty()) {
    for (const auto& [e, t] : load_trial_list(trials_path)) {
      auto ei = enroll_index.find(e);
      auto ti = test_index.find(t);
      if (ei == enroll_index.end())
        throw ValidationError("trial enrollment id '" + e +
                              "' not present in " + enroll_path);
      if (ti == test_index.end())
        throw ValidationError("trial test id '" + t + "' not present in " +
                              test_path);
      pairs.emplace_back(ei->second, ti->second);
    }
  } else {
    for (size_t e = 0; e < ctx.enroll_aggs.size(); ++e)
      for (size_t t = 0; t < ctx.test_groups.size(); ++t)
        pairs.emplace_back(e, t);
  }

  struct Result {
    double score;
    int best;
  };
  std::vector<Result> results(pairs.size());
  auto worker = [&](size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) {
      const auto& [e, t] = pairs[i];
      const TestGroup& group = ctx.test_groups[t];
      double best = -std::numeric_limits<double>::infinity();
      int best_idx = 0;
      for (size_t c = 0; c < group.cluster_aggs.size(); ++c) {
        double s = cosine(ctx.enroll_aggs[e].second, group.cluster_aggs[c]);
        if (s > best) {
          best = s;
          best_idx = static_cast<int>(c);
        }
      }
      results[i] = {best, best_idx};
    }
  };
  if (threads <= 1 || pairs.size() < 2) {
    worker(0, pairs.size());
  } else {
    size_t n_threads = std::min<size_t>(static_cast<size_t>(threads),
                                        pairs.size());
    std::vector<std::thread> workers;
    size_t chunk = (pairs.size() + n_threads - 1) / n_threads;
    for (size_t w = 0; w < n_threads; ++w) {
      size_t begin = w * chunk;
      size_t end = std::min(pairs.size(), begin + chunk);
      if (begin >= end) break;
      workers.emplace_back(worker, begin, end);
    }
    for (std::thread& t : workers) t.join();
  }

  ScoreTable table;
  table.roster = {system};
  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto& [e, t] = pairs[i];
    TrialRecord rec;
    rec.enroll_id = ctx.enroll_aggs[e].first;
    rec.test_id = ctx.test_groups[t].id;
    SystemEntry entry;
    entry.score = results[i].score;
    if (ctx.with_quality) {
      entry.q_enroll = ctx.enroll_qualities[e];
      entry.q_test = ctx.test_groups[t]
                         .cluster_qualities[static_cast<size_t>(
                             results[i].best)];
    }
    rec.systems.emplace(system, entry);
    table.records.push_back(std::move(rec));
  }
  save_score_table(table, out_path);
  std::cerr << "score: wrote " << table.records.size() << " trials to "
            << out_path << "\n";
  return 0;
}

int run_norm(const std::string& scores_path, const std::string& enroll_path,
             const std::string& test_path, const std::string& cohort_path,
             const std::string& out_path, int top_k, int k_max,
             std::optional<double> ahc_threshold,
             const std::string& quality_params_path) {
  ScoreTable table = load_score_table(scores_path);
  std::vector<Embedding> enroll = load_embeddings(enroll_path);
  std::vector<Embedding> test = load_embeddings(test_path);
  std::vector<Embedding> cohort = load_embeddings(cohort_path);
  std::optional<QualityNetParams> net;
  if (!quality_params_path.empty())
    net = load_quality_net(quality_params_path);

  ScoringContext ctx = build_scoring_context(
      enroll, test, net ? &*net : nullptr, k_max, ahc_threshold);

  // Same cosine backend as trial scoring, against every cohort embedding.
  std::map<std::string, CohortStats> enroll_stats;
  for (const auto& [id, agg] : ctx.enroll_aggs) {
    std::vector<double> scores;
    scores.reserve(cohort.size());
    for (const Embedding& c : cohort) scores.push_back(cosine(agg, c.values));
    enroll_stats[id] = cohort_stats(scores, top_k, id);
  }
  std::map<std::string, CohortStats> test_stats;
  for (const TestGroup& group : ctx.test_groups) {
    std::vector<double> scores;
    scores.reserve(cohort.size());
    for (const Embedding& c : cohort) {
      double best = -std::numeric_limits<double>::infinity();
      for (const auto& agg : group.cluster_aggs)
        best = std::max(best, cosine(c.values, agg));
      scores.push_back(best);
    }
    test_stats[group.id] = cohort_stats(scores, top_k, group.id);
  }

  for (TrialRecord& rec : table.records) {
    auto ei = enroll_stats.find(rec.enroll_id);
    auto ti = test_stats.find(rec.test_id);
    if (ei == enroll_stats.end())
      throw ValidationError("no enrollment embeddings for id '" +
                            rec.enroll_id + "'");
    if (ti == test_stats.end())
      throw ValidationError("no test embeddings for id '" + rec.test_id +
                            "'");
    for (auto& [system, entry] : rec.systems)
      entry.score = as_norm(entry.score, ei->second, ti->second);
  }
  save_score_table(table, out_path);
  std::cerr << "norm: wrote " << table.records.size() << " trials to "
            << out_path << "\n";
  return 0;
}

std::string sole_system(const ScoreTable& table, const std::string& flag) {
  if (!flag.empty()) return flag;
  if (table.roster.size() != 1)
    throw ValidationError(
        "score table has " + std::to_string(table.roster.size()) +
        " systems; pick one with --system");
  return table.roster.front();
}

std::pair<std::vector<double>, std::vector<double>> labeled_scores(
    const ScoreTable& table, const std::string& system) {
  std::vector<double> tar, non;
  for (const TrialRecord& rec : table.records) {
    if (!rec.label) continue;
    auto it = rec.systems.find(system);
    if (it == rec.systems.end()) continue;
    (*rec.label == TrialLabel::kTarget ? tar : non).push_back(
        it->second.score);
  }
  if (tar.empty() || non.empty())
    throw ValidationError("system '" + system +
                          "' needs labeled trials of both classes");
  return {std::move(tar), std::move(non)};
}

int run_calibrate(const std::string& scores_path, const std::string& key_path,
                  std::string system, double p_tar, double lambda,
                  const std::string& out_params,
                  const std::string& apply_out) {
  ScoreTable table = load_score_table(scores_path, fs::path(key_path));
  system = sole_system(table, system);
  std::vector<FeatureRow> rows;
  for (const TrialRecord& rec : table.records) {
    if (!rec.label) continue;
    auto it = rec.systems.find(system);
    if (it == rec.systems.end())
      throw ValidationError("trial (" + rec.enroll_id + ", " + rec.test_id +
                            ") has no score for system '" + system + "'");
    rows.push_back({{it->second.score}, *rec.label});
  }
  LrTrainResult trained = train_cllr_lr(rows, p_tar, lambda);
  if (!trained.converged)
    std::cerr << "calibrate: warning: optimizer stopped before reaching "
                 "gradient tolerance\n";

  FusionParams params;
  params.systems.emplace_back(system,
                              SystemCoef{trained.w[0], 0.0, 0.0});
  params.offset = trained.d;
  params.prior = p_tar;
  if (!out_params.empty()) save_fusion_params(params, out_params);

  if (!apply_out.empty()) {
    for (TrialRecord& rec : table.records) {
      auto it = rec.systems.find(system);
      if (it == rec.systems.end()) continue;
      it->second.score = trained.w[0] * it->second.score + trained.d;
    }
    save_score_table(table, apply_out);
  }
  std::cerr << "calibrate: " << system << " a=" << format_double(trained.w[0])
            << " d=" << format_double(trained.d) << "\n";
  return 0;
}

ScoreTable merge_tables(const std::vector<std::string>& score_paths,
                        const std::string& key_path) {
  ScoreTable merged;
  std::map<std::pair<std::string, std::string>, size_t> index;
  std::set<std::string> roster;
  for (const std::string& path : score_paths) {
    ScoreTable t = load_score_table(path);
    for (const std::string& s : t.roster) roster.insert(s);
    for (TrialRecord& rec : t.records) {
      auto key = std::make_pair(rec.enroll_id, rec.test_id);
      auto it = index.find(key);
      if (it == index.end()) {
        index.emplace(key, merged.records.size());
        merged.records.push_back(std::move(rec));
      } else {
        TrialRecord& dst = merged.records[it->second];
        for (auto& [system, entry] : rec.systems)
          if (!dst.systems.emplace(system, entry).second)
            throw ValidationError("duplicate (" + rec.enroll_id + ", " +
                                  rec.test_id + ", " + system +
                                  ") across score files");
      }
    }
  }
  merged.roster.assign(roster.begin(), roster.end());
  if (!key_path.empty()) {
    for (const KeyEntry& e : load_key(key_path)) {
      auto it = index.find(std::make_pair(e.enroll_id, e.test_id));
      if (it == index.end())
        throw ValidationError("trial (" + e.enroll_id + ", " + e.test_id +
                              ") present in key but missing from scores");
      merged.records[it->second].label = e.label;
    }
  }
  return merged;
}

int run_fuse(const std::vector<std::string>& score_paths,
             const std::string& key_path, double p_tar, double lambda,
             const std::string& rule, const std::string& use_q_flag,
             const std::string& params_in, const std::string& params_out,
             const std::string& out_path) {
  ScoreTable table = merge_tables(score_paths, key_path);

  if (rule == "sum") {
    ScoreTable fused = sum_fuse(table);
    save_score_table(fused, out_path);
    std::cerr << "fuse: sum rule over " << table.roster.size()
              << " systems, " << fused.records.size() << " trials\n";
    return 0;
  }
  if (rule != "lr") throw ValidationError("--rule must be sum or lr");

  if (!params_in.empty()) {
    FusionParams params = load_fusion_params(params_in);
    ScoreTable fused = apply_fusion_params(params, table);
    save_score_table(fused, out_path);
    std::cerr << "fuse: applied " << params_in << " to "
              << fused.records.size() << " trials\n";
    return 0;
  }

  if (key_path.empty())
    throw ValidationError("training fusion requires --key (or use --params)");
  std::map<std::string, bool> use_q;
  for (const std::string& s : table.roster) use_q[s] = false;
  if (use_q_flag == "all") {
    for (auto& [_, v] : use_q) v = true;
  } else if (!use_q_flag.empty() && use_q_flag != "none") {
    std::string rest = use_q_flag;
    while (!rest.empty()) {
      size_t comma = rest.find(',');
      std::string name = rest.substr(0, comma);
      if (!use_q.count(name))
        throw ValidationError("--use-q names unknown system '" + name + "'");
      use_q[name] = true;
      if (comma == std::string::npos) break;
      rest = rest.substr(comma + 1);
    }
  }
  auto [params, fused] = fuse_with_qualities(table, p_tar, use_q, lambda);
  if (!params_out.empty()) save_fusion_params(params, params_out);
  save_score_table(fused, out_path);
  std::cerr << "fuse: trained LR over " << table.roster.size()
            << " systems, " << fused.records.size() << " trials\n";
  return 0;
}

int run_eval(const std::vector<std::string>& score_paths,
             const std::string& key_path, double p_tar, bool as_json) {
  ScoreTable table = merge_tables(score_paths, key_path);
  CostConfig cost{p_tar};
  nlohmann::ordered_json summary = nlohmann::ordered_json::array();
  if (!as_json)
    std::cout << "system\teer\tmin_c\tact_c\tcllr\tn_target\tn_nontarget\n";
  for (const std::string& system : table.roster) {
    auto [tar, non] = labeled_scores(table, system);
    double e = eer(tar, non);
    double mc = min_c(tar, non, cost);
    double ac = act_c(tar, non, cost);
    double cl = cllr(tar, non);
    if (as_json) {
      summary.push_back({{"system", system},
                         {"eer", e},
                         {"min_c", mc},
                         {"act_c", ac},
                         {"cllr", cl},
                         {"n_target", tar.size()},
                         {"n_nontarget", non.size()}});
    } else {
      std::cout << system << '\t' << format_double(e) << '\t'
                << format_double(mc) << '\t' << format_double(ac) << '\t'
                << format_double(cl) << '\t' << tar.size() << '\t'
                << non.size() << '\n';
    }
  }
  if (as_json) std::cout << summary.dump(2) << '\n';
  return 0;
}

int run_det(const std::string& scores_path, const std::string& key_path,
            std::string system, double p_tar, const std::string& out_path) {
  ScoreTable table = load_score_table(scores_path, fs::path(key_path));
  system = sole_system(table, system);
  auto [tar, non] = labeled_scores(table, system);
  CostConfig cost{p_tar};
  std::vector<DetPoint> points = det_points(tar, non);
  AtomicWriter writer(out_path);
  writer.stream() << "threshold,p_fn,p_fp,cost\n";
  for (const DetPoint& p : points)
    writer.stream() << format_double(p.threshold) << ','
                    << format_double(p.p_fn) << ',' << format_double(p.p_fp)
                    << ',' << format_double(detection_cost(p.p_fn, p.p_fp,
                                                           cost))
                    << '\n';
  writer.commit();
  std::cerr << "det: wrote " << points.size() << " points to " << out_path
            << "\n";
  return 0;
}

int run_bench(const std::string& config_path,
              const std::optional<std::uint64_t>& seed,
              const std::string& out_dir, bool as_json) {
  BenchConfig cfg;
  if (!config_path.empty()) cfg = load_bench_config(config_path);
  if (seed || std::getenv("FUSEBENCH_SEED") || config_path.empty())
    cfg.synth.seed = resolve_seed(seed);
  BenchReport report = run_benchmark(cfg);

  fs::path dir(out_dir);
  fs::create_directories(dir);
  save_bench_report(report, dir / "report.tsv");

  nlohmann::ordered_json summary;
  summary["config"] = {{"n_identities", cfg.synth.n_identities},
                       {"dim_speaker", cfg.synth.dim_speaker},
                       {"dim_face", cfg.synth.dim_face},
                       {"samples_per_identity", cfg.synth.samples_per_identity},
                       {"noise_low", cfg.synth.noise_low},
                       {"noise_high", cfg.synth.noise_high},
                       {"p_degraded", cfg.synth.p_degraded},
                       {"trials", cfg.synth.trials},
                       {"seed", cfg.synth.seed},
                       {"k_max", cfg.k_max},
                       {"enroll_m", cfg.enroll_m},
                       {"top_k", cfg.top_k},
                       {"p_tar", cfg.p_tar},
                       {"lambda", cfg.lambda},
                       {"qnet_epochs", cfg.qnet_epochs},
                       {"qnet_lr", cfg.qnet_lr},
                       {"qnet_hidden", cfg.qnet_hidden},
                       {"qnet_tuple", cfg.qnet_tuple},
                       {"qnet_scale", cfg.qnet_scale},
                       {"qnet_margin", cfg.qnet_margin}};
  summary["variants"] = nlohmann::ordered_json::array();
  for (const VariantResult& row : report.rows)
    summary["variants"].push_back(
        {{"name", row.name},
         {"dev", {{"eer", row.dev.eer},
                  {"min_c", row.dev.min_c},
                  {"act_c", row.dev.act_c}}},
         {"eval", {{"eer", row.eval.eer},
                   {"min_c", row.eval.min_c},
                   {"act_c", row.eval.act_c}}}});
  {
    AtomicWriter writer(dir / "summary.json");
    writer.stream() << summary.dump(2) << '\n';
    writer.commit();
  }

  if (as_json) {
    std::cout << summary.dump(2) << '\n';
  } else {
    std::cout << "variant\tdev_eer\tdev_minc\tdev_actc\teval_eer\teval_minc"
                 "\teval_actc\n";
    for (const VariantResult& row : report.rows)
      std::cout << row.name << '\t' << format_double(row.dev.eer) << '\t'
                << format_double(row.dev.min_c) << '\t'
                << format_double(row.dev.act_c) << '\t'
                << format_double(row.eval.eer) << '\t'
                << format_double(row.eval.min_c) << '\t'
                << format_double(row.eval.act_c) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quality-aware score fusion for two-modality verification"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  SynthConfig synth_cfg;
  std::optional<std::uint64_t> synth_seed;
  int synth_kmax = 3, synth_m = 3;
  std::string synth_out;
  synth->add_option("--n-identities", synth_cfg.n_identities);
  synth->add_option("--dim-speaker", synth_cfg.dim_speaker);
  synth->add_option("--dim-face", synth_cfg.dim_face);
  synth->add_option("--samples-per-identity", synth_cfg.samples_per_identity);
  synth->add_option("--noise-low", synth_cfg.noise_low);
  synth->add_option("--noise-high", synth_cfg.noise_high);
  synth->add_option("--p-degraded", synth_cfg.p_degraded);
  synth->add_option("--trials", synth_cfg.trials);
  synth->add_option("--seed", synth_seed);
  synth->add_option("--k-max", synth_kmax);
  synth->add_option("--enroll-m", synth_m);
  synth->add_option("--out-dir", synth_out)->required();

  // train-quality
  auto* trainq = app.add_subcommand("train-quality",
                                    "train the embedding-quality network");
  std::string trainq_in, trainq_out;
  TrainConfig trainq_cfg;
  std::optional<std::uint64_t> trainq_seed;
  trainq->add_option("--embeddings", trainq_in)->required();
  trainq->add_option("--out", trainq_out)->required();
  trainq->add_option("--epochs", trainq_cfg.epochs);
  trainq->add_option("--lr", trainq_cfg.learning_rate);
  trainq->add_option("--tuple-m", trainq_cfg.tuple_size);
  trainq->add_option("--hidden", trainq_cfg.hidden);
  trainq->add_option("--scale", trainq_cfg.scale);
  trainq->add_option("--margin", trainq_cfg.margin);
  trainq->add_option("--seed", trainq_seed);

  // predict-quality
  auto* predq = app.add_subcommand("predict-quality",
                                   "predict embedding qualities");
  std::string predq_params, predq_in, predq_out;
  predq->add_option("--params", predq_params)->required();
  predq->add_option("--embeddings", predq_in)->required();
  predq->add_option("--out", predq_out)->required();

  // score
  auto* score = app.add_subcommand("score",
                                   "cosine trial scoring with clustering");
  std::string score_enroll, score_test, score_out, score_system;
  std::string score_quality, score_trials;
  int score_kmax = 3, score_threads = 1;
  std::optional<double> score_tau;
  score->add_option("--enroll", score_enroll)->required();
  score->add_option("--test", score_test)->required();
  score->add_option("--out", score_out)->required();
  score->add_option("--system", score_system,
                    "system name (default: test-file modality)");
  score->add_option("--k-max", score_kmax);
  score->add_option("--ahc-threshold", score_tau,
                    "use one threshold-mode partition instead of the "
                    "k=1..k_max union");
  score->add_option("--use-quality", score_quality,
                    "quality-net params for weighted aggregation");
  score->add_option("--trials", score_trials,
                    "restrict to the listed enroll/test pairs");
  score->add_option("--threads", score_threads);

  // norm
  auto* norm = app.add_subcommand("norm",
                                  "adaptive-symmetric score normalization");
  std::string norm_scores, norm_enroll, norm_test, norm_cohort, norm_out;
  std::string norm_quality;
  int norm_topk = kDefaultTopK, norm_kmax = 3;
  std::optional<double> norm_tau;
  norm->add_option("--scores", norm_scores)->required();
  norm->add_option("--enroll", norm_enroll)->required();
  norm->add_option("--test", norm_test)->required();
  norm->add_option("--cohort", norm_cohort)->required();
  norm->add_option("--out", norm_out)->required();
  norm->add_option("--top-k", norm_topk);
  norm->add_option("--k-max", norm_kmax);
  norm->add_option("--ahc-threshold", norm_tau);
  norm->add_option("--use-quality", norm_quality);

  // calibrate
  auto* cal = app.add_subcommand("calibrate",
                                 "train single-system LLR calibration");
  std::string cal_scores, cal_key, cal_system, cal_params, cal_apply;
  double cal_ptar = 0.05, cal_lambda = 1e-6;
  cal->add_option("--scores", cal_scores)->required();
  cal->add_option("--key", cal_key)->required();
  cal->add_option("--system", cal_system);
  cal->add_option("--p-tar", cal_ptar);
  cal->add_option("--lambda", cal_lambda);
  cal->add_option("--out-params", cal_params);
  cal->add_option("--apply", cal_apply,
                  "also write the calibrated score table here");

  // fuse
  auto* fuse = app.add_subcommand("fuse", "sum-rule or LR score fusion");
  std::vector<std::string> fuse_scores;
  std::string fuse_key, fuse_rule = "lr", fuse_useq, fuse_params_in,
              fuse_params_out, fuse_out;
  double fuse_ptar = 0.05, fuse_lambda = 1e-6;
  fuse->add_option("--scores", fuse_scores)->required();
  fuse->add_option("--key", fuse_key);
  fuse->add_option("--p-tar", fuse_ptar);
  fuse->add_option("--lambda", fuse_lambda);
  fuse->add_option("--rule", fuse_rule, "sum or lr");
  fuse->add_option("--use-q", fuse_useq,
                   "none, all, or comma-separated system names");
  fuse->add_option("--params", fuse_params_in,
                   "apply these fusion params instead of training");
  fuse->add_option("--out-params", fuse_params_out);
  fuse->add_option("--out", fuse_out)->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "detection metrics per system");
  std::vector<std::string> eval_scores;
  std::string eval_key;
  double eval_ptar = 0.05;
  bool eval_json = false;
  eval_cmd->add_option("--scores", eval_scores)->required();
  eval_cmd->add_option("--key", eval_key)->required();
  eval_cmd->add_option("--p-tar", eval_ptar);
  eval_cmd->add_flag("--json", eval_json);

  // det
  auto* det = app.add_subcommand("det", "detection trade-off sweep (CSV)");
  std::string det_scores, det_key, det_system, det_out;
  double det_ptar = 0.05;
  det->add_option("--scores", det_scores)->required();
  det->add_option("--key", det_key)->required();
  det->add_option("--system", det_system);
  det->add_option("--p-tar", det_ptar);
  det->add_option("--out", det_out)->required();

  // bench
  auto* bench = app.add_subcommand("bench", "end-to-end synthetic benchmark");
  std::string bench_config, bench_out = ".";
  std::optional<std::uint64_t> bench_seed;
  bool bench_json = false;
  bench->add_option("--config", bench_config, "key = value config file");
  bench->add_option("--seed", bench_seed);
  bench->add_option("--out-dir", bench_out);
  bench->add_flag("--json", bench_json);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return 2;
  }

  try {
    if (*synth) {
      synth_cfg.seed = resolve_seed(synth_seed);
      return run_synth(synth_cfg, synth_kmax, synth_m, synth_out);
    }
    if (*trainq) {
      trainq_cfg.seed = resolve_seed(trainq_seed);
      std::vector<Embedding> embeddings = load_embeddings(trainq_in);
      QualityTrainResult result = train_quality_net(embeddings, trainq_cfg);
      for (const std::string& w : result.warnings)
        std::cerr << "train-quality: warning: " << w << "\n";
      save_quality_net(result.params, trainq_out);
      std::cerr << "train-quality: first-epoch loss "
                << format_double(result.epoch_mean_loss.front())
                << ", last-epoch loss "
                << format_double(result.epoch_mean_loss.back()) << "\n";
      return 0;
    }
    if (*predq) {
      QualityNetParams params = load_quality_net(predq_params);
      std::vector<Embedding> embeddings = load_embeddings(predq_in);
      AtomicWriter writer(predq_out);
      for (const auto& [id, q] : predict_qualities(params, embeddings))
        writer.stream() << id << '\t' << format_double(q) << '\n';
      writer.commit();
      return 0;
    }
    if (*score)
      return run_score(score_enroll, score_test, score_out, score_system,
                       score_kmax, score_tau, score_quality, score_trials,
                       score_threads);
    if (*norm)
      return run_norm(norm_scores, norm_enroll, norm_test, norm_cohort,
                      norm_out, norm_topk, norm_kmax, norm_tau, norm_quality);
    if (*cal)
      return run_calibrate(cal_scores, cal_key, cal_system, cal_ptar,
                           cal_lambda, cal_params, cal_apply);
    if (*fuse)
      return run_fuse(fuse_scores, fuse_key, fuse_ptar, fuse_lambda,
                      fuse_rule, fuse_useq, fuse_params_in, fuse_params_out,
                      fuse_out);
    if (*eval_cmd)
      return run_eval(eval_scores, eval_key, eval_ptar, eval_json);
    if (*det)
      return run_det(det_scores, det_key, det_system, det_ptar, det_out);
    if (*bench)
      return run_bench(bench_config, bench_seed, bench_out, bench_json);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
