// fusebench/calibration.hpp

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

// Prior-weighted logistic regression for calibrating verification scores to
// LLRs and for score-level fusion, with optional per-system quality inputs.
//
// The trainer minimizes
//
//   obj(w, d) = (pi/N_tar)     sum_tar  softplus(-(w.x + d + tau))
//             + ((1-pi)/N_non) sum_non  softplus(+(w.x + d + tau))
//             + lambda ||w||^2,     tau = log(pi/(1-pi))
//
// so that the learned LLR(x) = w.x + d is Bayes-consistent at prior pi: the
// decision threshold for the resulting scores is log((1-pi)/pi).  d is not
// penalized; the offset must stay free for calibration.
//
// Feature ordering contract: per-trial regressors are the system scores in
// roster order, followed by a (q_enroll, q_test) pair for each
// quality-flagged system, again in roster order.

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fusebench/io.hpp"
#include "fusebench/text.hpp"
#include "fusebench/types.hpp"

namespace fusebench {

struct FeatureRow {
  std::vector<double> x;
  TrialLabel label = TrialLabel::kNontarget;
};

struct SystemCoef {
  double a = 0.0;  // score weight
  double b = 0.0;  // enrollment-quality weight, 0 when fused without qualities
  double c = 0.0;  // test-quality weight, 0 when fused without qualities

  bool operator==(const SystemCoef&) const = default;
};

struct FusionParams {
  std::vector<std::pair<std::string, SystemCoef>> systems;  // roster order
  double offset = 0.0;
  double prior = 0.05;

  bool operator==(const FusionParams&) const = default;
};

struct LrTrainResult {
  std::vector<double> w;
  double d = 0.0;
  bool converged = false;
  int iterations = 0;
};

namespace detail {

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

// In-place Cholesky of a row-major symmetric matrix.  Returns false when a
// pivot is non-positive or the diagonal ratio suggests a condition number
// above max_cond.
inline bool cholesky(std::vector<double>& a, int n, double max_cond) {
  double min_diag = std::numeric_limits<double>::infinity();
  double max_diag = 0.0;
  for (int j = 0; j < n; ++j) {
    double sum = a[static_cast<size_t>(j * n + j)];
    for (int k = 0; k < j; ++k) {
      double l = a[static_cast<size_t>(j * n + k)];
      sum -= l * l;
    }
    if (sum <= 0.0) return false;
    double l_jj = std::sqrt(sum);
    a[static_cast<size_t>(j * n + j)] = l_jj;
    min_diag = std::min(min_diag, l_jj);
    max_diag = std::max(max_diag, l_jj);
    for (int i = j + 1; i < n; ++i) {
      double s = a[static_cast<size_t>(i * n + j)];
      for (int k = 0; k < j; ++k)
        s -= a[static_cast<size_t>(i * n + k)] *
             a[static_cast<size_t>(j * n + k)];
      a[static_cast<size_t>(i * n + j)] = s / l_jj;
    }
  }
  double cond_est = (max_diag / min_diag) * (max_diag / min_diag);
  return cond_est <= max_cond;
}

inline void cholesky_solve(const std::vector<double>& l, int n,
                           std::vector<double>& b) {
  for (int i = 0; i < n; ++i) {
    double s = b[static_cast<size_t>(i)];
    for (int k = 0; k < i; ++k)
      s -= l[static_cast<size_t>(i * n + k)] * b[static_cast<size_t>(k)];
    b[static_cast<size_t>(i)] = s / l[static_cast<size_t>(i * n + i)];
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = b[static_cast<size_t>(i)];
    for (int k = i + 1; k < n; ++k)
      s -= l[static_cast<size_t>(k * n + i)] * b[static_cast<size_t>(k)];
    b[static_cast<size_t>(i)] = s / l[static_cast<size_t>(i * n + i)];
  }
}

}  // namespace detail

// Objective value at (w, d); exposed for line search and property tests.
inline double cllr_lr_objective(const std::vector<FeatureRow>& rows, double pi,
                                double lambda, std::span<const double> w,
                                double d) {
  double tau = std::log(pi / (1.0 - pi));
  size_t n_tar = 0, n_non = 0;
  for (const FeatureRow& r : rows)
    (r.label == TrialLabel::kTarget ? n_tar : n_non) += 1;
  double sum_tar = 0.0, sum_non = 0.0;
  for (const FeatureRow& r : rows) {
    double z = d + tau;
    for (size_t k = 0; k < w.size(); ++k) z += w[k] * r.x[k];
    if (r.label == TrialLabel::kTarget)
      sum_tar += detail::softplus(-z);
    else
      sum_non += detail::softplus(z);
  }
  double obj = 0.0;
  if (n_tar > 0) obj += pi * sum_tar / static_cast<double>(n_tar);
  if (n_non > 0) obj += (1.0 - pi) * sum_non / static_cast<double>(n_non);
  for (double wk : w) obj += lambda * wk * wk;
  return obj;
}

// Gradient of the objective with respect to [w..., d].
inline std::vector<double> cllr_lr_gradient(const std::vector<FeatureRow>& rows,
                                            double pi, double lambda,
                                            std::span<const double> w,
                                            double d) {
  double tau = std::log(pi / (1.0 - pi));
  size_t n_tar = 0, n_non = 0;
  for (const FeatureRow& r : rows)
    (r.label == TrialLabel::kTarget ? n_tar : n_non) += 1;
  const size_t dim = w.size();
  std::vector<double> grad(dim + 1, 0.0);
  for (const FeatureRow& r : rows) {
    double z = d + tau;
    for (size_t k = 0; k < dim; ++k) z += w[k] * r.x[k];
    bool target = r.label == TrialLabel::kTarget;
    double u = target ? pi / static_cast<double>(n_tar)
                      : (1.0 - pi) / static_cast<double>(n_non);
    double g = u * (detail::sigmoid(z) - (target ? 1.0 : 0.0));
    for (size_t k = 0; k < dim; ++k) grad[k] += g * r.x[k];
    grad[dim] += g;
  }
  for (size_t k = 0; k < dim; ++k) grad[k] += 2.0 * lambda * w[k];
  return grad;
}

// Damped Newton with backtracking line search; falls back to a gradient step
// whenever the Hessian is ill-conditioned (condition estimate > 1e12).
// Converged means gradient infinity-norm <= 1e-9 within 200 iterations;
// otherwise the best parameters found are still returned with
// converged == false.
inline LrTrainResult train_cllr_lr(const std::vector<FeatureRow>& rows,
                                   double pi, double lambda) {
  if (!(pi > 0.0 && pi < 1.0))
    throw ValidationError("prior must be in (0,1)");
  if (lambda < 0.0) throw ValidationError("ridge lambda must be >= 0");
  if (rows.empty()) throw ValidationError("no training rows");
  const size_t dim = rows.front().x.size();
  size_t n_tar = 0, n_non = 0;
  for (const FeatureRow& r : rows) {
    if (r.x.size() != dim)
      throw ValidationError("inconsistent feature-row length");
    for (double v : r.x)
      if (!std::isfinite(v)) throw ValidationError("non-finite feature value");
    (r.label == TrialLabel::kTarget ? n_tar : n_non) += 1;
  }
  if (n_tar == 0 || n_non == 0)
    throw ValidationError("training rows must contain both classes");

  const double tau = std::log(pi / (1.0 - pi));
  const int p = static_cast<int>(dim) + 1;
  const double grad_tol = 1e-9;
  const double max_cond = 1e12;
  const int max_iter = 200;

  std::vector<double> theta(static_cast<size_t>(p), 0.0);  // [w..., d]
  auto objective = [&](const std::vector<double>& t) {
    return cllr_lr_objective(rows, pi, lambda,
                             std::span<const double>(t.data(), dim),
                             t[dim]);
  };

  double obj = objective(theta);
  LrTrainResult result;
  for (int iter = 0; iter < max_iter; ++iter) {
    result.iterations = iter;
    // Gradient and Hessian at theta.
    std::vector<double> grad(static_cast<size_t>(p), 0.0);
    std::vector<double> hess(static_cast<size_t>(p * p), 0.0);
    for (const FeatureRow& r : rows) {
      double z = theta[dim] + tau;
      for (size_t k = 0; k < dim; ++k) z += theta[k] * r.x[k];
      bool target = r.label == TrialLabel::kTarget;
      double u = target ? pi / static_cast<double>(n_tar)
                        : (1.0 - pi) / static_cast<double>(n_non);
      double s = detail::sigmoid(z);
      double g = u * (s - (target ? 1.0 : 0.0));
      double h = u * s * (1.0 - s);
      for (size_t k = 0; k < dim; ++k) grad[k] += g * r.x[k];
      grad[dim] += g;
      for (size_t i = 0; i < dim; ++i) {
        for (size_t j = 0; j <= i; ++j)
          hess[i * static_cast<size_t>(p) + j] += h * r.x[i] * r.x[j];
        hess[dim * static_cast<size_t>(p) + i] += h * r.x[i];
      }
      hess[dim * static_cast<size_t>(p) + dim] += h;
    }
    for (size_t k = 0; k < dim; ++k) {
      grad[k] += 2.0 * lambda * theta[k];
      hess[k * static_cast<size_t>(p) + k] += 2.0 * lambda;
    }
    // Mirror the lower triangle (cholesky reads the full matrix row-major).
    for (int i = 0; i < p; ++i)
      for (int j = i + 1; j < p; ++j)
        hess[static_cast<size_t>(i * p + j)] =
            hess[static_cast<size_t>(j * p + i)];

    double grad_norm = 0.0;
    for (double g : grad) grad_norm = std::max(grad_norm, std::fabs(g));
    if (grad_norm <= grad_tol) {
      result.converged = true;
      break;
    }

    // Try the Newton direction, else fall back to steepest descent.
    std::vector<double> direction = grad;
    std::vector<double> chol = hess;
    bool newton_ok = detail::cholesky(chol, p, max_cond);
    if (newton_ok) {
      detail::cholesky_solve(chol, p, direction);
      for (double& v : direction) v = -v;
    } else {
      for (double& v : direction) v = -v;
    }
    double slope = 0.0;
    for (int k = 0; k < p; ++k)
      slope += grad[static_cast<size_t>(k)] * direction[static_cast<size_t>(k)];
    if (slope >= 0.0) {  // numerically not a descent direction
      for (int k = 0; k < p; ++k)
        direction[static_cast<size_t>(k)] = -grad[static_cast<size_t>(k)];
      slope = 0.0;
      for (int k = 0; k < p; ++k)
        slope -= grad[static_cast<size_t>(k)] * grad[static_cast<size_t>(k)];
    }

    double step = 1.0;
    bool accepted = false;
    std::vector<double> candidate(theta.size());
    for (int bt = 0; bt < 60; ++bt) {
      for (size_t k = 0; k < theta.size(); ++k)
        candidate[k] = theta[k] + step * direction[k];
      double cand_obj = objective(candidate);
      if (cand_obj <= obj + 1e-4 * step * slope) {
        theta = candidate;
        obj = cand_obj;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no further progress at double precision
  }

  result.w.assign(theta.begin(), theta.begin() + static_cast<long>(dim));
  result.d = theta[dim];
  return result;
}

// Calibrated/fused LLR per row: w.x + d.
inline std::vector<double> apply_lr(std::span<const double> w, double d,
                                    const std::vector<FeatureRow>& rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const FeatureRow& r : rows) {
    if (r.x.size() != w.size())
      throw ValidationError("feature row length " +
                            std::to_string(r.x.size()) +
                            " does not match parameter length " +
                            std::to_string(w.size()));
    double z = d;
    for (size_t k = 0; k < w.size(); ++k) z += w[k] * r.x[k];
    out.push_back(z);
  }
  return out;
}

// Sum rule: one output system whose score is the sum of all roster scores.
inline ScoreTable sum_fuse(const ScoreTable& table,
                           const std::string& out_name = "sum") {
  ScoreTable out;
  out.roster = {out_name};
  out.records.reserve(table.records.size());
  for (const TrialRecord& rec : table.records) {
    double sum = 0.0;
    for (const std::string& system : table.roster) {
      auto it = rec.systems.find(system);
      if (it == rec.systems.end())
        throw ValidationError("trial (" + rec.enroll_id + ", " + rec.test_id +
                              ") is missing a score for system '" + system +
                              "'");
      sum += it->second.score;
    }
    TrialRecord fused;
    fused.enroll_id = rec.enroll_id;
    fused.test_id = rec.test_id;
    fused.label = rec.label;
    fused.systems.emplace(out_name, SystemEntry{sum, std::nullopt,
                                                std::nullopt});
    out.records.push_back(std::move(fused));
  }
  return out;
}

// Regressor vector for one trial under the feature ordering contract.
inline std::vector<double> feature_vector(
    const TrialRecord& rec, const std::vector<std::string>& roster,
    const std::map<std::string, bool>& use_q) {
  std::vector<double> x;
  for (const std::string& system : roster) {
    auto it = rec.systems.find(system);
    if (it == rec.systems.end())
      throw ValidationError("trial (" + rec.enroll_id + ", " + rec.test_id +
                            ") is missing a score for system '" + system +
                            "'");
    x.push_back(it->second.score);
  }
  for (const std::string& system : roster) {
    auto flag = use_q.find(system);
    if (flag == use_q.end() || !flag->second) continue;
    const SystemEntry& e = rec.systems.at(system);
    if (!e.q_enroll || !e.q_test)
      throw ValidationError("trial (" + rec.enroll_id + ", " + rec.test_id +
                            ") lacks qualities for flagged system '" + system +
                            "'");
    x.push_back(*e.q_enroll);
    x.push_back(*e.q_test);
  }
  return x;
}

// Trains Eq-style quality-aware fusion on the labeled records of `table` and
// applies it to every record.  With all use_q flags false this is plain
// score-only LR fusion; with all true, each system contributes its score and
// both qualities.
inline std::pair<FusionParams, ScoreTable> fuse_with_qualities(
    const ScoreTable& table, double pi,
    const std::map<std::string, bool>& use_q, double lambda = 1e-6,
    const std::string& out_name = "fused") {
  std::vector<FeatureRow> rows;
  for (const TrialRecord& rec : table.records) {
    if (!rec.label) continue;
    rows.push_back({feature_vector(rec, table.roster, use_q), *rec.label});
  }
  LrTrainResult trained = train_cllr_lr(rows, pi, lambda);

  FusionParams params;
  params.offset = trained.d;
  params.prior = pi;
  size_t q_cursor = table.roster.size();
  for (size_t i = 0; i < table.roster.size(); ++i) {
    SystemCoef coef;
    coef.a = trained.w[i];
    auto flag = use_q.find(table.roster[i]);
    if (flag != use_q.end() && flag->second) {
      coef.b = trained.w[q_cursor++];
      coef.c = trained.w[q_cursor++];
    }
    params.systems.emplace_back(table.roster[i], coef);
  }

  ScoreTable fused;
  fused.roster = {out_name};
  for (const TrialRecord& rec : table.records) {
    std::vector<double> x = feature_vector(rec, table.roster, use_q);
    double llr = trained.d;
    for (size_t k = 0; k < x.size(); ++k) llr += trained.w[k] * x[k];
    TrialRecord out_rec;
    out_rec.enroll_id = rec.enroll_id;
    out_rec.test_id = rec.test_id;
    out_rec.label = rec.label;
    out_rec.systems.emplace(out_name,
                            SystemEntry{llr, std::nullopt, std::nullopt});
    fused.records.push_back(std::move(out_rec));
  }
  return {std::move(params), std::move(fused)};
}

// Applies previously trained fusion parameters.  A system with a nonzero b
// or c coefficient requires qualities on every record.
inline ScoreTable apply_fusion_params(const FusionParams& params,
                                      const ScoreTable& table,
                                      const std::string& out_name = "fused") {
  ScoreTable fused;
  fused.roster = {out_name};
  for (const TrialRecord& rec : table.records) {
    double llr = params.offset;
    for (const auto& [system, coef] : params.systems) {
      auto it = rec.systems.find(system);
      if (it == rec.systems.end())
        throw ValidationError("trial (" + rec.enroll_id + ", " + rec.test_id +
                              ") is missing a score for system '" + system +
                              "'");
      llr += coef.a * it->second.score;
      if (coef.b != 0.0 || coef.c != 0.0) {
        if (!it->second.q_enroll || !it->second.q_test)
          throw ValidationError("trial (" + rec.enroll_id + ", " +
                                rec.test_id + ") lacks qualities for system '" +
                                system + "'");
        llr += coef.b * *it->second.q_enroll + coef.c * *it->second.q_test;
      }
    }
    TrialRecord out_rec;
    out_rec.enroll_id = rec.enroll_id;
    out_rec.test_id = rec.test_id;
    out_rec.label = rec.label;
    out_rec.systems.emplace(out_name,
                            SystemEntry{llr, std::nullopt, std::nullopt});
    fused.records.push_back(std::move(out_rec));
  }
  return fused;
}

// Serialization: one 'system<TAB>a<TAB>b<TAB>c' line per system in roster
// order, then a final 'OFFSET<TAB>d<TAB>PI<TAB>pi' line.
inline void save_fusion_params(const FusionParams& params,
                               const std::filesystem::path& path) {
  AtomicWriter writer(path);
  std::ostream& out = writer.stream();
  for (const auto& [system, coef] : params.systems)
    out << system << '\t' << format_double(coef.a) << '\t'
        << format_double(coef.b) << '\t' << format_double(coef.c) << '\n';
  out << "OFFSET\t" << format_double(params.offset) << "\tPI\t"
      << format_double(params.prior) << '\n';
  writer.commit();
}

inline FusionParams load_fusion_params(const std::filesystem::path& path) {
  std::ifstream in = detail::open_input(path);
  FusionParams params;
  bool have_offset = false;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_comment_or_blank(line)) continue;
    auto f = split_tabs(line);
    if (f.size() != 4)
      throw ParseError(path.string(), lineno,
                       "expected 4 tab-separated fields, got " +
                           std::to_string(f.size()));
    if (f[0] == "OFFSET") {
      if (f[2] != "PI")
        throw ParseError(path.string(), lineno,
                         "offset line must be OFFSET<TAB>d<TAB>PI<TAB>pi");
      params.offset = detail::parse_double_field(path, lineno, f[1], "offset");
      params.prior = detail::parse_double_field(path, lineno, f[3], "prior");
      if (!(params.prior > 0.0 && params.prior < 1.0))
        throw ParseError(path.string(), lineno, "prior must be in (0,1)");
      have_offset = true;
      continue;
    }
    if (have_offset)
      throw ParseError(path.string(), lineno,
                       "system line after the OFFSET line");
    SystemCoef coef;
    coef.a = detail::parse_double_field(path, lineno, f[1], "coefficient a");
    coef.b = detail::parse_double_field(path, lineno, f[2], "coefficient b");
    coef.c = detail::parse_double_field(path, lineno, f[3], "coefficient c");
    params.systems.emplace_back(std::string(f[0]), coef);
  }
  if (!have_offset)
    throw ParseError(path.string(), lineno, "missing OFFSET line");
  return params;
}

}  // namespace fusebench
