// fusebench/quality_net.hpp

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

// Trainable embedding-quality estimator.  A one-hidden-layer MLP maps an
// embedding to a scalar quality in (0,1).  Training draws same-identity
// tuples, forms the quality-weighted average
//
//   ebar = sum_i q_i e_i / sum_i q_i
//
// and classifies ebar with an additive-angular-margin softmax head; the
// classification gradient flows back through the weights q_i into the MLP,
// so the network learns to give high weight to embeddings that classify
// easily.  All gradients are derived analytically; no autodiff.

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
#include "fusebench/random.hpp"
#include "fusebench/text.hpp"
#include "fusebench/types.hpp"

namespace fusebench {

inline constexpr double kQualityClampLow = 1e-6;

struct QualityNetParams {
  std::vector<double> w1;    // hidden x dim, row-major
  std::vector<double> b1;    // hidden
  std::vector<double> w2;    // hidden
  double b2 = 0.0;
  std::vector<double> head;  // classes x dim, row-major, unit-norm rows
  double scale = 30.0;       // logit scale s
  double margin = 0.2;       // additive angular margin m

  int hidden() const { return static_cast<int>(b1.size()); }
  int dim() const {
    return b1.empty() ? 0 : static_cast<int>(w1.size() / b1.size());
  }
  int classes() const {
    return dim() == 0 ? 0
                      : static_cast<int>(head.size() /
                                         static_cast<size_t>(dim()));
  }

  bool operator==(const QualityNetParams&) const = default;
};

struct TrainConfig {
  int tuple_size = 3;  // M embeddings per training tuple
  int epochs = 30;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
  double scale = 30.0;
  double margin = 0.2;
  int hidden = 0;  // 0 selects max(16, dim/2)
};

namespace detail {

inline double qnet_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

struct MlpTrace {
  std::vector<double> hidden_pre;   // W1 e + b1
  std::vector<double> hidden_post;  // relu of the above
  double logit = 0.0;               // w2 . hidden_post + b2
  double q_raw = 0.0;               // sigmoid(logit)
  double q = 0.0;                   // clamped to [1e-6, 1]
};

inline MlpTrace qnet_forward_trace(const QualityNetParams& params,
                                   std::span<const double> e) {
  const int h = params.hidden();
  const int d = params.dim();
  if (static_cast<int>(e.size()) != d)
    throw ValidationError("embedding dimension " + std::to_string(e.size()) +
                          " does not match network input dimension " +
                          std::to_string(d));
  MlpTrace t;
  t.hidden_pre.resize(static_cast<size_t>(h));
  t.hidden_post.resize(static_cast<size_t>(h));
  for (int i = 0; i < h; ++i) {
    double z = params.b1[static_cast<size_t>(i)];
    const double* row = params.w1.data() + static_cast<size_t>(i) *
                                               static_cast<size_t>(d);
    for (int k = 0; k < d; ++k) z += row[k] * e[static_cast<size_t>(k)];
    t.hidden_pre[static_cast<size_t>(i)] = z;
    t.hidden_post[static_cast<size_t>(i)] = z > 0.0 ? z : 0.0;
  }
  double a = params.b2;
  for (int i = 0; i < h; ++i)
    a += params.w2[static_cast<size_t>(i)] * t.hidden_post[static_cast<size_t>(i)];
  t.logit = a;
  t.q_raw = qnet_sigmoid(a);
  t.q = std::max(t.q_raw, kQualityClampLow);
  return t;
}

}  // namespace detail

inline double quality_forward(const QualityNetParams& params,
                              std::span<const double> values) {
  return detail::qnet_forward_trace(params, values).q_raw;
}

inline double quality_forward(const QualityNetParams& params,
                              const Embedding& e) {
  return quality_forward(params, std::span<const double>(e.values));
}

// Quality-weighted average; weights are floored at 1e-6 so the denominator
// can never vanish.  Invariant to positive rescaling of q.
inline std::vector<double> weighted_average(
    const std::vector<std::vector<double>>& embeddings,
    std::span<const double> q) {
  if (embeddings.empty())
    throw ValidationError("weighted_average of an empty collection");
  if (embeddings.size() != q.size())
    throw ValidationError("quality count does not match embedding count");
  const size_t d = embeddings.front().size();
  std::vector<double> out(d, 0.0);
  double total = 0.0;
  for (size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].size() != d)
      throw ValidationError("mixed embedding dimensions in weighted_average");
    double w = std::max(q[i], kQualityClampLow);
    total += w;
    for (size_t k = 0; k < d; ++k) out[k] += w * embeddings[i][k];
  }
  for (double& v : out) v /= total;
  return out;
}

struct ArcFaceResult {
  double loss = 0.0;
  std::vector<double> grad_ebar;  // dim
  std::vector<double> grad_head;  // classes x dim, row-major
  std::vector<double> probs;      // classes, softmax of the margin logits
};

// Additive-angular-margin softmax loss on the aggregated embedding:
//
//   cos_j = <head_j, ebar/|ebar|>
//   L = -log( exp(s cos(theta_y + m)) /
//             (exp(s cos(theta_y + m)) + sum_{j != y} exp(s cos_j)) )
//
// Returns the loss together with exact gradients w.r.t. ebar and every head
// row.  The margin enters through cos(theta+m) = c cos m - sqrt(1-c^2) sin m.
inline ArcFaceResult arcface_loss(const QualityNetParams& params,
                                  std::span<const double> ebar, int y) {
  const int d = params.dim();
  const int n_classes = params.classes();
  if (static_cast<int>(ebar.size()) != d)
    throw ValidationError("aggregated embedding has wrong dimension");
  if (y < 0 || y >= n_classes)
    throw ValidationError("class index out of range");

  double norm_sq = 0.0;
  for (double v : ebar) norm_sq += v * v;
  double norm = std::sqrt(norm_sq);
  if (norm == 0.0)
    throw ValidationError("aggregated embedding has zero norm");

  std::vector<double> u(ebar.size());
  for (size_t k = 0; k < ebar.size(); ++k) u[k] = ebar[k] / norm;

  std::vector<double> cosines(static_cast<size_t>(n_classes), 0.0);
  for (int j = 0; j < n_classes; ++j) {
    const double* row = params.head.data() + static_cast<size_t>(j) *
                                                 static_cast<size_t>(d);
    double c = 0.0;
    for (int k = 0; k < d; ++k) c += row[k] * u[static_cast<size_t>(k)];
    cosines[static_cast<size_t>(j)] = c;
  }

  const double cos_m = std::cos(params.margin);
  const double sin_m = std::sin(params.margin);
  // Keep sqrt(1-c^2) away from 0 so the margin gradient stays finite.
  const double c_y =
      std::clamp(cosines[static_cast<size_t>(y)], -1.0 + 1e-12, 1.0 - 1e-12);
  const double sin_y = std::sqrt(1.0 - c_y * c_y);

  std::vector<double> logits(static_cast<size_t>(n_classes));
  for (int j = 0; j < n_classes; ++j)
    logits[static_cast<size_t>(j)] = params.scale * cosines[static_cast<size_t>(j)];
  logits[static_cast<size_t>(y)] =
      params.scale * (c_y * cos_m - sin_y * sin_m);

  double max_logit = *std::max_element(logits.begin(), logits.end());
  double sum_exp = 0.0;
  for (double l : logits) sum_exp += std::exp(l - max_logit);
  double log_z = max_logit + std::log(sum_exp);

  ArcFaceResult result;
  result.loss = log_z - logits[static_cast<size_t>(y)];
  result.probs.resize(static_cast<size_t>(n_classes));
  for (int j = 0; j < n_classes; ++j)
    result.probs[static_cast<size_t>(j)] =
        std::exp(logits[static_cast<size_t>(j)] - log_z);

  // dL/dcos_j, including the margin chain rule on the true class.
  std::vector<double> dcos(static_cast<size_t>(n_classes));
  for (int j = 0; j < n_classes; ++j) {
    double dlogit = result.probs[static_cast<size_t>(j)] - (j == y ? 1.0 : 0.0);
    double factor = params.scale;
    if (j == y) factor = params.scale * (cos_m + c_y * sin_m / sin_y);
    dcos[static_cast<size_t>(j)] = dlogit * factor;
  }

  result.grad_head.assign(static_cast<size_t>(n_classes) *
                              static_cast<size_t>(d),
                          0.0);
  std::vector<double> du(static_cast<size_t>(d), 0.0);
  for (int j = 0; j < n_classes; ++j) {
    const double* row = params.head.data() + static_cast<size_t>(j) *
                                                 static_cast<size_t>(d);
    double g = dcos[static_cast<size_t>(j)];
    double* grad_row = result.grad_head.data() + static_cast<size_t>(j) *
                                                     static_cast<size_t>(d);
    for (int k = 0; k < d; ++k) {
      du[static_cast<size_t>(k)] += g * row[k];
      grad_row[k] = g * u[static_cast<size_t>(k)];
    }
  }

  // Through the normalization: d(ebar/|ebar|) = (I - u u^T)/|ebar|.
  double du_dot_u = 0.0;
  for (int k = 0; k < d; ++k)
    du_dot_u += du[static_cast<size_t>(k)] * u[static_cast<size_t>(k)];
  result.grad_ebar.resize(static_cast<size_t>(d));
  for (int k = 0; k < d; ++k)
    result.grad_ebar[static_cast<size_t>(k)] =
        (du[static_cast<size_t>(k)] - du_dot_u * u[static_cast<size_t>(k)]) /
        norm;
  return result;
}

// Loss and full parameter gradients for one same-identity tuple, with the
// classification gradient flowing through the weighted average into the MLP.
struct TupleGrads {
  double loss = 0.0;
  std::vector<double> w1;
  std::vector<double> b1;
  std::vector<double> w2;
  double b2 = 0.0;
  std::vector<double> head;
};

inline TupleGrads quality_tuple_backward(
    const QualityNetParams& params,
    const std::vector<std::span<const double>>& tuple, int y) {
  const int d = params.dim();
  const int h = params.hidden();
  const int m = static_cast<int>(tuple.size());
  if (m < 1) throw ValidationError("empty training tuple");

  std::vector<detail::MlpTrace> traces;
  traces.reserve(tuple.size());
  for (const auto& e : tuple)
    traces.push_back(detail::qnet_forward_trace(params, e));

  double q_total = 0.0;
  for (const auto& t : traces) q_total += t.q;
  std::vector<double> ebar(static_cast<size_t>(d), 0.0);
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < d; ++k)
      ebar[static_cast<size_t>(k)] +=
          traces[static_cast<size_t>(i)].q *
          tuple[static_cast<size_t>(i)][static_cast<size_t>(k)];
  for (double& v : ebar) v /= q_total;

  ArcFaceResult af = arcface_loss(params, ebar, y);

  TupleGrads grads;
  grads.loss = af.loss;
  grads.head = std::move(af.grad_head);
  grads.w1.assign(params.w1.size(), 0.0);
  grads.b1.assign(params.b1.size(), 0.0);
  grads.w2.assign(params.w2.size(), 0.0);
  for (int i = 0; i < m; ++i) {
    const detail::MlpTrace& t = traces[static_cast<size_t>(i)];
    double dq = 0.0;
    for (int k = 0; k < d; ++k)
      dq += af.grad_ebar[static_cast<size_t>(k)] *
            (tuple[static_cast<size_t>(i)][static_cast<size_t>(k)] -
             ebar[static_cast<size_t>(k)]);
    dq /= q_total;
    // Clamped weights pass no gradient.
    if (t.q_raw < kQualityClampLow) continue;
    double da = dq * t.q_raw * (1.0 - t.q_raw);
    for (int j = 0; j < h; ++j)
      grads.w2[static_cast<size_t>(j)] +=
          da * t.hidden_post[static_cast<size_t>(j)];
    grads.b2 += da;
    for (int j = 0; j < h; ++j) {
      if (t.hidden_pre[static_cast<size_t>(j)] <= 0.0) continue;
      double dh = da * params.w2[static_cast<size_t>(j)];
      double* g_row =
          grads.w1.data() + static_cast<size_t>(j) * static_cast<size_t>(d);
      for (int k = 0; k < d; ++k)
        g_row[k] += dh * tuple[static_cast<size_t>(i)][static_cast<size_t>(k)];
      grads.b1[static_cast<size_t>(j)] += dh;
    }
  }
  return grads;
}

struct QualityTrainResult {
  QualityNetParams params;
  std::vector<double> epoch_mean_loss;
  std::vector<std::string> warnings;  // identities skipped for too few samples
};

// Trains the quality MLP together with the classification head on
// identity-labeled embeddings.  Deterministic under cfg.seed: same seed and
// data give bit-identical parameter trajectories.
inline QualityTrainResult train_quality_net(
    const std::vector<Embedding>& embeddings, const TrainConfig& cfg) {
  if (cfg.tuple_size < 2) throw ValidationError("tuple size must be >= 2");
  if (embeddings.empty()) throw ValidationError("no training embeddings");
  const int d = static_cast<int>(embeddings.front().values.size());

  // Group sample indices by identity, in order of first appearance.
  std::vector<std::string> identities;
  std::map<std::string, std::vector<int>> by_identity;
  for (size_t i = 0; i < embeddings.size(); ++i) {
    const Embedding& e = embeddings[i];
    if (!e.identity)
      throw ValidationError("embedding '" + e.id + "' has no identity label");
    if (static_cast<int>(e.values.size()) != d)
      throw ValidationError("mixed embedding dimensions in training set");
    auto [it, inserted] = by_identity.try_emplace(*e.identity);
    if (inserted) identities.push_back(*e.identity);
    it->second.push_back(static_cast<int>(i));
  }

  QualityTrainResult result;
  std::vector<const std::vector<int>*> classes;
  for (const std::string& identity : identities) {
    const std::vector<int>& samples = by_identity[identity];
    if (static_cast<int>(samples.size()) < cfg.tuple_size) {
      result.warnings.push_back("identity '" + identity + "' has only " +
                                std::to_string(samples.size()) +
                                " samples, need " +
                                std::to_string(cfg.tuple_size) + "; skipped");
      continue;
    }
    classes.push_back(&samples);
  }
  const int n_classes = static_cast<int>(classes.size());
  if (n_classes < 2)
    throw ValidationError("need at least 2 identities with >= " +
                          std::to_string(cfg.tuple_size) + " samples each");

  const int h = cfg.hidden > 0 ? cfg.hidden : std::max(16, d / 2);
  QualityNetParams& params = result.params;
  params.scale = cfg.scale;
  params.margin = cfg.margin;
  Rng rng(cfg.seed);
  params.w1.resize(static_cast<size_t>(h) * static_cast<size_t>(d));
  const double w1_scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (double& v : params.w1) v = rng.normal() * w1_scale;
  params.b1.assign(static_cast<size_t>(h), 0.0);
  params.w2.resize(static_cast<size_t>(h));
  const double w2_scale = 1.0 / std::sqrt(static_cast<double>(h));
  for (double& v : params.w2) v = rng.normal() * w2_scale;
  params.b2 = 0.0;
  params.head.resize(static_cast<size_t>(n_classes) * static_cast<size_t>(d));
  for (int j = 0; j < n_classes; ++j) {
    double* row = params.head.data() + static_cast<size_t>(j) *
                                           static_cast<size_t>(d);
    double norm_sq = 0.0;
    for (int k = 0; k < d; ++k) {
      row[k] = rng.normal();
      norm_sq += row[k] * row[k];
    }
    double inv = 1.0 / std::sqrt(norm_sq);
    for (int k = 0; k < d; ++k) row[k] *= inv;
  }

  const int m = cfg.tuple_size;
  const int steps_per_epoch = n_classes;
  std::vector<std::span<const double>> tuple(static_cast<size_t>(m));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      int y = rng.uniform_int(n_classes);
      const std::vector<int>& pool = *classes[static_cast<size_t>(y)];
      std::vector<int> picks =
          rng.sample_without_replacement(static_cast<int>(pool.size()), m);
      for (int i = 0; i < m; ++i)
        tuple[static_cast<size_t>(i)] = std::span<const double>(
            embeddings[static_cast<size_t>(pool[static_cast<size_t>(
                           picks[static_cast<size_t>(i)])])]
                .values);

      TupleGrads grads = quality_tuple_backward(params, tuple, y);
      loss_sum += grads.loss;

      const double lr = cfg.learning_rate;
      for (size_t k = 0; k < params.w1.size(); ++k)
        params.w1[k] -= lr * grads.w1[k];
      for (size_t k = 0; k < params.b1.size(); ++k)
        params.b1[k] -= lr * grads.b1[k];
      for (size_t k = 0; k < params.w2.size(); ++k)
        params.w2[k] -= lr * grads.w2[k];
      params.b2 -= lr * grads.b2;
      for (size_t k = 0; k < params.head.size(); ++k)
        params.head[k] -= lr * grads.head[k];

      // Head rows live on the unit sphere; re-normalize after every update.
      for (int j = 0; j < n_classes; ++j) {
        double* row = params.head.data() + static_cast<size_t>(j) *
                                               static_cast<size_t>(d);
        double norm_sq = 0.0;
        for (int k = 0; k < d; ++k) norm_sq += row[k] * row[k];
        double inv = 1.0 / std::sqrt(norm_sq);
        for (int k = 0; k < d; ++k) row[k] *= inv;
      }
    }
    result.epoch_mean_loss.push_back(loss_sum / steps_per_epoch);
  }
  return result;
}

// Order-preserving batch map of quality_forward.
inline std::vector<std::pair<std::string, double>> predict_qualities(
    const QualityNetParams& params, const std::vector<Embedding>& embeddings) {
  std::vector<std::pair<std::string, double>> out;
  out.reserve(embeddings.size());
  for (const Embedding& e : embeddings)
    out.emplace_back(e.id, quality_forward(params, e));
  return out;
}

// TSV serialization: a '#qnet' shape header, then one named section per
// tensor with row-major values at 17 significant digits.
inline void save_quality_net(const QualityNetParams& params,
                             const std::filesystem::path& path) {
  const int d = params.dim();
  const int h = params.hidden();
  const int c = params.classes();
  AtomicWriter writer(path);
  std::ostream& out = writer.stream();
  out << "#qnet\t" << d << '\t' << h << '\t' << c << '\t'
      << format_double(params.scale) << '\t' << format_double(params.margin)
      << '\n';
  auto write_matrix = [&](const char* name, const std::vector<double>& m,
                          int rows, int cols) {
    out << name << '\t' << rows << '\t' << cols << '\n';
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        if (j) out << '\t';
        out << format_double(m[static_cast<size_t>(i) *
                                   static_cast<size_t>(cols) +
                               static_cast<size_t>(j)]);
      }
      out << '\n';
    }
  };
  write_matrix("W1", params.w1, h, d);
  write_matrix("B1", params.b1, 1, h);
  write_matrix("W2", params.w2, 1, h);
  write_matrix("B2", {params.b2}, 1, 1);
  write_matrix("HEAD", params.head, c, d);
  writer.commit();
}

inline QualityNetParams load_quality_net(const std::filesystem::path& path) {
  std::ifstream in = detail::open_input(path);
  std::string line;
  int lineno = 0;
  if (!std::getline(in, line))
    throw ParseError(path.string(), 1, "empty quality-net file");
  ++lineno;
  auto header = split_tabs(line);
  if (header.size() != 6 || header[0] != "#qnet")
    throw ParseError(path.string(), lineno,
                     "expected '#qnet<TAB>dim<TAB>hidden<TAB>classes"
                     "<TAB>scale<TAB>margin' header");
  auto parse_int = [&](std::string_view f, const char* what) {
    double v = detail::parse_double_field(path, lineno, f, what);
    if (v < 1 || v != std::floor(v))
      throw ParseError(path.string(), lineno,
                       std::string(what) + " must be a positive integer");
    return static_cast<int>(v);
  };
  const int d = parse_int(header[1], "dim");
  const int h = parse_int(header[2], "hidden");
  const int c = parse_int(header[3], "classes");
  QualityNetParams params;
  params.scale = detail::parse_double_field(path, lineno, header[4], "scale");
  params.margin = detail::parse_double_field(path, lineno, header[5], "margin");
  if (!(params.scale > 0.0))
    throw ParseError(path.string(), lineno, "scale must be > 0");
  if (params.margin < 0.0)
    throw ParseError(path.string(), lineno, "margin must be >= 0");

  auto read_matrix = [&](const char* name, int rows, int cols) {
    if (!std::getline(in, line))
      throw ParseError(path.string(), lineno + 1,
                       std::string("missing section ") + name);
    ++lineno;
    auto f = split_tabs(line);
    if (f.size() != 3 || f[0] != name ||
        parse_int(f[1], "rows") != rows || parse_int(f[2], "cols") != cols)
      throw ParseError(path.string(), lineno,
                       std::string("expected section header '") + name +
                           "' with shape " + std::to_string(rows) + "x" +
                           std::to_string(cols));
    std::vector<double> m(static_cast<size_t>(rows) *
                          static_cast<size_t>(cols));
    for (int i = 0; i < rows; ++i) {
      if (!std::getline(in, line))
        throw ParseError(path.string(), lineno + 1,
                         std::string("truncated section ") + name);
      ++lineno;
      auto row = split_tabs(line);
      if (static_cast<int>(row.size()) != cols)
        throw ParseError(path.string(), lineno,
                         "expected " + std::to_string(cols) + " values, got " +
                             std::to_string(row.size()));
      for (int j = 0; j < cols; ++j)
        m[static_cast<size_t>(i) * static_cast<size_t>(cols) +
          static_cast<size_t>(j)] =
            detail::parse_double_field(path, lineno, row[static_cast<size_t>(j)],
                                       "value");
    }
    return m;
  };
  params.w1 = read_matrix("W1", h, d);
  params.b1 = read_matrix("B1", 1, h);
  params.w2 = read_matrix("W2", 1, h);
  params.b2 = read_matrix("B2", 1, 1)[0];
  params.head = read_matrix("HEAD", c, d);
  for (double v : params.w1)
    if (!std::isfinite(v))
      throw ParseError(path.string(), lineno, "non-finite parameter");
  return params;
}

}  // namespace fusebench
