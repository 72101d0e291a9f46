/*
 * Copyright 2026 The modfeat Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef MODFEAT_METRICS_HPP
#define MODFEAT_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "modfeat/network.hpp"
#include "modfeat/pseudolabel.hpp"

namespace modfeat {

inline double keep_rate(std::span<const PseudoLabelRecord> records) {
  if (records.empty()) throw ParameterError("keep_rate: no records");
  const auto kept = std::count_if(records.begin(), records.end(), [](const auto& r) { return r.keep; });
  return static_cast<double>(kept) / static_cast<double>(records.size());
}

/// Accuracy over kept records only; absent when nothing was kept.
inline std::optional<double> pl_accuracy(std::span<const PseudoLabelRecord> records,
                                         std::span<const int> true_classes) {
  if (records.size() != true_classes.size()) throw DimensionError("pl_accuracy: truth count mismatch");
  std::size_t kept = 0, correct = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].keep) continue;
    ++kept;
    if (records[i].label == true_classes[i]) ++correct;
  }
  if (kept == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(kept);
}

/// Mean of M over the signal columns minus mean over the noise columns.
inline double modulator_gap(const Array2& m, std::span<const std::size_t> signal_dims,
                            std::span<const std::size_t> noise_dims) {
  if (signal_dims.empty() || noise_dims.empty()) {
    throw UnsupportedError("modulator_gap: coordinate roles unknown for this dataset");
  }
  auto column_mean = [&](std::span<const std::size_t> cols) {
    double s = 0.0;
    for (std::size_t k : cols) {
      if (k >= m.cols()) throw DimensionError("modulator_gap: column out of range");
      for (std::size_t r = 0; r < m.rows(); ++r) s += m(r, k);
    }
    return s / static_cast<double>(cols.size() * m.rows());
  };
  return column_mean(signal_dims) - column_mean(noise_dims);
}

/// Per extractor-output coordinate, the share of its input sensitivity that
/// comes from signal inputs: mean |d z_k / d x_i| summed over signal inputs,
/// divided by the same sum over signal and noise inputs. Evaluated in eval mode
/// over the rows of x, before any output normalisation.
inline std::vector<double> feature_signal_share(Extractor& extractor, const Array2& x,
                                                std::span<const std::size_t> signal_dims,
                                                std::span<const std::size_t> noise_dims) {
  if (signal_dims.empty() || noise_dims.empty()) {
    throw UnsupportedError("feature_signal_share: coordinate roles unknown for this dataset");
  }
  const auto& layers = extractor.layers();
  const std::size_t f = extractor.config().feature_dim;
  Array2 sensitivity(x.cols(), f);
  for (std::size_t n = 0; n < x.rows(); ++n) {
    // Forward pass keeping relu masks, then chain W_l diag(mask_l) products.
    Array2 h(1, x.cols(), std::vector<double>(x.row(n).begin(), x.row(n).end()));
    Array2 jac;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const Array2& w = layers[l].weight.value;
      Array2 pre = matmul_values(h, w);
      for (std::size_t j = 0; j < pre.cols(); ++j) pre(0, j) += layers[l].bias.value(0, j);
      Array2 step = w;
      if (l + 1 < layers.size()) {
        for (std::size_t j = 0; j < pre.cols(); ++j) {
          if (pre(0, j) <= 0.0) {
            pre(0, j) = 0.0;
            for (std::size_t i = 0; i < step.rows(); ++i) step(i, j) = 0.0;
          }
        }
      }
      jac = l == 0 ? step : matmul_values(jac, step);
      h = std::move(pre);
    }
    for (std::size_t i = 0; i < jac.size(); ++i) sensitivity[i] += std::abs(jac[i]);
  }
  std::vector<double> share(f, 0.5);
  for (std::size_t k = 0; k < f; ++k) {
    double s = 0.0, q = 0.0;
    for (std::size_t i : signal_dims) s += sensitivity(i, k);
    for (std::size_t i : noise_dims) q += sensitivity(i, k);
    if (s + q > 0.0) share[k] = s / (s + q);
  }
  return share;
}

/// Soft version of modulator_gap for learned features: each column counts
/// toward the signal mean with weight share_k and toward the noise mean with
/// weight 1 - share_k. Equals modulator_gap when shares are 0/1.
inline double modulator_gap(const Array2& m, std::span<const double> signal_share) {
  if (signal_share.size() != m.cols()) throw DimensionError("modulator_gap: share length mismatch");
  double ws = 0.0, wn = 0.0, s = 0.0, q = 0.0;
  for (std::size_t k = 0; k < m.cols(); ++k) {
    double col = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) col += m(r, k);
    col /= static_cast<double>(m.rows());
    s += signal_share[k] * col;
    ws += signal_share[k];
    q += (1.0 - signal_share[k]) * col;
    wn += 1.0 - signal_share[k];
  }
  if (ws <= 0.0 || wn <= 0.0) throw UnsupportedError("modulator_gap: all features share one role");
  return s / ws - q / wn;
}

struct MetricStat {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

/// Mean and population std; n = 0 when the input is empty.
inline MetricStat mean_std(std::span<const double> xs) {
  MetricStat st;
  st.n = xs.size();
  if (xs.empty()) return st;
  for (double x : xs) st.mean += x;
  st.mean /= static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - st.mean) * (x - st.mean);
  st.std = std::sqrt(v / static_cast<double>(xs.size()));
  return st;
}

/// Final-epoch metrics of one seed.
struct SeedResult {
  std::uint64_t seed = 0;
  double target_acc = 0.0;
  double keep_rate = 0.0;
  std::optional<double> pl_acc;
  std::optional<double> modulator_gap;
  std::size_t epochs = 0;
};

struct RunSummary {
  std::vector<std::uint64_t> seeds;
  MetricStat target_acc;
  MetricStat keep_rate;
  MetricStat pl_acc;  // over seeds where it is defined
  MetricStat modulator_gap;
};

/// Permutation-invariant summary of per-seed final metrics.
inline RunSummary aggregate(std::span<const SeedResult> runs) {
  if (runs.empty()) throw ParameterError("aggregate: no seeds");
  RunSummary s;
  std::vector<double> acc, keep, pl, gap;
  for (const auto& r : runs) {
    if (r.epochs != runs.front().epochs) throw ParameterError("aggregate: inconsistent series lengths");
    s.seeds.push_back(r.seed);
    acc.push_back(r.target_acc);
    keep.push_back(r.keep_rate);
    if (r.pl_acc) pl.push_back(*r.pl_acc);
    if (r.modulator_gap) gap.push_back(*r.modulator_gap);
  }
  // Sorting makes the floating-point sums order-independent.
  for (auto* v : {&acc, &keep, &pl, &gap}) std::sort(v->begin(), v->end());
  s.target_acc = mean_std(acc);
  s.keep_rate = mean_std(keep);
  s.pl_acc = mean_std(pl);
  s.modulator_gap = mean_std(gap);
  return s;
}

/// Spearman rank correlation (average ranks for ties).
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ParameterError("spearman: need two equal-length series");
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
      std::size_t j = i;
      while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const MetricStat sx = mean_std(rx), sy = mean_std(ry);
  if (sx.std == 0.0 || sy.std == 0.0) return 0.0;
  double cov = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) cov += (rx[i] - sx.mean) * (ry[i] - sy.mean);
  cov /= static_cast<double>(rx.size());
  return cov / (sx.std * sy.std);
}

}  // namespace modfeat

#endif  // MODFEAT_METRICS_HPP
