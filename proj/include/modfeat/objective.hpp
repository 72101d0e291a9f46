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

#ifndef MODFEAT_OBJECTIVE_HPP
#define MODFEAT_OBJECTIVE_HPP

#include <optional>
#include <span>
#include <vector>

#include "modfeat/model.hpp"
#include "modfeat/pseudolabel.hpp"

namespace modfeat {

struct LossBreakdown {
  double l_s = 0.0;
  double l_u = 0.0;
  double l_d = 0.0;
  double l_ud = 0.0;
  double total = 0.0;
  double beta = 1.0;
  double gamma = 0.5;
};

struct LossConfig {
  Method method = Method::fm;
  double beta = 1.0;
  double gamma = 0.5;
  // When set, the column maxima are constant targets and only the diagonal
  // receives gradient. Otherwise the gradient of MSE(diag, col_max) flows into
  // both entries.
  bool detach_col_max = false;
  ForwardMode mode = ForwardMode::train;
};

/// Inputs for one optimisation step. unlabeled_x holds the strong views of
/// every unlabeled slot, records the pseudo-labels made from the weak views.
struct LossBatch {
  Array2 labeled_x;
  std::vector<int> labels;
  Array2 unlabeled_x;
  std::vector<PseudoLabelRecord> records;
};

/// Column-max targets of the detached diagonal losses. Missing entries are
/// computed from the current prediction and stored, so a later rebuild can
/// reuse them. Unused when gradients pass through the maxima.
struct DiagTargets {
  std::optional<Array2> labeled;
  std::optional<Array2> unlabeled;
};

/// B x C: per sample block of s_log (rows b*C .. b*C+C-1), the column maxima.
inline Array2 block_col_max(const Array2& s_log, std::size_t num_classes) {
  if (s_log.cols() != num_classes || s_log.rows() % num_classes != 0) {
    throw DimensionError("block_col_max: expected (B*C) x C, got " + s_log.shape_string());
  }
  const std::size_t b = s_log.rows() / num_classes;
  Array2 out(b, num_classes);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t c = 0; c < num_classes; ++c) {
      double m = s_log(i * num_classes, c);
      for (std::size_t j = 1; j < num_classes; ++j) m = std::max(m, s_log(i * num_classes + j, c));
      out(i, c) = m;
    }
  }
  return out;
}

/// sum_b w_b * (-s_log[b*rows_per_sample + row_of(y_b), y_b]) / denom. With
/// rows_per_sample = C the entry read is the diagonal of block b.
inline Var weighted_nll(Var s_log, std::span<const int> labels, std::span<const double> weights, double denom,
                        bool diagonal) {
  const std::size_t c = s_log.cols();
  const std::size_t rows_per_sample = diagonal ? c : 1;
  std::vector<Index2> idx;
  std::vector<double> w;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const auto y = static_cast<std::size_t>(labels[b]);
    if (y >= c) throw DimensionError("nll: label out of range");
    idx.push_back(Index2{b * rows_per_sample + (diagonal ? y : 0), y});
    w.push_back(-weights[b] / denom);
  }
  Tape& t = *s_log.tape;
  Var picked = gather(s_log, std::move(idx));
  const std::size_t n = w.size();
  return sum(mul(picked, t.constant(Array2(n, 1, std::move(w)))));
}

/// sum_b w_b * (1/C) sum_c (s_log[bC+c, c] - target[b, c])^2 / denom. Targets
/// are constants, so the gradient only moves the diagonal.
inline Var weighted_diag_mse(Var s_log, const Array2& targets, std::span<const double> weights, double denom) {
  const std::size_t c = s_log.cols();
  const std::size_t b = targets.rows();
  if (s_log.rows() != b * c || targets.cols() != c || weights.size() != b) {
    throw DimensionError("diag_mse: inconsistent shapes");
  }
  Tape& t = *s_log.tape;
  std::vector<Index2> idx;
  Array2 tgt(b * c, 1), w(b * c, 1);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      idx.push_back(Index2{i * c + k, k});
      tgt(i * c + k, 0) = targets(i, k);
      w(i * c + k, 0) = weights[i] / (static_cast<double>(c) * denom);
    }
  }
  Var diff = sub(gather(s_log, std::move(idx)), t.constant(std::move(tgt)));
  return sum(mul(mul(diff, diff), t.constant(std::move(w))));
}

/// Same sum with the column maxima as graph entries: each target is gathered
/// from the first row holding the block's column maximum, so its gradient is
/// routed there.
inline Var weighted_diag_max_mse(Var s_log, std::span<const double> weights, double denom) {
  const std::size_t c = s_log.cols();
  if (c == 0 || s_log.rows() % c != 0 || weights.size() != s_log.rows() / c) {
    throw DimensionError("diag_max_mse: inconsistent shapes");
  }
  const std::size_t b = weights.size();
  const Array2& v = s_log.value();
  Tape& t = *s_log.tape;
  std::vector<Index2> diag, arg;
  Array2 w(b * c, 1);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < c; ++j)
        if (v(i * c + j, k) > v(i * c + best, k)) best = j;
      diag.push_back(Index2{i * c + k, k});
      arg.push_back(Index2{i * c + best, k});
      w(i * c + k, 0) = weights[i] / (static_cast<double>(c) * denom);
    }
  }
  Var diff = sub(gather(s_log, std::move(diag)), gather(s_log, std::move(arg)));
  return sum(mul(mul(diff, diff), t.constant(std::move(w))));
}

/// L_d for one or more C x C blocks: MSE(diag, col_max), averaged over blocks.
inline Var diag_max_loss(Var s_log, bool detach_col_max = false) {
  const std::size_t c = s_log.cols();
  const Array2 targets = block_col_max(s_log.value(), c);
  std::vector<double> ones(targets.rows(), 1.0);
  if (!detach_col_max) return weighted_diag_max_mse(s_log, ones, static_cast<double>(targets.rows()));
  return weighted_diag_mse(s_log, targets, ones, static_cast<double>(targets.rows()));
}

struct SupervisedTerms {
  Var l_s;
  Var s_log;
};

/// L_s over a labeled batch (mean of -diag(S_log)[y]); s_log is (B*C) x C.
inline SupervisedTerms supervised_loss(Tape& t, Model& model, const SarBank& bank, const Array2& x,
                                       std::span<const int> labels, ForwardMode mode, MaskSource* masks) {
  if (x.rows() != labels.size() || x.rows() == 0) throw DimensionError("supervised_loss: empty or mismatched batch");
  Var s_log = row_log_softmax(model.modulated_logits(t, t.constant(x), bank, mode, masks));
  std::vector<double> ones(labels.size(), 1.0);
  return {weighted_nll(s_log, labels, ones, static_cast<double>(labels.size()), true), s_log};
}

struct UnsupervisedTerms {
  Var l_u;
  Var l_ud;
};

/// L_u and L_ud for the strong views. Only kept records enter the graph; the
/// sums are divided by the total number of records.
inline UnsupervisedTerms unsupervised_loss(Tape& t, Model& model, const SarBank& bank, const Array2& strong_x,
                                           std::span<const PseudoLabelRecord> records, ForwardMode mode,
                                           MaskSource* masks, bool detach_col_max = false,
                                           std::optional<Array2>* frozen_targets = nullptr) {
  if (strong_x.rows() != records.size()) throw DimensionError("unsupervised_loss: record count mismatch");
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].keep && records[i].l_scale > 0.0) kept.push_back(i);
  if (kept.empty()) {
    Var zero = t.constant(Array2(1, 1));
    return {zero, zero};
  }
  Array2 xk(kept.size(), strong_x.cols());
  std::vector<int> labels;
  std::vector<double> weights;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    std::copy(strong_x.row(kept[i]).begin(), strong_x.row(kept[i]).end(), xk.row(i).begin());
    labels.push_back(records[kept[i]].label);
    weights.push_back(records[kept[i]].l_scale);
  }
  const double denom = static_cast<double>(records.size());
  Var s_log = row_log_softmax(model.modulated_logits(t, t.constant(xk), bank, mode, masks));
  Var l_u = weighted_nll(s_log, labels, weights, denom, true);
  if (!detach_col_max) return {l_u, weighted_diag_max_mse(s_log, weights, denom)};
  Array2 targets;
  if (frozen_targets != nullptr && frozen_targets->has_value()) {
    targets = **frozen_targets;
  } else {
    targets = block_col_max(s_log.value(), model.num_classes());
    if (frozen_targets != nullptr) *frozen_targets = targets;
  }
  return {l_u, weighted_diag_mse(s_log, targets, weights, denom)};
}

struct LossTerms {
  Var total;
  LossBreakdown values;
};

/// L = L_s + L_u + beta L_d + gamma L_ud. In baseline mode there is no
/// modulation and only L_s, L_u (weights in {0,1}) are active.
inline LossTerms total_loss(Tape& t, Model& model, const SarBank* bank, const LossBatch& batch,
                            const LossConfig& cfg, MaskSource* masks, DiagTargets* targets = nullptr) {
  if (batch.labeled_x.rows() == 0) throw ContractError("total_loss: empty batch");
  if (batch.labeled_x.rows() != batch.labels.size()) throw DimensionError("total_loss: label count mismatch");
  if (batch.unlabeled_x.rows() != batch.records.size()) throw DimensionError("total_loss: record count mismatch");

  Var l_s, l_u, l_d, l_ud;
  if (cfg.method == Method::fm) {
    if (bank == nullptr) throw ContractError("total_loss: fm mode needs a SAR bank");
    auto sup = supervised_loss(t, model, *bank, batch.labeled_x, batch.labels, cfg.mode, masks);
    l_s = sup.l_s;
    const std::vector<double> ones(batch.labels.size(), 1.0);
    const double n = static_cast<double>(batch.labels.size());
    if (cfg.detach_col_max) {
      Array2 lt;
      if (targets != nullptr && targets->labeled) {
        lt = *targets->labeled;
      } else {
        lt = block_col_max(sup.s_log.value(), model.num_classes());
        if (targets != nullptr) targets->labeled = lt;
      }
      l_d = weighted_diag_mse(sup.s_log, lt, ones, n);
    } else {
      l_d = weighted_diag_max_mse(sup.s_log, ones, n);
    }
    if (batch.records.empty()) {
      l_u = l_ud = t.constant(Array2(1, 1));
    } else {
      auto uns = unsupervised_loss(t, model, *bank, batch.unlabeled_x, batch.records, cfg.mode, masks,
                                   cfg.detach_col_max, targets != nullptr ? &targets->unlabeled : nullptr);
      l_u = uns.l_u;
      l_ud = uns.l_ud;
    }
  } else {
    Var s_log = row_log_softmax(model.plain_logits(t, t.constant(batch.labeled_x), cfg.mode, masks));
    std::vector<double> ones(batch.labels.size(), 1.0);
    l_s = weighted_nll(s_log, batch.labels, ones, static_cast<double>(batch.labels.size()), false);
    l_d = l_ud = t.constant(Array2(1, 1));
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < batch.records.size(); ++i)
      if (batch.records[i].keep) kept.push_back(i);
    if (kept.empty()) {
      l_u = t.constant(Array2(1, 1));
    } else {
      Array2 xk(kept.size(), batch.unlabeled_x.cols());
      std::vector<int> labels;
      std::vector<double> weights;
      for (std::size_t i = 0; i < kept.size(); ++i) {
        std::copy(batch.unlabeled_x.row(kept[i]).begin(), batch.unlabeled_x.row(kept[i]).end(), xk.row(i).begin());
        labels.push_back(batch.records[kept[i]].label);
        weights.push_back(batch.records[kept[i]].l_scale);
      }
      Var su = row_log_softmax(model.plain_logits(t, t.constant(xk), cfg.mode, masks));
      l_u = weighted_nll(su, labels, weights, static_cast<double>(batch.records.size()), false);
    }
  }

  Var total = add(add(add(l_s, l_u), scale(l_d, cfg.beta)), scale(l_ud, cfg.gamma));
  LossBreakdown v;
  v.l_s = l_s.value()(0, 0);
  v.l_u = l_u.value()(0, 0);
  v.l_d = l_d.value()(0, 0);
  v.l_ud = l_ud.value()(0, 0);
  v.total = total.value()(0, 0);
  v.beta = cfg.beta;
  v.gamma = cfg.gamma;
  return {total, v};
}

}  // namespace modfeat

#endif  // MODFEAT_OBJECTIVE_HPP
