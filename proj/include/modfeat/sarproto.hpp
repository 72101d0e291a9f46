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

#ifndef MODFEAT_SARPROTO_HPP
#define MODFEAT_SARPROTO_HPP

#include <cmath>
#include <span>
#include <vector>

#include "modfeat/errors.hpp"
#include "modfeat/numerics/array2.hpp"

namespace modfeat {

/// Class prototypes, their clamped cosine similarities, and the
/// similarity-weighted average representation of each class.
struct SarBank {
  Array2 prototypes;  // C x F
  Array2 similarity;  // C x C
  Array2 sar;         // C x F
  int epoch = 0;

  std::size_t num_classes() const noexcept { return sar.rows(); }
  std::size_t feature_dim() const noexcept { return sar.cols(); }
};

/// Mean feature of each class over all labeled samples (all domains pooled).
inline Array2 compute_prototypes(const Array2& features, std::span<const int> labels, std::size_t num_classes) {
  if (features.rows() != labels.size()) throw DimensionError("compute_prototypes: label count mismatch");
  Array2 p(num_classes, features.cols());
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const int c = labels[i];
    if (c < 0 || static_cast<std::size_t>(c) >= num_classes) throw DimensionError("compute_prototypes: label out of range");
    ++counts[c];
    auto dst = p.row(c);
    auto src = features.row(i);
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] += src[k];
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) throw MissingClassError(static_cast<int>(c));
    for (auto& v : p.row(c)) v /= static_cast<double>(counts[c]);
  }
  return p;
}

/// Cosine similarity between prototype rows, negative values clamped to 0.
inline Array2 compute_similarity(const Array2& prototypes) {
  const std::size_t c = prototypes.rows();
  std::vector<double> norms(c);
  for (std::size_t i = 0; i < c; ++i) {
    double s = 0.0;
    for (double v : prototypes.row(i)) s += v * v;
    norms[i] = std::sqrt(s);
    if (!(norms[i] > 1e-12)) {
      throw DegeneratePrototypeError("compute_similarity: prototype " + std::to_string(i) + " has zero norm");
    }
  }
  Array2 sim(c, c);
  for (std::size_t i = 0; i < c; ++i) {
    sim(i, i) = 1.0;
    for (std::size_t j = i + 1; j < c; ++j) {
      double dot = 0.0;
      auto a = prototypes.row(i);
      auto b = prototypes.row(j);
      for (std::size_t k = 0; k < a.size(); ++k) dot += a[k] * b[k];
      const double cos = std::max(0.0, dot / (norms[i] * norms[j]));
      sim(i, j) = cos;
      sim(j, i) = cos;
    }
  }
  return sim;
}

/// R_c = sum_j Sim_cj P_j / sum_j Sim_cj.
inline Array2 compute_sar(const Array2& prototypes, const Array2& similarity) {
  const std::size_t c = prototypes.rows();
  if (similarity.rows() != c || similarity.cols() != c) throw DimensionError("compute_sar: similarity must be CxC");
  Array2 r(c, prototypes.cols());
  for (std::size_t i = 0; i < c; ++i) {
    double wsum = 0.0;
    for (std::size_t j = 0; j < c; ++j) wsum += similarity(i, j);
    if (!(wsum > 0.0)) throw ParameterError("compute_sar: similarity row " + std::to_string(i) + " has no positive mass");
    auto dst = r.row(i);
    for (std::size_t j = 0; j < c; ++j) {
      const double w = similarity(i, j);
      if (w == 0.0) continue;
      auto src = prototypes.row(j);
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += w * src[k];
    }
    for (auto& v : dst) v /= wsum;
  }
  return r;
}

inline SarBank build_sar_bank(const Array2& features, std::span<const int> labels, std::size_t num_classes,
                              int epoch = 0) {
  SarBank bank;
  bank.prototypes = compute_prototypes(features, labels, num_classes);
  bank.similarity = compute_similarity(bank.prototypes);
  bank.sar = compute_sar(bank.prototypes, bank.similarity);
  bank.epoch = epoch;
  return bank;
}

}  // namespace modfeat

#endif  // MODFEAT_SARPROTO_HPP
