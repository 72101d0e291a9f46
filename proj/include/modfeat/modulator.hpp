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

#ifndef MODFEAT_MODULATOR_HPP
#define MODFEAT_MODULATOR_HPP

#include <algorithm>
#include <iostream>
#include <span>
#include <vector>

#include "modfeat/errors.hpp"
#include "modfeat/numerics/tape.hpp"

namespace modfeat {

/// Learnable C x F blend weights between instance features and SAR rows.
struct ModulationMatrix {
  Parameter m;

  ModulationMatrix() : m("modulator.M", Array2()) {}
  explicit ModulationMatrix(Array2 init) : m("modulator.M", std::move(init)) {}

  std::size_t num_classes() const noexcept { return m.value.rows(); }
  std::size_t feature_dim() const noexcept { return m.value.cols(); }

  /// Fraction of entries outside [0, 1]; M is trained unconstrained.
  double fraction_outside_unit() const {
    if (m.value.empty()) return 0.0;
    std::size_t n = 0;
    for (double v : m.value.data())
      if (v < 0.0 || v > 1.0) ++n;
    return static_cast<double>(n) / static_cast<double>(m.value.size());
  }
};

/// Per-class population variance of each feature coordinate (C x F).
inline Array2 class_variances(const Array2& features, std::span<const int> labels, std::size_t num_classes) {
  if (features.rows() != labels.size()) throw DimensionError("class_variances: label count mismatch");
  const std::size_t f = features.cols();
  Array2 mean(num_classes, f), var(num_classes, f);
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    if (c >= num_classes) throw DimensionError("class_variances: label out of range");
    ++counts[c];
    for (std::size_t k = 0; k < f; ++k) mean(c, k) += features(i, k);
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] < 2) {
      throw ParameterError("init_from_variance: class " + std::to_string(c) + " needs >= 2 labeled features");
    }
    for (std::size_t k = 0; k < f; ++k) mean(c, k) /= static_cast<double>(counts[c]);
  }
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    for (std::size_t k = 0; k < f; ++k) {
      const double d = features(i, k) - mean(c, k);
      var(c, k) += d * d;
    }
  }
  for (std::size_t c = 0; c < num_classes; ++c)
    for (std::size_t k = 0; k < f; ++k) var(c, k) /= static_cast<double>(counts[c]);
  return var;
}

/// M = 1 - (V - min V) / (max V - min V), with global scalar min/max.
/// Constant V yields all-ones and sets `degenerate`.
inline Array2 modulation_from_variance(const Array2& variances, bool* degenerate = nullptr) {
  const auto [lo_it, hi_it] = std::minmax_element(variances.data().begin(), variances.data().end());
  if (lo_it == variances.data().end()) throw DimensionError("modulation_from_variance: empty variance matrix");
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (degenerate != nullptr) *degenerate = (hi == lo);
  if (hi == lo) return Array2::ones(variances.rows(), variances.cols());
  Array2 m(variances.rows(), variances.cols());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = 1.0 - (variances[i] - lo) / (hi - lo);
  return m;
}

inline ModulationMatrix init_from_variance(const Array2& features, std::span<const int> labels,
                                           std::size_t num_classes) {
  bool degenerate = false;
  ModulationMatrix mm(modulation_from_variance(class_variances(features, labels, num_classes), &degenerate));
  if (degenerate) std::cerr << "warning: constant feature variance, modulation matrix set to ones\n";
  return mm;
}

/// Z_m = M ⊙ Z + (1 − M) ⊙ R for a batch. z is B x F, M and R are C x F; row
/// b*C + j of the result is sample b modulated toward class j. R is a constant.
inline Var modulate(Var z, const Array2& sar, Var m) {
  Tape& t = *z.tape;
  if (m.tape != z.tape) throw ContractError("modulate: operands on different tapes");
  const std::size_t c = m.rows();
  if (sar.rows() != c || sar.cols() != m.cols() || z.cols() != m.cols()) {
    throw DimensionError("modulate: z " + z.value().shape_string() + ", R " + sar.shape_string() + ", M " +
                         m.value().shape_string());
  }
  const std::size_t b = z.rows();
  Var zr = repeat_rows(z, c);
  Var mt = tile_rows(m, b);
  Array2 r_tiled(b * c, sar.cols());
  for (std::size_t k = 0; k < b; ++k)
    std::copy(sar.data().begin(), sar.data().end(), r_tiled.data().begin() + static_cast<std::ptrdiff_t>(k * sar.size()));
  Var one_minus = sub(t.constant(Array2::ones(b * c, sar.cols())), mt);
  return add(mul(mt, zr), mul(one_minus, t.constant(std::move(r_tiled))));
}

}  // namespace modfeat

#endif  // MODFEAT_MODULATOR_HPP
