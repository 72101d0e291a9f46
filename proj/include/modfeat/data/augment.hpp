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

#ifndef MODFEAT_DATA_AUGMENT_HPP
#define MODFEAT_DATA_AUGMENT_HPP

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "modfeat/data/dataset.hpp"

namespace modfeat {

struct AugmentConfig {
  double weak_sigma = 0.05;    // times per-dimension std
  double strong_sigma = 0.25;  // times per-dimension std
  double mask_fraction = 0.15;
};

/// Feature-space weak/strong views. Never reads labels.
class Augmenter {
 public:
  Augmenter() = default;
  Augmenter(std::vector<double> dim_std, AugmentConfig cfg) : std_(std::move(dim_std)), cfg_(cfg) {}

  /// Per-dimension population std of a training set.
  static Augmenter fit(const std::vector<Sample>& train, AugmentConfig cfg = {}) {
    if (train.empty()) throw ParameterError("Augmenter::fit: empty training set");
    const std::size_t dim = train.front().features.size();
    std::vector<double> mean(dim, 0.0), var(dim, 0.0);
    for (const auto& s : train)
      for (std::size_t k = 0; k < dim; ++k) mean[k] += s.features[k];
    for (auto& m : mean) m /= static_cast<double>(train.size());
    for (const auto& s : train)
      for (std::size_t k = 0; k < dim; ++k) var[k] += (s.features[k] - mean[k]) * (s.features[k] - mean[k]);
    for (auto& v : var) v = std::sqrt(v / static_cast<double>(train.size()));
    return Augmenter(std::move(var), cfg);
  }

  const std::vector<double>& dim_std() const noexcept { return std_; }
  const AugmentConfig& config() const noexcept { return cfg_; }

  std::size_t masked_count(std::size_t dim) const {
    return static_cast<std::size_t>(std::floor(cfg_.mask_fraction * static_cast<double>(dim)));
  }

  std::vector<double> weak(const std::vector<double>& x, Rng& rng) const {
    check(x);
    std::vector<double> out = x;
    if (cfg_.weak_sigma == 0.0) return out;
    std::normal_distribution<double> n(0.0, 1.0);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += cfg_.weak_sigma * std_[k] * n(rng);
    return out;
  }

  std::vector<double> strong(const std::vector<double>& x, Rng& rng) const {
    check(x);
    std::vector<double> out = x;
    std::normal_distribution<double> n(0.0, 1.0);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += cfg_.strong_sigma * std_[k] * n(rng);
    // Partial Fisher-Yates picks the masked coordinates without replacement.
    std::vector<std::size_t> order(out.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t m = masked_count(out.size());
    for (std::size_t i = 0; i < m; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
      std::swap(order[i], order[pick(rng)]);
      out[order[i]] = 0.0;
    }
    return out;
  }

 private:
  void check(const std::vector<double>& x) const {
    if (x.size() != std_.size()) throw DimensionError("Augmenter: feature length mismatch");
  }

  std::vector<double> std_;
  AugmentConfig cfg_;
};

}  // namespace modfeat

#endif  // MODFEAT_DATA_AUGMENT_HPP
