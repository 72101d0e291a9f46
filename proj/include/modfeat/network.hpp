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

#ifndef MODFEAT_NETWORK_HPP
#define MODFEAT_NETWORK_HPP

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "modfeat/errors.hpp"
#include "modfeat/numerics/tape.hpp"

namespace modfeat {

struct ExtractorConfig {
  std::size_t input_dim = 32;
  std::vector<std::size_t> hidden_dims{64, 64};
  std::size_t feature_dim = 32;
  double dropout_p = 0.05;
  /// Output rows are rescaled to norm sqrt(feature_dim) when set.
  bool normalize_features = true;
};

/// train and mc both sample dropout masks; eval is deterministic.
enum class ForwardMode { eval, train, mc };

struct Affine {
  Parameter weight;  // in x out
  Parameter bias;    // 1 x out

  Var forward(Tape& t, Var x) { return add_row(matmul(x, t.leaf(weight)), t.leaf(bias)); }
};

inline Affine make_affine(const std::string& name, std::size_t in, std::size_t out, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Array2 w(in, out);
  for (auto& v : w.data()) v = u(rng);
  return Affine{Parameter(name + ".weight", std::move(w)), Parameter(name + ".bias", Array2(1, out))};
}

/// MLP feature extractor: [affine, relu] per hidden layer, dropout, then a
/// linear projection to feature_dim, optionally rescaled to a fixed row norm.
class Extractor {
 public:
  Extractor() = default;

  static Extractor init(const ExtractorConfig& cfg, Rng& rng) {
    if (cfg.feature_dim < 1 || cfg.input_dim < 1) throw ParameterError("Extractor: dimensions must be >= 1");
    check_dropout_p(cfg.dropout_p);
    Extractor e;
    e.cfg_ = cfg;
    std::size_t in = cfg.input_dim;
    for (std::size_t i = 0; i < cfg.hidden_dims.size(); ++i) {
      const std::size_t out = cfg.hidden_dims[i];
      e.layers_.push_back(make_affine("extractor." + std::to_string(i), in, out,
                                      std::sqrt(6.0 / static_cast<double>(in)), rng));
      in = out;
    }
    e.layers_.push_back(make_affine("extractor." + std::to_string(cfg.hidden_dims.size()), in, cfg.feature_dim,
                                    std::sqrt(3.0 / static_cast<double>(in)), rng));
    return e;
  }

  const ExtractorConfig& config() const noexcept { return cfg_; }
  std::vector<Affine>& layers() noexcept { return layers_; }
  const std::vector<Affine>& layers() const noexcept { return layers_; }

  /// `masks` is required in train and mc modes.
  Var forward(Tape& t, Var x, ForwardMode mode, MaskSource* masks) {
    if (x.cols() != cfg_.input_dim) {
      throw DimensionError("extract: input has " + std::to_string(x.cols()) + " columns, expected " +
                           std::to_string(cfg_.input_dim));
    }
    Var h = x;
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) h = relu(layers_[i].forward(t, h));
    if (mode != ForwardMode::eval) {
      if (masks == nullptr) throw ContractError("extract: dropout mode needs a mask source");
      h = apply_mask(h, masks->next(h.rows(), h.cols(), cfg_.dropout_p));
    }
    Var z = layers_.back().forward(t, h);
    if (cfg_.normalize_features) z = row_normalize(z, std::sqrt(static_cast<double>(cfg_.feature_dim)));
    return z;
  }

  /// No-gradient eval-mode features.
  Array2 extract(const Array2& x) {
    Tape t(GradMode::disabled);
    return forward(t, t.constant(x), ForwardMode::eval, nullptr).value();
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto& l : layers_) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }

 private:
  ExtractorConfig cfg_;
  std::vector<Affine> layers_;
};

/// Linear head shared by all domains.
class Classifier {
 public:
  Classifier() = default;
  Classifier(std::size_t feature_dim, std::size_t num_classes, Rng& rng)
      : affine_(make_affine("classifier", feature_dim, num_classes,
                            1.0 / std::sqrt(static_cast<double>(feature_dim)), rng)) {}

  std::size_t feature_dim() const noexcept { return affine_.weight.value.rows(); }
  std::size_t num_classes() const noexcept { return affine_.weight.value.cols(); }

  Parameter& weight() noexcept { return affine_.weight; }
  Parameter& bias() noexcept { return affine_.bias; }
  const Parameter& weight() const noexcept { return affine_.weight; }
  const Parameter& bias() const noexcept { return affine_.bias; }

  /// Logits for each row of z.
  Var forward(Tape& t, Var z) {
    if (z.cols() != feature_dim()) {
      throw DimensionError("classify: input has " + std::to_string(z.cols()) + " columns, expected " +
                           std::to_string(feature_dim()));
    }
    return affine_.forward(t, z);
  }

  /// classify for one modulated matrix: requires exactly C rows, returns C x C.
  Var classify_modulated(Tape& t, Var z_m) {
    if (z_m.rows() != num_classes()) {
      throw DimensionError("classify: modulated input must have " + std::to_string(num_classes()) + " rows");
    }
    return forward(t, z_m);
  }

  std::vector<Parameter*> parameters() { return {&affine_.weight, &affine_.bias}; }

 private:
  Affine affine_;
};

}  // namespace modfeat

#endif  // MODFEAT_NETWORK_HPP
