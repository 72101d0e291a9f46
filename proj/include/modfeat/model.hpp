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

#ifndef MODFEAT_MODEL_HPP
#define MODFEAT_MODEL_HPP

#include <string>
#include <vector>

#include "modfeat/modulator.hpp"
#include "modfeat/network.hpp"
#include "modfeat/sarproto.hpp"

namespace modfeat {

enum class Method { fm, fixmatch_baseline };

inline std::string to_string(Method m) { return m == Method::fm ? "fm" : "fixmatch-baseline"; }

inline Method parse_method(const std::string& s) {
  if (s == "fm") return Method::fm;
  if (s == "fixmatch-baseline") return Method::fixmatch_baseline;
  throw ConfigError("unknown mode '" + s + "' (expected fm or fixmatch-baseline)");
}

/// F = C(M(f)).
struct Model {
  Extractor extractor;
  ModulationMatrix modulator;
  Classifier classifier;

  std::size_t num_classes() const noexcept { return classifier.num_classes(); }
  std::size_t feature_dim() const noexcept { return classifier.feature_dim(); }

  static Model init(const ExtractorConfig& cfg, std::size_t num_classes, Rng& rng) {
    Model m;
    m.extractor = Extractor::init(cfg, rng);
    m.classifier = Classifier(cfg.feature_dim, num_classes, rng);
    m.modulator = ModulationMatrix(Array2::ones(num_classes, cfg.feature_dim));
    return m;
  }

  /// Every parameter, modulator last.
  std::vector<Parameter*> parameters() {
    auto out = extractor.parameters();
    for (auto* p : classifier.parameters()) out.push_back(p);
    out.push_back(&modulator.m);
    return out;
  }

  /// (B*C) x C logits: block b, row j is sample b modulated toward class j.
  Var modulated_logits(Tape& t, Var x, const SarBank& bank, ForwardMode mode, MaskSource* masks) {
    if (bank.num_classes() != num_classes() || bank.feature_dim() != feature_dim()) {
      throw DimensionError("model and SAR bank disagree on classes or feature dim");
    }
    Var z = extractor.forward(t, x, mode, masks);
    return classifier.forward(t, modulate(z, bank.sar, t.leaf(modulator.m)));
  }

  /// B x C logits without modulation.
  Var plain_logits(Tape& t, Var x, ForwardMode mode, MaskSource* masks) {
    return classifier.forward(t, extractor.forward(t, x, mode, masks));
  }
};

}  // namespace modfeat

#endif  // MODFEAT_MODEL_HPP
