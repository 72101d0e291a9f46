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

#ifndef MODFEAT_GRADCHECK_MODEL_HPP
#define MODFEAT_GRADCHECK_MODEL_HPP

#include <random>

#include "modfeat/numerics/grad_check.hpp"
#include "modfeat/objective.hpp"

namespace modfeat {

/// A two-class model with feature dim 4 and a two-labeled/two-unlabeled batch,
/// small enough to finite-difference every parameter entry.
struct MiniatureProblem {
  Model model;
  SarBank bank;
  LossBatch batch;
  LossConfig loss;
};

inline MiniatureProblem make_miniature_problem(std::uint64_t seed = 0, Method method = Method::fm) {
  constexpr std::size_t kClasses = 2;
  constexpr std::size_t kFeatures = 4;
  constexpr std::size_t kInputs = 3;
  Rng rng(derive_seed(seed, {0x9c}));
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.1, 0.9);

  ExtractorConfig ecfg;
  ecfg.input_dim = kInputs;
  ecfg.hidden_dims = {5};
  ecfg.feature_dim = kFeatures;
  ecfg.dropout_p = 0.05;

  MiniatureProblem p;
  p.model = Model::init(ecfg, kClasses, rng);
  for (auto& v : p.model.modulator.m.value.data()) v = u(rng);
  for (auto* b : {&p.model.extractor.layers()[0].bias, &p.model.extractor.layers()[1].bias,
                  &p.model.classifier.bias()})
    for (auto& v : b->value.data()) v = 0.1 * n(rng);

  Array2 protos(kClasses, kFeatures);
  for (auto& v : protos.data()) v = n(rng);
  p.bank.prototypes = protos;
  p.bank.similarity = compute_similarity(protos);
  p.bank.sar = compute_sar(protos, p.bank.similarity);

  p.batch.labeled_x = Array2(2, kInputs);
  p.batch.unlabeled_x = Array2(2, kInputs);
  for (auto& v : p.batch.labeled_x.data()) v = n(rng);
  for (auto& v : p.batch.unlabeled_x.data()) v = n(rng);
  p.batch.labels = {0, 1};
  p.batch.records = {make_record(1, 0.9, 0.05, 0.75), make_record(0, 0.85, 0.02, 0.75)};
  if (method == Method::fixmatch_baseline) {
    for (auto& r : p.batch.records) r.l_scale = 1.0;
  }
  p.loss.method = method;
  p.loss.mode = ForwardMode::train;
  return p;
}

/// Runs grad_check over the full total loss with dropout masks frozen at their
/// first draw. Detached column-max targets are frozen the same way.
inline GradCheckReport check_total_loss_gradient(MiniatureProblem& p, double step = 1e-5, double tolerance = 1e-4) {
  std::vector<Array2> masks;
  DiagTargets targets;
  {
    Tape t(GradMode::disabled);
    Rng rng(7);
    MaskSource fresh(rng);
    total_loss(t, p.model, &p.bank, p.batch, p.loss, &fresh, &targets);
    masks = fresh.recorded();
  }
  LossBuilder build = [&](Tape& t) {
    MaskSource replay = MaskSource::replay(masks);
    DiagTargets frozen = targets;
    return total_loss(t, p.model, &p.bank, p.batch, p.loss, &replay, &frozen).total;
  };
  std::vector<Parameter*> params;
  for (auto* q : p.model.parameters())
    if (q->learnable) params.push_back(q);
  return grad_check(build, params, step, tolerance);
}

}  // namespace modfeat

#endif  // MODFEAT_GRADCHECK_MODEL_HPP
