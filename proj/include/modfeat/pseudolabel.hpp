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

#ifndef MODFEAT_PSEUDOLABEL_HPP
#define MODFEAT_PSEUDOLABEL_HPP

#include <cmath>
#include <vector>

#include "modfeat/model.hpp"

namespace modfeat {

struct PseudoLabelRecord {
  int label = 0;
  double p_max = 0.0;  // mean confidence of the label
  double sigma = 0.0;  // MC std of that confidence
  bool keep = false;
  double l_scale = 0.0;
};

/// Q(p) = exp(p^3 - 1).
inline double q_scale(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("q_scale: confidence must be in [0,1]");
  return std::exp(p * p * p - 1.0);
}

/// keep iff p_max - sigma > tau; kept records are weighted by Q(p_max).
inline PseudoLabelRecord make_record(int label, double p_max, double sigma, double tau) {
  PseudoLabelRecord r;
  r.label = label;
  r.p_max = p_max;
  r.sigma = sigma;
  r.keep = (p_max - sigma) > tau;
  r.l_scale = r.keep ? q_scale(std::min(1.0, std::max(0.0, p_max))) : 0.0;
  return r;
}

/// Class probabilities after modulating each row of x toward each class:
/// (B*C) x C, block b row j = softmax(C(M(f(x_b)) toward j)).
inline Array2 predict_matrices(Model& model, const SarBank& bank, const Array2& x, ForwardMode mode,
                               MaskSource* masks) {
  Tape t(GradMode::disabled);
  return row_softmax(model.modulated_logits(t, t.constant(x), bank, mode, masks).value());
}

/// C x C prediction matrix for a single sample.
inline Array2 predict_matrix(Model& model, const SarBank& bank, const std::vector<double>& u, bool dropout,
                             Rng& rng) {
  MaskSource masks(rng);
  return predict_matrices(model, bank, Array2::row_vector(u), dropout ? ForwardMode::mc : ForwardMode::eval,
                          &masks);
}

/// MC-dropout pseudo-labels for every row of x (weak views). For each sample,
/// the diagonal of its prediction matrix is averaged over `mc_samples` passes;
/// the argmax is the label and sigma is the population std of that class's
/// diagonal entry across passes.
inline std::vector<PseudoLabelRecord> pseudo_label_batch(Model& model, const SarBank& bank, const Array2& x,
                                                         std::size_t mc_samples, double tau, Rng& rng) {
  if (mc_samples < 2) throw ParameterError("pseudo_label: need at least 2 MC samples");
  if (!(tau > 0.0 && tau < 1.0)) throw ParameterError("pseudo_label: tau must be in (0,1)");
  const std::size_t b = x.rows();
  const std::size_t c = model.num_classes();
  // Welford accumulators per (sample, class); identical draws give exactly zero spread.
  Array2 mean(b, c), m2(b, c);
  MaskSource masks(rng);
  for (std::size_t k = 0; k < mc_samples; ++k) {
    const Array2 s = predict_matrices(model, bank, x, ForwardMode::mc, &masks);
    const double n = static_cast<double>(k + 1);
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const double v = s(i * c + j, j);
        const double delta = v - mean(i, j);
        mean(i, j) += delta / n;
        m2(i, j) += delta * (v - mean(i, j));
      }
    }
  }
  std::vector<PseudoLabelRecord> out;
  out.reserve(b);
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (mean(i, j) > mean(i, best)) best = j;
    const double sigma = std::sqrt(std::max(0.0, m2(i, best)) / static_cast<double>(mc_samples));
    out.push_back(make_record(static_cast<int>(best), mean(i, best), sigma, tau));
  }
  return out;
}

inline PseudoLabelRecord pseudo_label(Model& model, const SarBank& bank, const std::vector<double>& u,
                                      std::size_t mc_samples, double tau, Rng& rng) {
  return pseudo_label_batch(model, bank, Array2::row_vector(u), mc_samples, tau, rng).front();
}

/// Single deterministic pass without modulation; keep iff p_max > tau, weight 1.
inline std::vector<PseudoLabelRecord> baseline_pseudo_label_batch(Model& model, const Array2& x,
                                                                  double tau = 0.95) {
  Tape t(GradMode::disabled);
  const Array2 probs = row_softmax(model.plain_logits(t, t.constant(x), ForwardMode::eval, nullptr).value());
  std::vector<PseudoLabelRecord> out;
  out.reserve(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < probs.cols(); ++j)
      if (probs(i, j) > probs(i, best)) best = j;
    PseudoLabelRecord r;
    r.label = static_cast<int>(best);
    r.p_max = probs(i, best);
    r.keep = r.p_max > tau;
    r.l_scale = r.keep ? 1.0 : 0.0;
    out.push_back(r);
  }
  return out;
}

inline PseudoLabelRecord baseline_pseudo_label(Model& model, const std::vector<double>& u, double tau = 0.95) {
  return baseline_pseudo_label_batch(model, Array2::row_vector(u), tau).front();
}

}  // namespace modfeat

#endif  // MODFEAT_PSEUDOLABEL_HPP
