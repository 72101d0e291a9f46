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

#ifndef MODFEAT_DATA_DATASET_HPP
#define MODFEAT_DATA_DATASET_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "modfeat/errors.hpp"
#include "modfeat/numerics/array2.hpp"
#include "modfeat/numerics/random.hpp"

namespace modfeat {

/// One observation. class_id and domain_id are always stored; training code
/// must only read class_id when truth_visible is set, and never reads domain_id.
struct Sample {
  std::vector<double> features;
  int class_id = 0;
  int domain_id = 0;
  bool truth_visible = true;
};

struct DomainDataset {
  std::vector<Sample> samples;
  int num_classes = 0;
  int num_domains = 0;
  std::size_t input_dim = 0;
  // Known coordinate roles; empty for external data.
  std::vector<std::size_t> signal_dims;
  std::vector<std::size_t> noise_dims;

  bool has_roles() const noexcept { return !signal_dims.empty() && !noise_dims.empty(); }
};

struct SyntheticParams {
  int num_classes = 7;
  int num_domains = 4;
  std::size_t signal_dim = 16;
  std::size_t noise_dim = 16;
  std::size_t samples_per_class_per_domain = 150;
  double class_sep = 3.0;
  double domain_shift = 6.0;
  // Per-domain extra spread on noise coordinates, relative to domain_shift.
  double domain_jitter = 0.1;
  std::uint64_t seed = 0;
};

/// Class c sits at mean mu_c on the signal coordinates; domain d adds a bias
/// b_d (norm domain_shift) and a domain-specific extra spread on the noise
/// coordinates. Every coordinate carries unit Gaussian noise.
inline DomainDataset generate_synthetic(const SyntheticParams& p) {
  if (p.num_classes < 1 || p.num_domains < 1 || p.signal_dim < 1 || p.noise_dim < 1 ||
      p.samples_per_class_per_domain < 1) {
    throw ParameterError("generate_synthetic: all counts must be >= 1");
  }
  if (!(p.class_sep > 0.0) || p.domain_shift < 0.0 || p.domain_jitter < 0.0) {
    throw ParameterError("generate_synthetic: class_sep must be > 0 and domain_shift >= 0");
  }

  Rng rng(derive_seed(p.seed, {0x5d17}));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Class means by rejection: every pair at least class_sep apart.
  const double mean_scale = p.class_sep / std::sqrt(static_cast<double>(p.signal_dim));
  std::vector<std::vector<double>> means;
  std::size_t attempts = 0;
  while (means.size() < static_cast<std::size_t>(p.num_classes)) {
    if (++attempts > 10000) {
      throw SeparationInfeasibleError("generate_synthetic: could not place class means " +
                                      std::to_string(p.class_sep) + " apart");
    }
    std::vector<double> mu(p.signal_dim);
    for (auto& v : mu) v = mean_scale * normal(rng);
    bool ok = true;
    for (const auto& other : means) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < mu.size(); ++k) d2 += (mu[k] - other[k]) * (mu[k] - other[k]);
      if (std::sqrt(d2) < p.class_sep) {
        ok = false;
        break;
      }
    }
    if (ok) means.push_back(std::move(mu));
  }

  std::vector<std::vector<double>> bias(p.num_domains, std::vector<double>(p.noise_dim));
  std::vector<std::vector<double>> jitter(p.num_domains, std::vector<double>(p.noise_dim));
  for (int d = 0; d < p.num_domains; ++d) {
    double norm = 0.0;
    for (auto& v : bias[d]) {
      v = normal(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : bias[d]) v *= p.domain_shift / norm;
    for (auto& v : jitter[d]) v = p.domain_jitter * p.domain_shift * unit(rng);
  }

  DomainDataset ds;
  ds.num_classes = p.num_classes;
  ds.num_domains = p.num_domains;
  ds.input_dim = p.signal_dim + p.noise_dim;
  for (std::size_t k = 0; k < p.signal_dim; ++k) ds.signal_dims.push_back(k);
  for (std::size_t k = 0; k < p.noise_dim; ++k) ds.noise_dims.push_back(p.signal_dim + k);
  ds.samples.reserve(static_cast<std::size_t>(p.num_domains * p.num_classes) * p.samples_per_class_per_domain);

  for (int d = 0; d < p.num_domains; ++d) {
    for (int c = 0; c < p.num_classes; ++c) {
      for (std::size_t i = 0; i < p.samples_per_class_per_domain; ++i) {
        Sample s;
        s.class_id = c;
        s.domain_id = d;
        s.features.resize(ds.input_dim);
        for (std::size_t k = 0; k < p.signal_dim; ++k) s.features[k] = means[c][k] + normal(rng);
        for (std::size_t k = 0; k < p.noise_dim; ++k)
          s.features[p.signal_dim + k] = bias[d][k] + normal(rng) + jitter[d][k] * normal(rng);
        ds.samples.push_back(std::move(s));
      }
    }
  }
  return ds;
}

/// Stacks sample features into a rows x input_dim matrix.
template <class SampleRange, class Proj>
Array2 stack_features(const SampleRange& range, Proj proj, std::size_t input_dim) {
  std::vector<double> data;
  std::size_t n = 0;
  for (const auto& item : range) {
    const std::vector<double>& f = proj(item);
    if (f.size() != input_dim) throw DimensionError("stack_features: feature length mismatch");
    data.insert(data.end(), f.begin(), f.end());
    ++n;
  }
  return Array2(n, input_dim, std::move(data));
}

inline Array2 stack_features(const std::vector<Sample>& samples, std::size_t input_dim) {
  return stack_features(samples, [](const Sample& s) -> const std::vector<double>& { return s.features; }, input_dim);
}

}  // namespace modfeat

#endif  // MODFEAT_DATA_DATASET_HPP
