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

#ifndef MODFEAT_DATA_SPLIT_HPP
#define MODFEAT_DATA_SPLIT_HPP

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "modfeat/data/dataset.hpp"

namespace modfeat {

struct SplitPlan {
  int target_domain = 0;
  std::size_t labels_per_class = 10;
  std::uint64_t seed = 0;
};

/// Samples from one source domain. The unlabeled pool holds every sample of
/// the domain (labeled ones included) with truth_visible cleared.
struct SourcePool {
  std::vector<Sample> labeled;
  std::vector<Sample> unlabeled;
};

struct SplitResult {
  std::vector<SourcePool> sources;
  std::vector<Sample> target_test;
  int num_classes = 0;
  std::size_t input_dim = 0;

  std::vector<Sample> labeled() const {
    std::vector<Sample> out;
    for (const auto& p : sources) out.insert(out.end(), p.labeled.begin(), p.labeled.end());
    return out;
  }
  std::vector<Sample> unlabeled() const {
    std::vector<Sample> out;
    for (const auto& p : sources) out.insert(out.end(), p.unlabeled.begin(), p.unlabeled.end());
    return out;
  }
  std::size_t unlabeled_count() const {
    std::size_t n = 0;
    for (const auto& p : sources) n += p.unlabeled.size();
    return n;
  }
};

/// Leave-one-domain-out split with n labels per (source domain, class).
inline SplitResult split(const DomainDataset& ds, const SplitPlan& plan) {
  if (plan.target_domain < 0 || plan.target_domain >= ds.num_domains) {
    throw SplitError("split: target domain " + std::to_string(plan.target_domain) + " out of range");
  }
  if (ds.num_domains < 2) throw SplitError("split: need at least one source domain besides the target");
  if (plan.labels_per_class < 1) throw SplitError("split: labels_per_class must be >= 1");

  SplitResult out;
  out.num_classes = ds.num_classes;
  out.input_dim = ds.input_dim;

  // by_cell[d][c] = indices of samples in (domain d, class c).
  std::vector<std::vector<std::vector<std::size_t>>> by_cell(
      ds.num_domains, std::vector<std::vector<std::size_t>>(ds.num_classes));
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& s = ds.samples[i];
    if (s.domain_id == plan.target_domain) {
      out.target_test.push_back(s);
      out.target_test.back().truth_visible = false;
    } else {
      by_cell[s.domain_id][s.class_id].push_back(i);
    }
  }

  Rng rng(derive_seed(plan.seed, {0x5b11}));
  for (int d = 0; d < ds.num_domains; ++d) {
    if (d == plan.target_domain) continue;
    SourcePool pool;
    for (int c = 0; c < ds.num_classes; ++c) {
      auto idx = by_cell[d][c];
      if (idx.size() < plan.labels_per_class) {
        throw SplitError("split: domain " + std::to_string(d) + " class " + std::to_string(c) + " has " +
                         std::to_string(idx.size()) + " samples, need " + std::to_string(plan.labels_per_class));
      }
      std::shuffle(idx.begin(), idx.end(), rng);
      for (std::size_t k = 0; k < plan.labels_per_class; ++k) {
        Sample s = ds.samples[idx[k]];
        s.truth_visible = true;
        pool.labeled.push_back(std::move(s));
      }
    }
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
      if (ds.samples[i].domain_id != d) continue;
      Sample s = ds.samples[i];
      s.truth_visible = false;
      pool.unlabeled.push_back(std::move(s));
    }
    out.sources.push_back(std::move(pool));
  }
  return out;
}

}  // namespace modfeat

#endif  // MODFEAT_DATA_SPLIT_HPP
