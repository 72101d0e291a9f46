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

#ifndef MODFEAT_DATA_BATCHES_HPP
#define MODFEAT_DATA_BATCHES_HPP

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "modfeat/data/split.hpp"

namespace modfeat {

struct BatchItem {
  const Sample* sample = nullptr;
  // Position in the concatenated unlabeled (or labeled) pools.
  std::size_t index = 0;
};

struct Batch {
  std::vector<BatchItem> labeled;
  std::vector<BatchItem> unlabeled;
};

/// Draws per_domain_labeled labeled and per_domain_unlabeled unlabeled samples
/// from every source pool for each batch. Pools are walked in a shuffled order
/// that is redrawn at each epoch start and whenever a pool is exhausted.
class BatchIterator {
 public:
  BatchIterator(const SplitResult& split, std::size_t per_domain_labeled, std::size_t per_domain_unlabeled,
                std::uint64_t seed)
      : split_(&split), per_l_(per_domain_labeled), per_u_(per_domain_unlabeled), seed_(seed) {
    if (per_l_ < 1 || per_u_ < 1) throw ParameterError("BatchIterator: per-domain counts must be >= 1");
    if (split.sources.empty()) throw ParameterError("BatchIterator: no source domains");
    std::size_t off_l = 0, off_u = 0;
    for (const auto& pool : split.sources) {
      if (pool.labeled.empty() || pool.unlabeled.empty()) throw ParameterError("BatchIterator: empty source pool");
      cursors_.push_back(Cursor{off_l, pool.labeled.size()});
      cursors_.push_back(Cursor{off_u, pool.unlabeled.size()});
      off_l += pool.labeled.size();
      off_u += pool.unlabeled.size();
    }
    start_epoch(0);
  }

  std::size_t batches_per_epoch() const {
    const std::size_t per_batch = split_->sources.size() * per_u_;
    return (split_->unlabeled_count() + per_batch - 1) / per_batch;
  }

  void start_epoch(std::size_t epoch) {
    rng_.seed(derive_seed(seed_, {0xba7c, epoch}));
    for (auto& c : cursors_) c.reshuffle(rng_);
  }

  Batch next() {
    Batch b;
    for (std::size_t d = 0; d < split_->sources.size(); ++d) {
      const SourcePool& pool = split_->sources[d];
      Cursor& cl = cursors_[2 * d];
      Cursor& cu = cursors_[2 * d + 1];
      for (std::size_t i = 0; i < per_l_; ++i) {
        const std::size_t k = cl.take(rng_);
        b.labeled.push_back(BatchItem{&pool.labeled[k], cl.offset + k});
      }
      for (std::size_t i = 0; i < per_u_; ++i) {
        const std::size_t k = cu.take(rng_);
        b.unlabeled.push_back(BatchItem{&pool.unlabeled[k], cu.offset + k});
      }
    }
    return b;
  }

 private:
  struct Cursor {
    std::size_t offset = 0;
    std::size_t size = 0;
    std::vector<std::size_t> order;
    std::size_t pos = 0;

    Cursor(std::size_t off, std::size_t n) : offset(off), size(n), order(n) {}
    void reshuffle(Rng& rng) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      pos = 0;
    }
    std::size_t take(Rng& rng) {
      if (pos == order.size()) reshuffle(rng);
      return order[pos++];
    }
  };

  const SplitResult* split_;
  std::size_t per_l_;
  std::size_t per_u_;
  std::uint64_t seed_;
  Rng rng_;
  std::vector<Cursor> cursors_;
};

}  // namespace modfeat

#endif  // MODFEAT_DATA_BATCHES_HPP
