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

#ifndef MODFEAT_NUMERICS_RANDOM_HPP
#define MODFEAT_NUMERICS_RANDOM_HPP

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <random>
#include <vector>

#include "modfeat/errors.hpp"
#include "modfeat/numerics/array2.hpp"

namespace modfeat {

using Rng = std::mt19937_64;

/// splitmix64 finaliser; mixes a stream key into a well-spread seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derive an independent stream seed from a root seed and a tuple of indices.
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t s = mix_seed(root);
  for (auto k : keys) s = mix_seed(s ^ mix_seed(k + 0x632be59bd9b4e019ULL));
  return s;
}

inline void check_dropout_p(double p) {
  if (!(p >= 0.0 && p < 1.0)) throw ParameterError("dropout probability must be in [0,1)");
}

/// Inverted-dropout mask: entries are 0 (dropped) or 1/(1-p).
inline Array2 make_dropout_mask(std::size_t rows, std::size_t cols, double p, Rng& rng) {
  check_dropout_p(p);
  Array2 mask(rows, cols, 1.0 / (1.0 - p));
  if (p == 0.0) return mask;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : mask.data())
    if (u(rng) < p) v = 0.0;
  return mask;
}

/// Supplies dropout masks to forward passes. Either draws them fresh from a
/// generator (recording each one), or replays a previously recorded list so a
/// stochastic graph can be rebuilt exactly.
class MaskSource {
 public:
  explicit MaskSource(Rng& rng) : rng_(&rng) {}
  static MaskSource replay(std::vector<Array2> masks) {
    MaskSource s;
    s.recorded_ = std::move(masks);
    return s;
  }

  Array2 next(std::size_t rows, std::size_t cols, double p) {
    if (rng_ != nullptr) {
      recorded_.push_back(make_dropout_mask(rows, cols, p, *rng_));
      return recorded_.back();
    }
    if (cursor_ >= recorded_.size()) throw DeterminismError("mask replay exhausted");
    const Array2& m = recorded_[cursor_++];
    if (m.rows() != rows || m.cols() != cols) throw DeterminismError("mask replay shape mismatch");
    return m;
  }

  const std::vector<Array2>& recorded() const noexcept { return recorded_; }

 private:
  MaskSource() = default;
  Rng* rng_ = nullptr;
  std::vector<Array2> recorded_;
  std::size_t cursor_ = 0;
};

}  // namespace modfeat

#endif  // MODFEAT_NUMERICS_RANDOM_HPP
