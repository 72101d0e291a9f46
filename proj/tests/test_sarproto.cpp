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

#include <cmath>
#include <random>
#include <vector>

#include "catch_amalgamated.hpp"

#include "modfeat/numerics/random.hpp"
#include "modfeat/sarproto.hpp"

using namespace modfeat;

namespace {

Array2 random_array(std::size_t r, std::size_t c, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Array2 a(r, c);
  for (auto& v : a.data()) v = n(rng);
  return a;
}

double max_abs_diff(const Array2& a, const Array2& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("prototypes are class means") {
  const std::vector<int> labels{0, 0, 1};
  const Array2 f{{1, 0}, {3, 0}, {5, 7}};
  const Array2 p = compute_prototypes(f, labels, 2);
  CHECK(p == Array2{{2, 0}, {5, 7}});

  const std::vector<int> missing{0, 0, 0};
  try {
    compute_prototypes(f, missing, 2);
    FAIL("expected a missing-class error");
  } catch (const MissingClassError& e) {
    CHECK(e.class_id() == 1);
  }
  CHECK_THROWS_AS(compute_prototypes(f, std::vector<int>{0, 1}, 2), DimensionError);
}

TEST_CASE("prototypes match a streaming-mean oracle") {
  Rng rng(8);
  const std::size_t n = 500, c = 5, d = 6;
  const Array2 f = random_array(n, d, rng);
  std::vector<int> labels(n);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(c) - 1);
  for (std::size_t i = 0; i < c; ++i) labels[i] = static_cast<int>(i);
  for (std::size_t i = c; i < n; ++i) labels[i] = pick(rng);

  // Welford-style running mean, a different summation order from the
  // implementation's sum-then-divide.
  Array2 oracle(c, d);
  std::vector<double> seen(c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(labels[i]);
    seen[k] += 1.0;
    for (std::size_t j = 0; j < d; ++j) oracle(k, j) += (f(i, j) - oracle(k, j)) / seen[k];
  }
  CHECK(max_abs_diff(compute_prototypes(f, labels, c), oracle) < 1e-12);
}

TEST_CASE("similarity limits") {
  const Array2 same{{1, 2}, {1, 2}, {1, 2}};
  const Array2 s_same = compute_similarity(same);
  for (double v : s_same.data()) CHECK(std::abs(v - 1.0) < 1e-15);

  const Array2 ortho{{2, 0, 0}, {0, 3, 0}, {0, 0, 0.5}};
  CHECK(compute_similarity(ortho) == Array2{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});

  const Array2 anti{{1, 1}, {-1, -1}};
  CHECK(compute_similarity(anti) == Array2{{1, 0}, {0, 1}});

  CHECK_THROWS_AS(compute_similarity(Array2{{1, 0}, {0, 0}}), DegeneratePrototypeError);
}

TEST_CASE("similarity is symmetric with unit diagonal (property)") {
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const Array2 p = random_array(6, 4, rng);
    const Array2 s = compute_similarity(p);
    for (std::size_t i = 0; i < 6; ++i) {
      REQUIRE(s(i, i) == 1.0);
      for (std::size_t j = 0; j < 6; ++j) {
        REQUIRE(s(i, j) == s(j, i));
        REQUIRE(s(i, j) >= 0.0);
        REQUIRE(s(i, j) <= 1.0 + 1e-15);
      }
    }
  }
}

TEST_CASE("SAR limits") {
  const Array2 ortho{{2, 0, 0}, {0, 3, 0}, {0, 0, 0.5}};
  const Array2 r = compute_sar(ortho, compute_similarity(ortho));
  CHECK(max_abs_diff(r, ortho) < 1e-12);

  const Array2 same{{1, -2, 3}, {1, -2, 3}, {1, -2, 3}, {1, -2, 3}};
  const Array2 rs = compute_sar(same, compute_similarity(same));
  CHECK(max_abs_diff(rs, same) < 1e-12);

  const Array2 two{{1, 0}, {0, 4}};
  const Array2 r2 = compute_sar(two, Array2{{1, 1}, {1, 1}});
  CHECK(r2 == Array2{{0.5, 2}, {0.5, 2}});
}

TEST_CASE("SAR matches a hand-evaluated weighted mean") {
  // P = unit axes scaled by 1, 2, 4; Sim hand-set.
  const Array2 p{{1, 0, 0}, {0, 2, 0}, {0, 0, 4}};
  const Array2 sim{{1, 0.5, 0}, {0.5, 1, 0.25}, {0, 0.25, 1}};
  const Array2 r = compute_sar(p, sim);
  // R_0 = (P0 + 0.5 P1) / 1.5 = (2/3, 2/3, 0)
  // R_1 = (0.5 P0 + P1 + 0.25 P2) / 1.75 = (2/7, 8/7, 4/7)
  // R_2 = (0.25 P1 + P2) / 1.25 = (0, 0.4, 3.2)
  const Array2 hand{{2.0 / 3, 2.0 / 3, 0}, {2.0 / 7, 8.0 / 7, 4.0 / 7}, {0, 0.4, 3.2}};
  CHECK(max_abs_diff(r, hand) < 1e-15);
}

TEST_CASE("SAR lies in the prototype hull and is row-scale invariant (property)") {
  Rng rng(10);
  std::uniform_real_distribution<double> u(0.1, 5.0);
  for (int trial = 0; trial < 30; ++trial) {
    const Array2 p = random_array(5, 3, rng);
    const Array2 s = compute_similarity(p);
    const Array2 r = compute_sar(p, s);
    for (std::size_t k = 0; k < 3; ++k) {
      double lo = 1e300, hi = -1e300;
      for (std::size_t j = 0; j < 5; ++j) {
        lo = std::min(lo, p(j, k));
        hi = std::max(hi, p(j, k));
      }
      for (std::size_t c = 0; c < 5; ++c) {
        REQUIRE(r(c, k) >= lo - 1e-12);
        REQUIRE(r(c, k) <= hi + 1e-12);
      }
    }
    Array2 scaled = s;
    for (std::size_t c = 0; c < 5; ++c) {
      const double a = u(rng);
      for (std::size_t j = 0; j < 5; ++j) scaled(c, j) *= a;
    }
    REQUIRE(max_abs_diff(compute_sar(p, scaled), r) < 1e-12);
  }
}

TEST_CASE("SAR converges to prototypes as similarities vanish") {
  Rng rng(12);
  const Array2 p = random_array(4, 3, rng);
  double previous = 1e300;
  for (double eps : {0.5, 0.1, 0.01, 1e-4, 1e-8}) {
    Array2 sim(4, 4, eps);
    for (std::size_t i = 0; i < 4; ++i) sim(i, i) = 1.0;
    const double gap = max_abs_diff(compute_sar(p, sim), p);
    CHECK(gap < previous);
    previous = gap;
  }
  CHECK(previous < 1e-6);
}

TEST_CASE("bank assembly") {
  const Array2 f{{1, 0}, {3, 0}, {0, 2}, {0, 4}};
  const std::vector<int> labels{0, 0, 1, 1};
  const SarBank bank = build_sar_bank(f, labels, 2, 7);
  CHECK(bank.epoch == 7);
  CHECK(bank.prototypes == Array2{{2, 0}, {0, 3}});
  CHECK(bank.similarity == Array2{{1, 0}, {0, 1}});
  CHECK(bank.sar == bank.prototypes);
  CHECK_THROWS_AS(compute_sar(bank.prototypes, Array2(3, 3)), DimensionError);
}
