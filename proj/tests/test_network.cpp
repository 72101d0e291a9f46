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

#include "catch_amalgamated.hpp"

#include "modfeat/model.hpp"
#include "modfeat/network.hpp"

using namespace modfeat;

namespace {

ExtractorConfig small_cfg(bool normalize = true) {
  ExtractorConfig c;
  c.input_dim = 5;
  c.hidden_dims = {6, 4};
  c.feature_dim = 3;
  c.dropout_p = 0.3;
  c.normalize_features = normalize;
  return c;
}

std::vector<double> rowv(const Array2& a, std::size_t r) {
  auto s = a.row(r);
  return {s.begin(), s.end()};
}

Array2 random_input(std::size_t rows, std::size_t cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Array2 x(rows, cols);
  for (auto& v : x.data()) v = n(rng);
  return x;
}

}  // namespace

TEST_CASE("extractor modes") {
  Rng rng(1);
  Extractor e = Extractor::init(small_cfg(), rng);
  const Array2 x = random_input(4, 5, rng);
  const Array2 a = e.extract(x);
  CHECK(a.rows() == 4);
  CHECK(a.cols() == 3);
  CHECK(e.extract(x) == a);

  Rng r1(10), r2(20);
  MaskSource m1(r1), m2(r2);
  Tape t(GradMode::disabled);
  const Array2 d1 = e.forward(t, t.constant(x), ForwardMode::mc, &m1).value();
  const Array2 d2 = e.forward(t, t.constant(x), ForwardMode::mc, &m2).value();
  CHECK_FALSE(d1 == d2);
  CHECK_THROWS_AS(e.forward(t, t.constant(x), ForwardMode::train, nullptr), ContractError);
  CHECK_THROWS_AS(e.extract(Array2(2, 4)), DimensionError);
}

TEST_CASE("extractor output rows have fixed norm when normalized") {
  Rng rng(2);
  Extractor e = Extractor::init(small_cfg(), rng);
  const Array2 z = e.extract(random_input(20, 5, rng));
  for (std::size_t r = 0; r < z.rows(); ++r) {
    double s = 0;
    for (double v : z.row(r)) s += v * v;
    // A row whose hidden units are all dead stays at zero.
    if (s == 0.0) continue;
    CHECK(std::abs(std::sqrt(s) - std::sqrt(3.0)) < 1e-12);
  }
}

TEST_CASE("zero-weight extractor outputs its final bias") {
  Rng rng(3);
  Extractor e = Extractor::init(small_cfg(false), rng);
  for (auto* p : e.parameters()) p->value = Array2(p->value.rows(), p->value.cols());
  e.layers().back().bias.value = Array2{{0.5, -1.0, 2.0}};
  const Array2 z = e.extract(random_input(3, 5, rng));
  for (std::size_t r = 0; r < 3; ++r) CHECK(rowv(z, r) == std::vector<double>{0.5, -1.0, 2.0});
}

TEST_CASE("classifier") {
  Rng rng(4);
  Classifier c(2, 2, rng);
  c.weight().value = Array2{{1.0, -1.0}, {2.0, 0.5}};
  c.bias().value = Array2{{0.1, 0.2}};
  Tape t;
  const Array2 out = c.classify_modulated(t, t.constant({{1.0, 2.0}, {-1.0, 0.0}})).value();
  // Row 0: [1*1 + 2*2 + 0.1, 1*-1 + 2*0.5 + 0.2]; row 1: [-1 + 0.1, 1 + 0.2].
  CHECK(out == Array2{{5.1, 0.2}, {-0.9, 1.2}});
  CHECK_THROWS_AS(c.classify_modulated(t, t.constant(Array2(3, 2))), DimensionError);
  CHECK_THROWS_AS(c.forward(t, t.constant(Array2(2, 3))), DimensionError);

  Classifier zero(3, 4, rng);
  zero.weight().value = Array2(3, 4);
  zero.bias().value = Array2(1, 4);
  const Array2 p = row_softmax(zero.forward(t, t.constant(random_input(2, 3, rng))).value());
  for (double v : p.data()) CHECK(v == 0.25);
}

TEST_CASE("classifier is linear without bias (property)") {
  Rng rng(5);
  Classifier c(4, 3, rng);
  c.bias().value = Array2(1, 3);
  for (int trial = 0; trial < 20; ++trial) {
    const Array2 z1 = random_input(3, 4, rng), z2 = random_input(3, 4, rng);
    const double a = 0.7, b = -1.3;
    Array2 mix(3, 4);
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * z1[i] + b * z2[i];
    Tape t;
    const Array2 lhs = c.forward(t, t.constant(mix)).value();
    const Array2 y1 = c.forward(t, t.constant(z1)).value();
    const Array2 y2 = c.forward(t, t.constant(z2)).value();
    for (std::size_t i = 0; i < lhs.size(); ++i) REQUIRE(std::abs(lhs[i] - (a * y1[i] + b * y2[i])) < 1e-12);
  }
}

TEST_CASE("identity modulation gives identical rows") {
  Rng rng(6);
  ExtractorConfig cfg = small_cfg();
  Model m = Model::init(cfg, 4, rng);
  SarBank bank;
  bank.sar = random_input(4, 3, rng);
  Tape t(GradMode::disabled);
  const Array2 logits = m.modulated_logits(t, t.constant(random_input(1, 5, rng)), bank, ForwardMode::eval, nullptr).value();
  REQUIRE(logits.rows() == 4);
  for (std::size_t r = 1; r < 4; ++r) CHECK(rowv(logits, r) == rowv(logits, 0));
}

TEST_CASE("method names") {
  CHECK(parse_method("fm") == Method::fm);
  CHECK(parse_method("fixmatch-baseline") == Method::fixmatch_baseline);
  CHECK(to_string(Method::fixmatch_baseline) == "fixmatch-baseline");
  CHECK_THROWS_AS(parse_method("mixmatch"), ConfigError);
}
