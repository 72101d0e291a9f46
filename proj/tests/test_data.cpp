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

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "catch_amalgamated.hpp"

#include "modfeat/data/augment.hpp"
#include "modfeat/data/batches.hpp"
#include "modfeat/data/csv.hpp"
#include "modfeat/data/dataset.hpp"
#include "modfeat/data/split.hpp"

using namespace modfeat;

namespace {

SyntheticParams small_params() {
  SyntheticParams p;
  p.num_classes = 3;
  p.num_domains = 4;
  p.signal_dim = 4;
  p.noise_dim = 4;
  p.samples_per_class_per_domain = 20;
  p.seed = 5;
  return p;
}

std::vector<double> noise_mean(const DomainDataset& ds, int domain) {
  std::vector<double> m(ds.noise_dims.size(), 0.0);
  double n = 0;
  for (const auto& s : ds.samples) {
    if (s.domain_id != domain) continue;
    for (std::size_t k = 0; k < m.size(); ++k) m[k] += s.features[ds.noise_dims[k]];
    ++n;
  }
  for (auto& v : m) v /= n;
  return m;
}

}  // namespace

TEST_CASE("synthetic dataset shape and roles") {
  SyntheticParams p;
  p.num_classes = 3;
  p.num_domains = 4;
  p.samples_per_class_per_domain = 100;
  const DomainDataset ds = generate_synthetic(p);
  CHECK(ds.samples.size() == 1200);
  CHECK(ds.input_dim == 32);
  CHECK(ds.has_roles());

  std::set<std::size_t> sig(ds.signal_dims.begin(), ds.signal_dims.end());
  std::set<std::size_t> all = sig;
  for (auto k : ds.noise_dims) {
    CHECK(sig.count(k) == 0);
    all.insert(k);
  }
  CHECK(all.size() == ds.input_dim);
  CHECK(*all.rbegin() == ds.input_dim - 1);

  // Labels are uniform within every domain.
  std::map<std::pair<int, int>, int> cells;
  for (const auto& s : ds.samples) ++cells[{s.domain_id, s.class_id}];
  CHECK(cells.size() == 12);
  for (const auto& [k, n] : cells) CHECK(n == 100);
}

TEST_CASE("synthetic generation is deterministic in the seed") {
  const auto a = generate_synthetic(small_params());
  const auto b = generate_synthetic(small_params());
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) REQUIRE(a.samples[i].features == b.samples[i].features);
  auto q = small_params();
  q.seed = 6;
  CHECK(generate_synthetic(q).samples[0].features != a.samples[0].features);
}

TEST_CASE("zero domain shift gives identically distributed domains") {
  SyntheticParams p;
  p.domain_shift = 0.0;
  p.samples_per_class_per_domain = 200;
  const DomainDataset ds = generate_synthetic(p);
  const auto m0 = noise_mean(ds, 0);
  const auto m1 = noise_mean(ds, 1);
  // Each coordinate is N(0,1); the difference of two means over n = 1400 has
  // std sqrt(2/n) ~ 0.038. Allow 5 standard errors.
  const double se = std::sqrt(2.0 / 1400.0);
  for (std::size_t k = 0; k < m0.size(); ++k) CHECK(std::abs(m0[k] - m1[k]) < 5 * se);

  // With the default shift the domain means are far apart.
  const DomainDataset shifted = generate_synthetic(SyntheticParams{});
  const auto s0 = noise_mean(shifted, 0);
  const auto s1 = noise_mean(shifted, 1);
  double d2 = 0;
  for (std::size_t k = 0; k < s0.size(); ++k) d2 += (s0[k] - s1[k]) * (s0[k] - s1[k]);
  CHECK(std::sqrt(d2) > 1.0);
}

TEST_CASE("well separated classes are nearest-mean separable on signal dims") {
  SyntheticParams p;
  p.class_sep = 10.0;
  p.samples_per_class_per_domain = 100;
  const DomainDataset ds = generate_synthetic(p);
  // Means from domains 0-1, accuracy on domains 2-3.
  std::vector<std::vector<double>> mean(p.num_classes, std::vector<double>(p.signal_dim, 0.0));
  std::vector<double> count(p.num_classes, 0.0);
  for (const auto& s : ds.samples) {
    if (s.domain_id >= 2) continue;
    for (std::size_t k = 0; k < p.signal_dim; ++k) mean[s.class_id][k] += s.features[ds.signal_dims[k]];
    count[s.class_id] += 1;
  }
  for (int c = 0; c < p.num_classes; ++c)
    for (auto& v : mean[c]) v /= count[c];
  double correct = 0, total = 0;
  for (const auto& s : ds.samples) {
    if (s.domain_id < 2) continue;
    int best = 0;
    double best_d = 1e300;
    for (int c = 0; c < p.num_classes; ++c) {
      double d = 0;
      for (std::size_t k = 0; k < p.signal_dim; ++k) {
        const double e = s.features[ds.signal_dims[k]] - mean[c][k];
        d += e * e;
      }
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    correct += best == s.class_id;
    total += 1;
  }
  CHECK(correct / total > 0.99);
}

TEST_CASE("synthetic parameter errors") {
  auto p = small_params();
  p.num_classes = 0;
  CHECK_THROWS_AS(generate_synthetic(p), ParameterError);
  p = small_params();
  p.class_sep = 0.0;
  CHECK_THROWS_AS(generate_synthetic(p), ParameterError);
  p = small_params();
  p.domain_shift = -1.0;
  CHECK_THROWS_AS(generate_synthetic(p), ParameterError);
  p = small_params();
  p.num_classes = 50;
  p.signal_dim = 1;
  CHECK_THROWS_AS(generate_synthetic(p), SeparationInfeasibleError);
}

TEST_CASE("csv loading") {
  std::istringstream ok("domain_id,class_id,f0,f1\n0,1,0.5,-2\n1,0,3,4e-3\n2,2,1,1\n");
  const DomainDataset ds = load_csv(ok);
  CHECK(ds.samples.size() == 3);
  CHECK(ds.input_dim == 2);
  CHECK(ds.num_classes == 3);
  CHECK(ds.num_domains == 3);
  CHECK(ds.samples[1].features == std::vector<double>{3.0, 4e-3});
  CHECK_FALSE(ds.has_roles());

  std::istringstream bad("domain_id,class_id,f0\n0,0,1\n0,1,abc\n");
  try {
    load_csv(bad);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  std::istringstream empty("");
  CHECK_THROWS_AS(load_csv(empty), SchemaError);
  std::istringstream header_only("domain_id,class_id,f0\n");
  CHECK_THROWS_AS(load_csv(header_only), SchemaError);
  std::istringstream ragged("domain_id,class_id,f0,f1\n0,0,1,2\n0,0,1\n");
  CHECK_THROWS_AS(load_csv(ragged), SchemaError);
  std::istringstream wrong_header("class_id,domain_id,f0\n0,0,1\n");
  CHECK_THROWS_AS(load_csv(wrong_header), SchemaError);
  std::istringstream dims("domain_id,class_id,f0\n0,0,1\n");
  CHECK_THROWS_AS(load_csv(dims, CsvSchema{5}), SchemaError);
  std::istringstream nan_cell("domain_id,class_id,f0\n0,0,nan\n");
  CHECK_THROWS_AS(load_csv(nan_cell), ParseError);
}

TEST_CASE("csv round trip is bit exact") {
  const DomainDataset ds = generate_synthetic(small_params());
  std::stringstream buf;
  save_csv(buf, ds);
  const DomainDataset back = load_csv(buf);
  REQUIRE(back.samples.size() == ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    REQUIRE(back.samples[i].features == ds.samples[i].features);
    REQUIRE(back.samples[i].class_id == ds.samples[i].class_id);
    REQUIRE(back.samples[i].domain_id == ds.samples[i].domain_id);
  }
}

TEST_CASE("leave-one-domain-out split") {
  auto p = small_params();
  p.num_classes = 7;
  const DomainDataset ds = generate_synthetic(p);
  const SplitResult sp = split(ds, SplitPlan{2, 5, 1});
  CHECK(sp.sources.size() == 3);
  CHECK(sp.labeled().size() == 105);
  CHECK(sp.unlabeled_count() == 3 * 7 * 20);
  CHECK(sp.target_test.size() == 7 * 20);

  for (const auto& s : sp.target_test) CHECK(s.domain_id == 2);
  for (const auto& s : sp.labeled()) {
    CHECK(s.domain_id != 2);
    CHECK(s.truth_visible);
  }
  for (const auto& s : sp.unlabeled()) {
    CHECK(s.domain_id != 2);
    CHECK_FALSE(s.truth_visible);
  }

  // Every labeled sample also sits in its domain's unlabeled pool.
  for (const auto& pool : sp.sources) {
    std::map<std::pair<int, int>, int> per_cell;
    for (const auto& s : pool.labeled) {
      ++per_cell[{s.domain_id, s.class_id}];
      const bool found = std::any_of(pool.unlabeled.begin(), pool.unlabeled.end(),
                                     [&](const Sample& u) { return u.features == s.features; });
      CHECK(found);
    }
    CHECK(per_cell.size() == 7);
    for (const auto& [k, n] : per_cell) CHECK(n == 5);
  }

  CHECK_THROWS_AS(split(ds, SplitPlan{4, 5, 1}), SplitError);
  CHECK_THROWS_AS(split(ds, SplitPlan{0, 21, 1}), SplitError);
}

TEST_CASE("augmentations") {
  const DomainDataset ds = generate_synthetic(small_params());
  Rng rng(3);

  AugmentConfig off;
  off.weak_sigma = 0.0;
  const Augmenter id = Augmenter::fit(ds.samples, off);
  const auto& x = ds.samples[7].features;
  CHECK(id.weak(x, rng) == x);

  AugmentConfig wide;
  wide.mask_fraction = 0.15;
  SyntheticParams q = small_params();
  q.signal_dim = 16;
  q.noise_dim = 16;
  const DomainDataset big = generate_synthetic(q);
  const Augmenter aug = Augmenter::fit(big.samples, wide);
  CHECK(aug.masked_count(32) == 4);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = aug.strong(big.samples[trial].features, rng);
    REQUIRE(std::count(s.begin(), s.end(), 0.0) == 4);
  }

  // Monte Carlo mean of the weak view is unbiased, within 3 standard errors.
  const Augmenter weak = Augmenter::fit(ds.samples);
  const int n = 10000;
  std::vector<double> mean(x.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    const auto v = weak.weak(x, rng);
    for (std::size_t k = 0; k < x.size(); ++k) mean[k] += v[k] / n;
  }
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double se = 0.05 * weak.dim_std()[k] / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(mean[k] - x[k]) < 3 * se);
  }

  // Strong views are noisier than weak ones on unmasked coordinates.
  double dw = 0, ds2 = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto w = weak.weak(x, rng);
    const auto s = weak.strong(x, rng);
    for (std::size_t k = 0; k < x.size(); ++k) {
      dw += (w[k] - x[k]) * (w[k] - x[k]);
      if (s[k] != 0.0) ds2 += (s[k] - x[k]) * (s[k] - x[k]);
    }
  }
  CHECK(ds2 > dw);
  CHECK_THROWS_AS(weak.weak({1.0}, rng), DimensionError);
}

TEST_CASE("batch iterator") {
  auto p = small_params();
  const DomainDataset ds = generate_synthetic(p);
  const SplitResult sp = split(ds, SplitPlan{0, 2, 4});
  BatchIterator it(sp, 16, 16, 11);
  // 3 sources x 60 unlabeled = 180 slots; 48 per batch.
  CHECK(it.batches_per_epoch() == 4);

  const Batch b = it.next();
  CHECK(b.labeled.size() == 48);
  CHECK(b.unlabeled.size() == 48);
  for (std::size_t d = 0; d < 3; ++d) {
    for (std::size_t i = 0; i < 16; ++i) {
      const Sample* s = b.unlabeled[d * 16 + i].sample;
      CHECK(s >= sp.sources[d].unlabeled.data());
      CHECK(s < sp.sources[d].unlabeled.data() + sp.sources[d].unlabeled.size());
    }
  }

  BatchIterator a(sp, 4, 8, 99), c(sp, 4, 8, 99);
  for (int e = 0; e < 2; ++e) {
    a.start_epoch(e);
    c.start_epoch(e);
    for (std::size_t k = 0; k < a.batches_per_epoch(); ++k) {
      const Batch x = a.next(), y = c.next();
      for (std::size_t i = 0; i < x.unlabeled.size(); ++i) REQUIRE(x.unlabeled[i].index == y.unlabeled[i].index);
      for (std::size_t i = 0; i < x.labeled.size(); ++i) REQUIRE(x.labeled[i].index == y.labeled[i].index);
    }
  }

  // Every unlabeled sample is visited within two epochs.
  std::set<std::size_t> seen;
  BatchIterator cover(sp, 16, 16, 5);
  for (int e = 0; e < 2; ++e) {
    cover.start_epoch(e);
    for (std::size_t k = 0; k < cover.batches_per_epoch(); ++k)
      for (const auto& item : cover.next().unlabeled) seen.insert(item.index);
  }
  CHECK(seen.size() == sp.unlabeled_count());

  CHECK_THROWS_AS(BatchIterator(sp, 0, 16, 1), ParameterError);
}
