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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "modfeat/modfeat.hpp"

namespace fs = std::filesystem;
using namespace modfeat;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << ": " << what << " [" << detail << "]" << std::endl;
  if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

Array2 random_array(std::size_t r, std::size_t c, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Array2 a(r, c);
  for (auto& v : a.data()) v = n(rng);
  return a;
}

void gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  MiniatureProblem p = make_miniature_problem(0, Method::fm);
  const auto r = check_total_loss_gradient(p, 1e-5, 1e-4);
  const double secs = seconds_since(t0);
  report(1, r.passed && r.max_rel_error < 1e-4 && secs < 10.0 && !r.entries.empty(),
         "full-loss gradient check (C=2, F=4, frozen masks)",
         "max_rel_error=" + fmt(r.max_rel_error) + " over " + std::to_string(r.entries.size()) + " entries, " +
             fmt(secs) + "s");
}

void modulation_algebra() {
  Rng rng(2);
  const Array2 z = random_array(3, 5, rng);
  const Array2 sar = random_array(4, 5, rng);
  auto run = [&](double m) {
    Tape t(GradMode::disabled);
    return modulate(t.constant(z), sar, t.constant(Array2(4, 5, std::vector<double>(20, m)))).value();
  };
  const Array2 ones = run(1.0), zeros = run(0.0), half = run(0.5);
  bool ok = true;
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t c = 0; c < 4; ++c) {
      for (std::size_t f = 0; f < 5; ++f) {
        const std::size_t row = b * 4 + c;
        ok = ok && ones(row, f) == z(b, f) && zeros(row, f) == sar(c, f) && half(row, f) == (z(b, f) + sar(c, f)) / 2.0;
      }
    }
  }
  report(2, ok, "modulation identities M=1, M=0, M=0.5", "bit-exact over 3 samples x 4 classes x 5 features");
}

void sar_limits() {
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.5, 3.0);
  Array2 ortho(4, 6);
  for (std::size_t c = 0; c < 4; ++c) ortho(c, c + 1) = (c % 2 ? -1.0 : 1.0) * u(rng);
  const Array2 r1 = compute_sar(ortho, compute_similarity(ortho));
  double err1 = 0.0;
  for (std::size_t i = 0; i < ortho.size(); ++i) err1 = std::max(err1, std::abs(r1[i] - ortho[i]));

  const Array2 one = random_array(1, 6, rng);
  Array2 same(4, 6);
  for (std::size_t c = 0; c < 4; ++c) std::copy(one.row(0).begin(), one.row(0).end(), same.row(c).begin());
  const Array2 r2 = compute_sar(same, compute_similarity(same));
  double err2 = 0.0;
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t f = 0; f < 6; ++f) err2 = std::max(err2, std::abs(r2(c, f) - one(0, f)));
  report(3, err1 <= 1e-12 && err2 <= 1e-12, "SAR limits for orthogonal and identical prototypes",
         "orthogonal max err=" + fmt(err1) + ", identical max err=" + fmt(err2));
}

void variance_init() {
  const Array2 hand = modulation_from_variance(Array2{{2.0, 0.0, 1.0}});
  bool ok = hand(0, 0) == 0.0 && hand(0, 1) == 1.0 && hand(0, 2) == 0.5;
  Rng rng(4);
  std::uniform_int_distribution<int> cls(0, 4);
  for (int trial = 0; trial < 100; ++trial) {
    const Array2 feats = random_array(60, 7, rng);
    std::vector<int> labels(60);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 5);
    std::shuffle(labels.begin(), labels.end(), rng);
    const Array2 v = class_variances(feats, labels, 5);
    const Array2 m = init_from_variance(feats, labels, 5).m.value;
    const auto vmax = std::max_element(v.data().begin(), v.data().end()) - v.data().begin();
    const auto vmin = std::min_element(v.data().begin(), v.data().end()) - v.data().begin();
    for (double x : m.data()) ok = ok && x >= 0.0 && x <= 1.0;
    ok = ok && m[static_cast<std::size_t>(vmax)] == 0.0 && m[static_cast<std::size_t>(vmin)] == 1.0;
  }
  report(4, ok, "variance initialisation range, extremes and hand case", "hand case plus 100 random inputs");
}

void loss_scaling() {
  bool ok = q_scale(1.0) == 1.0 || std::abs(q_scale(1.0) - 1.0) <= 1e-12;
  const double q0_err = std::abs(q_scale(0.0) - std::exp(-1.0));
  ok = ok && q0_err <= 1e-12;
  for (int i = 1; i <= 1000; ++i) ok = ok && q_scale(i / 1000.0) > q_scale((i - 1) / 1000.0);
  Rng rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  bool mono = true;
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t k75 = 0, k95 = 0;
    for (int i = 0; i < 100; ++i) {
      const double p = u(rng), s = 0.1 * u(rng);
      k75 += make_record(0, p, s, 0.75).keep;
      k95 += make_record(0, p, s, 0.95).keep;
    }
    mono = mono && k75 >= k95;
  }
  report(5, ok && mono, "loss scaling values, monotonicity and threshold ordering",
         "Q(0) err=" + fmt(q0_err) + ", 200 record sets");
}

// Straight-line forward pass and loss for a model with no hidden layer.
struct ToyWeights {
  double we[2][2], be[2], wc[2][2], bc[2], m[2][2], r[2][2];
};

void toy_logprobs(const ToyWeights& w, const double x[2], double out[2][2]) {
  double z[2];
  for (int f = 0; f < 2; ++f) z[f] = x[0] * w.we[0][f] + x[1] * w.we[1][f] + w.be[f];
  const double norm = std::sqrt(z[0] * z[0] + z[1] * z[1]);
  for (int f = 0; f < 2; ++f) z[f] = std::sqrt(2.0) * z[f] / norm;
  for (int j = 0; j < 2; ++j) {
    double zm[2], logit[2];
    for (int f = 0; f < 2; ++f) zm[f] = w.m[j][f] * z[f] + (1.0 - w.m[j][f]) * w.r[j][f];
    for (int c = 0; c < 2; ++c) logit[c] = zm[0] * w.wc[0][c] + zm[1] * w.wc[1][c] + w.bc[c];
    const double mx = std::max(logit[0], logit[1]);
    const double lse = mx + std::log(std::exp(logit[0] - mx) + std::exp(logit[1] - mx));
    for (int c = 0; c < 2; ++c) out[j][c] = logit[c] - lse;
  }
}

double toy_diag(const double s[2][2]) {
  double acc = 0.0;
  for (int c = 0; c < 2; ++c) {
    const double mx = std::max(s[0][c], s[1][c]);
    acc += (s[c][c] - mx) * (s[c][c] - mx);
  }
  return acc / 2.0;
}

void oracle_equivalence() {
  const ToyWeights w{{{0.5, -0.3}, {0.2, 0.8}}, {0.1, -0.2}, {{1.0, -0.5}, {0.3, 0.7}}, {0.05, -0.05},
                     {{0.7, 0.2}, {0.4, 0.9}},  {{1.0, 0.5}, {-0.5, 1.2}}};
  const double xl[2][2] = {{1.0, 2.0}, {-1.0, 0.5}};
  const double xu[2][2] = {{0.3, -0.7}, {2.0, 1.0}};
  const int yl[2] = {0, 1};
  const double beta = 1.0, gamma = 0.5;

  ExtractorConfig cfg;
  cfg.input_dim = 2;
  cfg.hidden_dims = {};
  cfg.feature_dim = 2;
  Rng rng(0);
  Model model = Model::init(cfg, 2, rng);
  model.extractor.layers()[0].weight.value = Array2{{0.5, -0.3}, {0.2, 0.8}};
  model.extractor.layers()[0].bias.value = Array2{{0.1, -0.2}};
  model.classifier.weight().value = Array2{{1.0, -0.5}, {0.3, 0.7}};
  model.classifier.bias().value = Array2{{0.05, -0.05}};
  model.modulator.m.value = Array2{{0.7, 0.2}, {0.4, 0.9}};
  SarBank bank;
  bank.sar = Array2{{1.0, 0.5}, {-0.5, 1.2}};
  bank.prototypes = bank.sar;
  bank.similarity = Array2{{1.0, 0.0}, {0.0, 1.0}};

  LossBatch batch;
  batch.labeled_x = Array2{{1.0, 2.0}, {-1.0, 0.5}};
  batch.labels = {0, 1};
  batch.unlabeled_x = Array2{{0.3, -0.7}, {2.0, 1.0}};
  batch.records = {make_record(1, 0.9, 0.05, 0.75), make_record(0, 0.8, 0.01, 0.75)};
  LossConfig lc;
  lc.beta = beta;
  lc.gamma = gamma;
  lc.mode = ForwardMode::eval;
  Tape t;
  const double engine = total_loss(t, model, &bank, batch, lc, nullptr).values.total;

  double l_s = 0, l_d = 0, l_u = 0, l_ud = 0;
  for (int b = 0; b < 2; ++b) {
    double s[2][2];
    toy_logprobs(w, xl[b], s);
    l_s += -s[yl[b]][yl[b]] / 2.0;
    l_d += toy_diag(s) / 2.0;
  }
  const double q[2] = {std::exp(0.9 * 0.9 * 0.9 - 1.0), std::exp(0.8 * 0.8 * 0.8 - 1.0)};
  const int yu[2] = {1, 0};
  for (int b = 0; b < 2; ++b) {
    double s[2][2];
    toy_logprobs(w, xu[b], s);
    l_u += q[b] * -s[yu[b]][yu[b]] / 2.0;
    l_ud += q[b] * toy_diag(s) / 2.0;
  }
  const double oracle = l_s + l_u + beta * l_d + gamma * l_ud;
  const double err = std::abs(engine - oracle);
  report(6, err <= 1e-10 && batch.records[0].keep && batch.records[1].keep,
         "total loss against a straight-line recomputation",
         "engine=" + fmt(engine) + " oracle=" + fmt(oracle) + " |diff|=" + fmt(err));
}

struct BenchRuns {
  std::vector<SeedResult> fm, baseline;
  std::vector<std::vector<double>> fm_keep_curves;
  double seconds = 0.0;
};

BenchRuns benchmark(const fs::path& work) {
  BenchRuns out;
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig rc = resolve(RawConfig{});
  rc.output.checkpoint = false;
  const DomainDataset ds = rc.load_dataset();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (Method m : {Method::fm, Method::fixmatch_baseline}) {
      RunConfig r = rc;
      r.train.mode = m;
      const fs::path dir = work / (to_string(m) + "_seed" + std::to_string(seed));
      try {
        SeedRun run = run_seed(r, ds, seed, dir);
        std::cout << "  " << to_string(m) << " seed " << seed << ": target_acc=" << fmt(run.result.target_acc)
                  << " keep_rate=" << fmt(run.result.keep_rate)
                  << " pl_acc=" << (run.result.pl_acc ? fmt(*run.result.pl_acc) : std::string("-"))
                  << (run.result.modulator_gap ? " modulator_gap=" + fmt(*run.result.modulator_gap) : std::string())
                  << std::endl;
        if (m == Method::fm) {
          std::vector<double> curve;
          for (const auto& rep : run.train.reports) curve.push_back(rep.keep_rate);
          out.fm_keep_curves.push_back(curve);
          out.fm.push_back(run.result);
        } else {
          out.baseline.push_back(run.result);
        }
      } catch (const TrainingAborted& e) {
        std::cout << "  " << to_string(m) << " seed " << seed << ": aborted: " << e.what() << std::endl;
      }
    }
  }
  out.seconds = seconds_since(t0);
  return out;
}

void determinism(const fs::path& work) {
  RunConfig rc = resolve(RawConfig{});
  rc.output.checkpoint = true;
  const DomainDataset ds = rc.load_dataset();
  bool ok = true;
  try {
    run_seed(rc, ds, 0, work / "det_a");
    run_seed(rc, ds, 0, work / "det_b");
    for (const char* f : {"metrics.csv", "final.ckpt"}) {
      const std::string a = slurp(work / "det_a" / f), b = slurp(work / "det_b" / f);
      ok = ok && !a.empty() && a == b;
    }
  } catch (const TrainingAborted&) {
    ok = false;
  }
  report(7, ok, "identical config and seed give identical outputs", "metrics.csv and final.ckpt compared byte by byte");
}

void direction_of_effect(const BenchRuns& runs) {
  const bool complete = runs.fm.size() == 5 && runs.baseline.size() == 5;
  std::string detail = "fm runs " + std::to_string(runs.fm.size()) + "/5, baseline runs " +
                       std::to_string(runs.baseline.size()) + "/5";
  bool ok = complete;
  if (complete) {
    const RunSummary fm = aggregate(runs.fm), base = aggregate(runs.baseline);
    const double gain = fm.target_acc.mean - base.target_acc.mean;
    const bool a = fm.target_acc.mean >= base.target_acc.mean - 0.01 && gain > 0.0;
    const bool b = fm.keep_rate.mean > base.keep_rate.mean;
    const bool c = fm.modulator_gap.n == 5 && fm.modulator_gap.mean > 0.0;
    const bool time_ok = runs.seconds < 600.0;
    ok = a && b && c && time_ok;
    detail = "(a) acc fm=" + fmt(fm.target_acc.mean) + " baseline=" + fmt(base.target_acc.mean) +
             " gain=" + fmt(gain) + (a ? " ok" : " fails") + "; (b) keep fm=" + fmt(fm.keep_rate.mean) +
             " baseline=" + fmt(base.keep_rate.mean) + (b ? " ok" : " fails") +
             "; (c) modulator_gap=" + fmt(fm.modulator_gap.mean) + (c ? " ok" : " fails") + "; " +
             fmt(runs.seconds) + "s for 10 runs";
  }
  report(8, ok, "fm versus baseline on the default synthetic benchmark", detail);
}

void keep_curve_shape(const BenchRuns& runs) {
  bool ok = runs.fm_keep_curves.size() == 5;
  double mean_rho = 0.0;
  for (const auto& curve : runs.fm_keep_curves) {
    if (curve.size() < 10) {
      ok = false;
      continue;
    }
    std::vector<double> first(curve.begin(), curve.begin() + 10), idx(10);
    for (std::size_t i = 0; i < 10; ++i) idx[i] = static_cast<double>(i + 1);
    mean_rho += spearman(first, idx) / 5.0;
  }
  report(9, ok && mean_rho > 0.8, "fm keep rate rises over the first 10 epochs",
         "mean Spearman rho=" + fmt(mean_rho) + " over " + std::to_string(runs.fm_keep_curves.size()) + " seeds");
}

void mc_sanity() {
  RunConfig rc = resolve(RawConfig{});
  const DomainDataset ds = rc.load_dataset();
  const SplitResult sp = split(ds, rc.plan_for(0, ds.num_domains));
  const auto labeled = sp.labeled();
  std::vector<int> y;
  for (const auto& s : labeled) y.push_back(s.class_id);
  const Array2 lx = stack_features(labeled, ds.input_dim);
  const auto unlabeled = sp.unlabeled();
  const Augmenter aug = Augmenter::fit(unlabeled);
  Rng arng(10);
  Array2 ux(unlabeled.size(), ds.input_dim);
  for (std::size_t i = 0; i < unlabeled.size(); ++i) {
    const auto v = aug.weak(unlabeled[i].features, arng);
    std::copy(v.begin(), v.end(), ux.row(i).begin());
  }
  auto sigmas = [&](double p) {
    ExtractorConfig cfg;
    cfg.input_dim = ds.input_dim;
    cfg.dropout_p = p;
    Rng rng(11);
    Model model = Model::init(cfg, static_cast<std::size_t>(ds.num_classes), rng);
    model.modulator = init_from_variance(model.extractor.extract(lx), y, model.num_classes());
    const SarBank bank = build_sar_bank(model.extractor.extract(lx), y, model.num_classes());
    Rng mc(12);
    return pseudo_label_batch(model, bank, ux, 5, 0.75, mc);
  };
  bool zero = true;
  for (const auto& r : sigmas(0.0)) zero = zero && r.sigma == 0.0;
  double mean = 0.0;
  const auto recs = sigmas(0.05);
  for (const auto& r : recs) mean += r.sigma / static_cast<double>(recs.size());
  report(10, zero && mean > 0.0, "MC dropout spread on an untrained model",
         std::string("dropout 0: sigma ") + (zero ? "all zero" : "not all zero") + "; dropout 0.05: mean sigma=" +
             fmt(mean) + " over " + std::to_string(recs.size()) + " samples");
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "modfeat_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  gradient_correctness();
  modulation_algebra();
  sar_limits();
  variance_init();
  loss_scaling();
  oracle_equivalence();
  determinism(work);
  std::cout << "benchmark: 5 seeds x {fm, fixmatch-baseline} with default settings" << std::endl;
  const BenchRuns runs = benchmark(work);
  direction_of_effect(runs);
  keep_curve_shape(runs);
  mc_sanity();

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criterion(s) failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
