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

#ifndef MODFEAT_RUN_HPP
#define MODFEAT_RUN_HPP

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "modfeat/checkpoint.hpp"
#include "modfeat/config.hpp"
#include "modfeat/metrics.hpp"
#include "modfeat/trainer.hpp"

namespace modfeat {

namespace fs = std::filesystem;

inline std::string csv_number(double v) { return detail::format_double(v); }
inline std::string csv_number(const std::optional<double>& v) { return v ? detail::format_double(*v) : ""; }

inline void write_metrics_header(std::ostream& out) {
  out << "epoch,l_s,l_u,l_d,l_ud,total,keep_rate,pl_acc,target_acc,lr\n";
}

inline void write_metrics_row(std::ostream& out, const EpochReport& r) {
  out << r.epoch << ',' << csv_number(r.loss.l_s) << ',' << csv_number(r.loss.l_u) << ',' << csv_number(r.loss.l_d)
      << ',' << csv_number(r.loss.l_ud) << ',' << csv_number(r.loss.total) << ',' << csv_number(r.keep_rate) << ','
      << csv_number(r.pl_accuracy) << ',' << csv_number(r.target_accuracy) << ',' << csv_number(r.lr) << '\n';
}

inline void write_summary_csv(std::ostream& out, const RunSummary& s) {
  out << "metric,mean,std,n_seeds\n";
  auto row = [&](const char* name, const MetricStat& m) {
    if (m.n == 0) {
      out << name << ",,," << 0 << '\n';
    } else {
      out << name << ',' << csv_number(m.mean) << ',' << csv_number(m.std) << ',' << m.n << '\n';
    }
  };
  row("target_acc", s.target_acc);
  row("keep_rate", s.keep_rate);
  row("pl_acc", s.pl_acc);
  row("modulator_gap", s.modulator_gap);
}

inline void write_seed_results_csv(std::ostream& out, const std::vector<SeedResult>& runs) {
  out << "seed,target_acc,keep_rate,pl_acc,modulator_gap\n";
  for (const auto& r : runs) {
    out << r.seed << ',' << csv_number(r.target_acc) << ',' << csv_number(r.keep_rate) << ','
        << csv_number(r.pl_acc) << ',' << csv_number(r.modulator_gap) << '\n';
  }
}

inline SeedResult read_seed_result_row(const std::string& line) {
  const auto cells = detail::split_commas(line);
  if (cells.size() != 5) throw SchemaError("seed result: expected 5 columns");
  SeedResult r;
  auto opt = [](std::string_view t) -> std::optional<double> {
    double v = 0.0;
    if (t.empty()) return std::nullopt;
    if (!detail::parse_number(t, v)) throw SchemaError("seed result: bad number");
    return v;
  };
  if (!detail::parse_number(cells[0], r.seed)) throw SchemaError("seed result: bad seed");
  r.target_acc = opt(cells[1]).value_or(0.0);
  r.keep_rate = opt(cells[2]).value_or(0.0);
  r.pl_acc = opt(cells[3]);
  r.modulator_gap = opt(cells[4]);
  return r;
}

inline void write_matrix_csv(const fs::path& path, const Array2& a) {
  std::ofstream out(path, std::ios::binary);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) out << (c ? "," : "") << csv_number(a(r, c));
    out << '\n';
  }
}

struct SeedRun {
  SeedResult result;
  TrainResult train;
};

/// Trains one seed, writing metrics.csv, checkpoints and requested dumps under
/// `dir` (created if needed). Modulator gap is filled for fm runs on data with
/// known coordinate roles.
inline SeedRun run_seed(const RunConfig& rc, const DomainDataset& ds, std::uint64_t seed, const fs::path& dir) {
  fs::create_directories(dir);
  TrainConfig cfg = rc.train;
  cfg.seed = seed;
  const SplitResult sp = split(ds, rc.plan_for(seed, ds.num_domains));

  std::ofstream metrics(dir / "metrics.csv", std::ios::binary);
  write_metrics_header(metrics);
  std::optional<std::ofstream> pl_log;
  if (rc.output.dump_pseudo_labels) {
    pl_log.emplace(dir / "pseudo_labels.csv", std::ios::binary);
    *pl_log << "epoch,sample_idx,label,p_max,sigma,keep,l_scale,true_class\n";
  }

  TrainHooks hooks;
  double best_acc = -1.0;
  hooks.on_epoch_end = [&](const EpochReport& rep, Model& model, const SarBank& bank) {
    write_metrics_row(metrics, rep);
    metrics.flush();
    if (rc.output.dump_sar) {
      const std::string tag = "epoch" + std::to_string(rep.epoch);
      write_matrix_csv(dir / ("sar_prototypes_" + tag + ".csv"), bank.prototypes);
      write_matrix_csv(dir / ("sar_similarity_" + tag + ".csv"), bank.similarity);
      write_matrix_csv(dir / ("sar_R_" + tag + ".csv"), bank.sar);
    }
    if (rc.output.dump_modulator) {
      write_matrix_csv(dir / ("modulator_epoch" + std::to_string(rep.epoch) + ".csv"), model.modulator.m.value);
    }
    // Diagnostic only; reported numbers always come from the final epoch.
    if (rc.output.checkpoint && rep.target_accuracy > best_acc) {
      best_acc = rep.target_accuracy;
      Checkpoint ck{model, bank, cfg.mode};
      save_checkpoint((dir / "best.ckpt").string(), ck);
    }
  };
  if (pl_log) {
    hooks.on_pseudo_labels = [&](const std::vector<PseudoLabelLogRow>& rows) {
      for (const auto& r : rows) {
        *pl_log << r.epoch << ',' << r.sample_idx << ',' << r.record.label << ',' << csv_number(r.record.p_max) << ','
                << csv_number(r.record.sigma) << ',' << (r.record.keep ? 1 : 0) << ','
                << csv_number(r.record.l_scale) << ',' << r.true_class << '\n';
      }
    };
  }

  SeedRun run{SeedResult{}, train(sp, cfg, hooks)};
  if (rc.output.checkpoint) {
    Checkpoint ck{run.train.model, run.train.bank, cfg.mode};
    save_checkpoint((dir / "final.ckpt").string(), ck);
  }

  const EpochReport& last = run.train.reports.back();
  run.result.seed = seed;
  run.result.target_acc = last.target_accuracy;
  run.result.keep_rate = last.keep_rate;
  run.result.pl_acc = last.pl_accuracy;
  run.result.epochs = run.train.reports.size();
  if (cfg.mode == Method::fm && ds.has_roles()) {
    const Array2 x = stack_features(sp.labeled(), ds.input_dim);
    const auto share = feature_signal_share(run.train.model.extractor, x, ds.signal_dims, ds.noise_dims);
    run.result.modulator_gap = modulator_gap(run.train.model.modulator.m.value, share);
  }
  return run;
}

}  // namespace modfeat

#endif  // MODFEAT_RUN_HPP
