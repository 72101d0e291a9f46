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

#ifndef MODFEAT_TRAINER_HPP
#define MODFEAT_TRAINER_HPP

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "modfeat/data/augment.hpp"
#include "modfeat/data/batches.hpp"
#include "modfeat/data/split.hpp"
#include "modfeat/metrics.hpp"
#include "modfeat/objective.hpp"

namespace modfeat {

struct TrainConfig {
  std::size_t epochs = 20;
  double lr_main = 0.03;
  double lr_modulator = 0.03;
  double momentum = 0.9;
  double tau = 0.75;
  double baseline_tau = 0.95;
  std::size_t mc_samples = 5;
  double beta = 1.0;
  double gamma = 0.5;
  bool detach_col_max = false;
  std::size_t per_domain_labeled = 16;
  std::size_t per_domain_unlabeled = 16;
  double dropout_p = 0.05;
  std::vector<std::size_t> hidden_dims{64, 64};
  std::size_t feature_dim = 32;
  bool normalize_features = true;
  AugmentConfig augment;
  std::uint64_t seed = 0;
  Method mode = Method::fm;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(lr_main > 0.0) || !(lr_modulator > 0.0)) throw ConfigError("learning rates must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0,1)");
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must be in (0,1)");
    if (!(baseline_tau > 0.0 && baseline_tau < 1.0)) throw ConfigError("baseline_tau must be in (0,1)");
    if (mc_samples < 2) throw ConfigError("mc_samples must be >= 2");
    if (beta < 0.0 || gamma < 0.0) throw ConfigError("beta and gamma must be >= 0");
    if (per_domain_labeled < 1 || per_domain_unlabeled < 1) throw ConfigError("per-domain batch counts must be >= 1");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout_p must be in [0,1)");
    if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
  }
};

struct EpochReport {
  std::size_t epoch = 0;  // 1-based
  LossBreakdown loss;     // mean over the epoch's steps
  double keep_rate = 0.0;
  std::optional<double> pl_accuracy;
  double target_accuracy = 0.0;
  double lr = 0.0;  // main learning rate at the epoch's last step
};

/// base_lr * 0.5 * (1 + cos(pi * step / total_steps)).
inline double cosine_lr(double base_lr, std::size_t step, std::size_t total_steps) {
  if (step > total_steps) throw ParameterError("cosine_lr: step beyond schedule");
  if (total_steps == 0) return base_lr;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

/// v <- momentum * v + g; theta <- theta - lr * v.
inline void sgd_step(Array2& value, const Array2& grad, Array2& velocity, double lr, double momentum) {
  value.require_same_shape(grad, "sgd_step");
  value.require_same_shape(velocity, "sgd_step");
  for (std::size_t i = 0; i < value.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grad[i];
    value[i] -= lr * velocity[i];
  }
}

/// SGD with momentum over parameter groups with their own base rates.
class Sgd {
 public:
  explicit Sgd(double momentum) : momentum_(momentum) {}

  void add(Parameter& p, double base_lr) {
    for (const auto& s : slots_)
      if (s.param == &p) throw ContractError("Sgd: parameter '" + p.name + "' registered twice");
    slots_.push_back(Slot{&p, base_lr, Array2(p.value.rows(), p.value.cols())});
  }

  /// Applies one update with each group's rate multiplied by `factor`.
  void step(double factor) {
    for (auto& s : slots_) sgd_step(s.param->value, s.param->grad, s.velocity, s.base_lr * factor, momentum_);
  }

  void zero_grad() {
    for (auto& s : slots_) s.param->zero_grad();
  }

  std::size_t size() const noexcept { return slots_.size(); }

 private:
  struct Slot {
    Parameter* param;
    double base_lr;
    Array2 velocity;
  };
  double momentum_;
  std::vector<Slot> slots_;
};

/// Predicted classes for each row of x. fm: argmax of the diagonal of the
/// modulated prediction matrix; baseline: argmax of the plain prediction.
/// Ties go to the smaller class id.
inline std::vector<int> predict_classes(Model& model, const SarBank* bank, const Array2& x, Method method) {
  std::vector<int> out;
  out.reserve(x.rows());
  if (x.rows() == 0) return out;
  const std::size_t c = model.num_classes();
  if (method == Method::fm) {
    if (bank == nullptr) throw ContractError("predict_classes: fm mode needs a SAR bank");
    const Array2 s = predict_matrices(model, *bank, x, ForwardMode::eval, nullptr);
    for (std::size_t b = 0; b < x.rows(); ++b) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < c; ++j)
        if (s(b * c + j, j) > s(b * c + best, best)) best = j;
      out.push_back(static_cast<int>(best));
    }
  } else {
    Tape t(GradMode::disabled);
    const Array2 p = row_softmax(model.plain_logits(t, t.constant(x), ForwardMode::eval, nullptr).value());
    for (std::size_t b = 0; b < x.rows(); ++b) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < c; ++j)
        if (p(b, j) > p(b, best)) best = j;
      out.push_back(static_cast<int>(best));
    }
  }
  return out;
}

inline int infer(Model& model, const SarBank& bank, const std::vector<double>& x) {
  return predict_classes(model, &bank, Array2::row_vector(x), Method::fm).front();
}

/// Top-1 accuracy over a test set.
inline double evaluate(Model& model, const SarBank* bank, const std::vector<Sample>& test, Method method) {
  if (test.empty()) throw ParameterError("evaluate: empty test set");
  const auto pred = predict_classes(model, bank, stack_features(test, model.extractor.config().input_dim), method);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i)
    if (pred[i] == test[i].class_id) ++correct;
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

/// One row of the optional pseudo-label log.
struct PseudoLabelLogRow {
  std::size_t epoch = 0;
  std::size_t sample_idx = 0;
  PseudoLabelRecord record;
  int true_class = 0;
};

struct TrainHooks {
  std::function<void(const SarBank&)> on_bank;
  std::function<void(const std::vector<PseudoLabelLogRow>&)> on_pseudo_labels;
  std::function<void(const EpochReport&, Model&, const SarBank&)> on_epoch_end;
};

struct TrainResult {
  Model model;
  SarBank bank;
  std::vector<EpochReport> reports;
  std::size_t steps = 0;
};

namespace detail {

inline std::vector<int> labels_of(const std::vector<Sample>& samples) {
  std::vector<int> y;
  y.reserve(samples.size());
  for (const auto& s : samples) y.push_back(s.class_id);
  return y;
}

inline SarBank refresh_bank(Model& model, const Array2& labeled_x, const std::vector<int>& labels, int epoch) {
  return build_sar_bank(model.extractor.extract(labeled_x), labels, model.num_classes(), epoch);
}

/// Runs fn, turning any library error into TrainingAborted with the position.
template <class Fn>
auto guarded(std::size_t epoch, std::size_t step, Fn&& fn) {
  try {
    return fn();
  } catch (const TrainingAborted&) {
    throw;
  } catch (const Error& e) {
    throw TrainingAborted("training aborted at epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                          ": " + e.what());
  }
}

}  // namespace detail

/// Full training run over an existing split. Per epoch: refresh the SAR bank
/// from clean labeled features, then for each batch pseudo-label the weak
/// unlabeled views, build the loss on weak labeled and strong unlabeled views,
/// and take a cosine-scheduled SGD step. Target accuracy is measured at the end
/// of each epoch.
inline TrainResult train(const SplitResult& split, const TrainConfig& cfg, const TrainHooks& hooks = {}) {
  cfg.validate();
  if (split.sources.empty()) throw ParameterError("train: no source domains");
  const std::size_t num_classes = static_cast<std::size_t>(split.num_classes);

  Rng init_rng(derive_seed(cfg.seed, {0x1417}));
  ExtractorConfig ecfg;
  ecfg.input_dim = split.input_dim;
  ecfg.hidden_dims = cfg.hidden_dims;
  ecfg.feature_dim = cfg.feature_dim;
  ecfg.dropout_p = cfg.dropout_p;
  ecfg.normalize_features = cfg.normalize_features;

  TrainResult result;
  Model& model = result.model;
  model = Model::init(ecfg, num_classes, init_rng);

  const std::vector<Sample> labeled = split.labeled();
  const std::vector<int> labeled_y = detail::labels_of(labeled);
  const Array2 labeled_x = stack_features(labeled, split.input_dim);
  const Augmenter augmenter = Augmenter::fit(split.unlabeled(), cfg.augment);

  const bool fm = cfg.mode == Method::fm;
  if (fm) {
    model.modulator = init_from_variance(model.extractor.extract(labeled_x), labeled_y, num_classes);
  } else {
    model.modulator.m.learnable = false;
  }

  Sgd opt(cfg.momentum);
  for (auto* p : model.extractor.parameters()) opt.add(*p, cfg.lr_main);
  for (auto* p : model.classifier.parameters()) opt.add(*p, cfg.lr_main);
  if (fm) opt.add(model.modulator.m, cfg.lr_modulator);

  BatchIterator batches(split, cfg.per_domain_labeled, cfg.per_domain_unlabeled, derive_seed(cfg.seed, {0xba7}));
  const std::size_t per_epoch = batches.batches_per_epoch();
  const std::size_t total_steps = per_epoch * cfg.epochs;

  LossConfig lcfg;
  lcfg.method = cfg.mode;
  lcfg.beta = cfg.beta;
  lcfg.gamma = cfg.gamma;
  lcfg.detach_col_max = cfg.detach_col_max;
  lcfg.mode = ForwardMode::train;

  std::size_t step = 0;
  LossBreakdown last;  // losses of the last completed step
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    result.bank = detail::guarded(epoch, step, [&] {
      return detail::refresh_bank(model, labeled_x, labeled_y, static_cast<int>(epoch));
    });
    if (hooks.on_bank) hooks.on_bank(result.bank);
    batches.start_epoch(epoch);

    LossBreakdown sums;
    std::vector<PseudoLabelRecord> epoch_records;
    std::vector<int> epoch_truth;
    std::vector<PseudoLabelLogRow> log_rows;
    double lr_now = 0.0;

    for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
      const Batch batch = batches.next();
      Rng aug_rng(derive_seed(cfg.seed, {0xa06, epoch, b}));
      Rng mc_rng(derive_seed(cfg.seed, {0x3c, epoch, b}));
      Rng drop_rng(derive_seed(cfg.seed, {0xd20, epoch, b}));

      LossBatch lb;
      lb.labeled_x = Array2(batch.labeled.size(), split.input_dim);
      for (std::size_t i = 0; i < batch.labeled.size(); ++i) {
        const auto v = augmenter.weak(batch.labeled[i].sample->features, aug_rng);
        std::copy(v.begin(), v.end(), lb.labeled_x.row(i).begin());
        lb.labels.push_back(batch.labeled[i].sample->class_id);
      }
      Array2 weak_u(batch.unlabeled.size(), split.input_dim);
      lb.unlabeled_x = Array2(batch.unlabeled.size(), split.input_dim);
      for (std::size_t i = 0; i < batch.unlabeled.size(); ++i) {
        const auto& f = batch.unlabeled[i].sample->features;
        const auto w = augmenter.weak(f, aug_rng);
        const auto s = augmenter.strong(f, aug_rng);
        std::copy(w.begin(), w.end(), weak_u.row(i).begin());
        std::copy(s.begin(), s.end(), lb.unlabeled_x.row(i).begin());
      }
      lb.records = detail::guarded(epoch, step, [&] {
        return fm ? pseudo_label_batch(model, result.bank, weak_u, cfg.mc_samples, cfg.tau, mc_rng)
                  : baseline_pseudo_label_batch(model, weak_u, cfg.baseline_tau);
      });

      // Hidden truth is read only for the metrics below.
      for (std::size_t i = 0; i < batch.unlabeled.size(); ++i) {
        epoch_records.push_back(lb.records[i]);
        epoch_truth.push_back(batch.unlabeled[i].sample->class_id);
        if (hooks.on_pseudo_labels) {
          log_rows.push_back(PseudoLabelLogRow{epoch, batch.unlabeled[i].index, lb.records[i],
                                               batch.unlabeled[i].sample->class_id});
        }
      }

      const double factor = cosine_lr(1.0, step, total_steps);
      lr_now = cfg.lr_main * factor;

      LossBreakdown values;
      try {
        Tape tape;
        MaskSource masks(drop_rng);
        LossTerms terms = total_loss(tape, model, fm ? &result.bank : nullptr, lb, lcfg, &masks);
        values = terms.values;
        if (!std::isfinite(values.total)) throw Error("non-finite loss");
        tape.backward(terms.total);
      } catch (const Error& e) {
        std::ostringstream msg;
        msg << "training aborted at epoch " << epoch << " step " << step << ": " << e.what()
            << "; previous step l_s=" << last.l_s << " l_u=" << last.l_u << " l_d=" << last.l_d
            << " l_ud=" << last.l_ud;
        throw TrainingAborted(msg.str());
      }
      for (auto* p : model.parameters()) {
        if (!p->grad.all_finite()) throw TrainingAborted("non-finite gradient in " + p->name);
      }
      opt.step(factor);
      opt.zero_grad();

      last = values;
      sums.l_s += values.l_s;
      sums.l_u += values.l_u;
      sums.l_d += values.l_d;
      sums.l_ud += values.l_ud;
      sums.total += values.total;
    }

    EpochReport rep;
    rep.epoch = epoch;
    const double n = static_cast<double>(per_epoch);
    rep.loss = sums;
    rep.loss.l_s /= n;
    rep.loss.l_u /= n;
    rep.loss.l_d /= n;
    rep.loss.l_ud /= n;
    rep.loss.total /= n;
    rep.loss.beta = cfg.beta;
    rep.loss.gamma = cfg.gamma;
    rep.keep_rate = keep_rate(epoch_records);
    rep.pl_accuracy = pl_accuracy(epoch_records, epoch_truth);
    rep.target_accuracy =
        detail::guarded(epoch, step, [&] { return evaluate(model, &result.bank, split.target_test, cfg.mode); });
    rep.lr = lr_now;
    result.reports.push_back(rep);
    if (hooks.on_pseudo_labels) hooks.on_pseudo_labels(log_rows);
    if (hooks.on_epoch_end) hooks.on_epoch_end(rep, model, result.bank);
  }
  result.steps = step;
  return result;
}

inline TrainResult train(const DomainDataset& ds, const SplitPlan& plan, const TrainConfig& cfg,
                         const TrainHooks& hooks = {}) {
  return train(split(ds, plan), cfg, hooks);
}

}  // namespace modfeat

#endif  // MODFEAT_TRAINER_HPP
