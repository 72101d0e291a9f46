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

#ifndef MODFEAT_NUMERICS_GRAD_CHECK_HPP
#define MODFEAT_NUMERICS_GRAD_CHECK_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "modfeat/numerics/tape.hpp"

namespace modfeat {

struct GradCheckEntry {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = true;
};

/// Builds a scalar loss on the given tape from the current parameter values.
using LossBuilder = std::function<Var(Tape&)>;

/// Relative error with an absolute floor so that vanishing gradients do not
/// blow up the ratio.
inline double gradient_rel_error(double analytic, double numeric, double floor = 1e-6) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// Compares the reverse-mode gradient of `build` against central differences
/// (f(θ+h) − f(θ−h)) / 2h for every entry of every parameter.
inline GradCheckReport grad_check(const LossBuilder& build, const std::vector<Parameter*>& params, double step,
                                  double tolerance) {
  GradCheckReport report;
  report.tolerance = tolerance;
  if (params.empty()) return report;

  auto evaluate = [&]() {
    Tape t(GradMode::disabled);
    return build(t).value()(0, 0);
  };

  const double f0 = evaluate();
  if (evaluate() != f0) throw DeterminismError("grad_check: loss builder is not deterministic");

  for (Parameter* p : params) p->zero_grad();
  {
    Tape t;
    Var loss = build(t);
    t.backward(loss);
  }

  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + step;
      const double fp = evaluate();
      p->value[i] = saved - step;
      const double fm = evaluate();
      p->value[i] = saved;
      GradCheckEntry e;
      e.param = p->name;
      e.index = i;
      e.analytic = p->grad[i];
      e.numeric = (fp - fm) / (2.0 * step);
      e.rel_error = gradient_rel_error(e.analytic, e.numeric);
      report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
      report.entries.push_back(std::move(e));
    }
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace modfeat

#endif  // MODFEAT_NUMERICS_GRAD_CHECK_HPP
