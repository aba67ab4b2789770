// nn/trainutil.cc

// Copyright 2026  Accnorm Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "nn/trainutil.h"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

#include "nn/adam.h"

namespace accnorm {

namespace {
constexpr double kPi = 3.14159265358979323846;
}  // namespace

TrainStats RunTraining(ParamStore* ps, const TrainStepFn& step_fn,
                       const TrainEvalFn& eval_fn, const TrainOptions& opts) {
  Adam adam(ps->TotalSize(), opts.lr);
  std::vector<double> grad(ps->TotalSize(), 0.0);
  TrainStats stats;
  std::vector<double> best_params;
  double best_valid = std::numeric_limits<double>::infinity();
  for (int step = 0; step < opts.steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    const double loss = step_fn(step, &grad);
    if (!std::isfinite(loss))
      throw DivergenceError(opts.tag + " loss diverged at step " +
                            std::to_string(step));
    ClipGradNorm(&grad, opts.clip);
    const double wu = std::min(1.0, (step + 1.0) / opts.warmup);
    double decay = 1.0;
    if (opts.steps > opts.warmup && step + 1 > opts.warmup) {
      const double prog = static_cast<double>(step + 1 - opts.warmup) /
                          (opts.steps - opts.warmup);
      decay = 0.1 + 0.9 * 0.5 * (1.0 + std::cos(kPi * prog));
    }
    adam.set_lr(opts.lr * wu * decay);
    adam.Step(grad, &ps->Flat());
    stats.train_curve.push_back(loss);
    stats.final_train_loss = loss;
    if (eval_fn &&
        ((step + 1) % opts.valid_every == 0 || step + 1 == opts.steps)) {
      const double v = eval_fn();
      stats.valid_curve.emplace_back(step + 1, v);
      stats.final_valid_loss = v;
      if (v < best_valid) {
        best_valid = v;
        best_params = ps->Flat();
      }
      if (opts.verbose)
        std::cerr << opts.tag << " step " << step + 1 << " train " << loss
                  << " valid " << v << "\n";
    }
  }
  // Keep the best validation snapshot rather than the last iterate.
  if (!best_params.empty()) {
    ps->Flat() = best_params;
    stats.final_valid_loss = best_valid;
  }
  return stats;
}

}  // namespace accnorm
