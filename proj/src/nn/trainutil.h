// nn/trainutil.h

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

#ifndef ACCNORM_NN_TRAINUTIL_H_
#define ACCNORM_NN_TRAINUTIL_H_

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "autodiff/tape.h"

namespace accnorm {

struct TrainOptions {
  int steps = 1000;
  int batch = 16;
  double lr = 1e-3;
  int warmup = 40;
  double clip = 1.0;
  uint64_t seed = 1;
  int valid_every = 100;
  bool verbose = false;
  std::string tag;  // model name for logs and error messages
};

struct TrainStats {
  std::vector<double> train_curve;  // mean loss per step
  std::vector<std::pair<int, double>> valid_curve;
  double final_train_loss = 0.0;
  double final_valid_loss = 0.0;
  long ctc_skipped = 0;  // infeasible alignment terms dropped (converter)
};

// One optimization step: build graphs for the batch, add gradients into
// `grad` (already zeroed) and return the mean loss.
using TrainStepFn = std::function<double(int step, std::vector<double>* grad)>;
using TrainEvalFn = std::function<double()>;

// Adam with linear warmup, cosine decay to a tenth of the peak rate and
// global gradient clipping. eval_fn, when set, runs every valid_every steps
// and at the end; the parameters revert to the best validation snapshot.
// Throws DivergenceError when the loss stops being finite.
TrainStats RunTraining(ParamStore* ps, const TrainStepFn& step_fn,
                       const TrainEvalFn& eval_fn, const TrainOptions& opts);

}  // namespace accnorm

#endif  // ACCNORM_NN_TRAINUTIL_H_
