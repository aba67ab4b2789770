// nn/adam.h

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

#ifndef ACCNORM_NN_ADAM_H_
#define ACCNORM_NN_ADAM_H_

#include <cstddef>
#include <vector>

namespace accnorm {

// Plain Adam over a flat parameter vector, bias-corrected moments.
class Adam {
 public:
  Adam(size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0),
        v_(n, 0.0) {}

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  int step_count() const { return t_; }

  void Step(const std::vector<double>& grad, std::vector<double>* params);

 private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<double> m_, v_;
};

// Global L2 clipping: rescales grad in place when its norm exceeds max_norm,
// returns the pre-clip norm.
double ClipGradNorm(std::vector<double>* grad, double max_norm);

}  // namespace accnorm

#endif  // ACCNORM_NN_ADAM_H_
