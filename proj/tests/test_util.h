// tests/test_util.h

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

#ifndef ACCNORM_TESTS_TEST_UTIL_H_
#define ACCNORM_TESTS_TEST_UTIL_H_

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "autodiff/tape.h"
#include "kernels/tensor.h"

namespace accnorm {
namespace test {

inline double RelDiff(double a, double b) {
  double denom = std::max({1e-8, std::fabs(a), std::fabs(b)});
  return std::fabs(a - b) / denom;
}

// Central finite difference of a scalar loss with respect to one flat
// parameter entry. The loss functor must rebuild its graph from the store on
// every call.
inline double NumericalGrad(ParamStore* ps, size_t flat_index,
                            const std::function<double()>& loss,
                            double eps = 1e-5) {
  double& p = ps->Flat()[flat_index];
  const double saved = p;
  p = saved + eps;
  const double lp = loss();
  p = saved - eps;
  const double lm = loss();
  p = saved;
  return (lp - lm) / (2.0 * eps);
}

// Reference CTC negative log-likelihood by exhaustive path enumeration:
// every frame-level labeling is collapsed (merge repeats, drop blanks) and
// compared against the target. Exponential in T; keep T small.
inline double CtcBruteForce(const Tensor& logits,
                            const std::vector<int>& targets) {
  const int T = logits.rows;
  const int C = logits.cols;
  const int blank = C - 1;
  // Log-softmax.
  Tensor lp = logits;
  for (int t = 0; t < T; ++t) {
    double mx = lp.at(t, 0);
    for (int j = 1; j < C; ++j) mx = std::max(mx, lp.at(t, j));
    double sum = 0.0;
    for (int j = 0; j < C; ++j) sum += std::exp(lp.at(t, j) - mx);
    double lse = mx + std::log(sum);
    for (int j = 0; j < C; ++j) lp.at(t, j) -= lse;
  }
  double total = 0.0;
  std::vector<int> path(T, 0);
  while (true) {
    std::vector<int> collapsed;
    int prev = -1;
    for (int t = 0; t < T; ++t) {
      if (path[t] != prev && path[t] != blank) collapsed.push_back(path[t]);
      prev = path[t];
    }
    if (collapsed == targets) {
      double lo = 0.0;
      for (int t = 0; t < T; ++t) lo += lp.at(t, path[t]);
      total += std::exp(lo);
    }
    int i = T - 1;
    while (i >= 0 && path[i] == C - 1) path[i--] = 0;
    if (i < 0) break;
    ++path[i];
  }
  if (T == 0) return targets.empty() ? 0.0 : INFINITY;
  return total > 0.0 ? -std::log(total) : INFINITY;
}

// Fresh scratch directory under the build tree.
inline std::string ScratchDir(const std::string& tag) {
  std::string dir = "test_scratch/" + tag;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace test
}  // namespace accnorm

#endif  // ACCNORM_TESTS_TEST_UTIL_H_
