// kernels/tensor.h

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

#ifndef ACCNORM_KERNELS_TENSOR_H_
#define ACCNORM_KERNELS_TENSOR_H_

#include <cstring>
#include <vector>

#include "base/common.h"
#include "base/rng.h"

namespace accnorm {

// Dense row-major matrix of doubles. Row vectors are 1 x n.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
  size_t size() const { return data.size(); }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  void zero() { std::memset(data.data(), 0, data.size() * sizeof(double)); }

  static Tensor Gaussian(int r, int c, Rng& rng, double scale = 1.0) {
    Tensor t(r, c);
    for (auto& v : t.data) v = scale * rng.gaussian();
    return t;
  }
};

}  // namespace accnorm

#endif  // ACCNORM_KERNELS_TENSOR_H_
