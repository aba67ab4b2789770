// tests/kernels_test.cc

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>

#include "base/rng.h"
#include "kernels/kernels.h"
#include "kernels/tensor.h"

namespace accnorm {
namespace {

bool BitwiseEqual(const Tensor& a, const Tensor& b) {
  return a.same_shape(b) &&
         std::memcmp(a.data.data(), b.data.data(),
                     a.size() * sizeof(double)) == 0;
}

TEST_CASE("parallel gemm matches serial bitwise for any thread count") {
  Rng rng(77);
  // Sizes straddle the parallel cutoff.
  const int sizes[][3] = {{3, 4, 5}, {17, 33, 9}, {64, 96, 48}, {128, 64, 128}};
  for (const auto& s : sizes) {
    Tensor a = Tensor::Gaussian(s[0], s[1], rng);
    Tensor b = Tensor::Gaussian(s[1], s[2], rng);
    Tensor bt = Tensor::Gaussian(s[2], s[1], rng);
    Tensor at = Tensor::Gaussian(s[1], s[0], rng);

    Tensor ref_nn, ref_nt, ref_tn;
    GemmNNSerial(a, b, &ref_nn);
    GemmNTSerial(a, bt, &ref_nt);
    GemmTNSerial(at, b, &ref_tn);

    for (int threads : {1, 2, 4}) {
      SetKernelThreads(threads);
      SetKernelMode(KernelMode::kParallel);
      Tensor c;
      GemmNN(a, b, &c);
      CHECK(BitwiseEqual(c, ref_nn));
      GemmNT(a, bt, &c);
      CHECK(BitwiseEqual(c, ref_nt));
      GemmTN(at, b, &c);
      CHECK(BitwiseEqual(c, ref_tn));

      SetKernelMode(KernelMode::kSerial);
      GemmNN(a, b, &c);
      CHECK(BitwiseEqual(c, ref_nn));
    }
    SetKernelMode(KernelMode::kParallel);
  }
}

TEST_CASE("gemm small example") {
  Tensor a(2, 2), b(2, 2);
  a.at(0, 0) = 1;
  a.at(0, 1) = 2;
  a.at(1, 0) = 3;
  a.at(1, 1) = 4;
  b.at(0, 0) = 5;
  b.at(0, 1) = 6;
  b.at(1, 0) = 7;
  b.at(1, 1) = 8;
  Tensor c;
  GemmNN(a, b, &c);
  CHECK(c.at(0, 0) == 19);
  CHECK(c.at(0, 1) == 22);
  CHECK(c.at(1, 0) == 43);
  CHECK(c.at(1, 1) == 50);
}

TEST_CASE("axpy") {
  Tensor x(2, 3), y(2, 3);
  for (size_t i = 0; i < x.size(); ++i) {
    x.data[i] = static_cast<double>(i);
    y.data[i] = 1.0;
  }
  Axpy(2.0, x, &y);
  for (size_t i = 0; i < y.size(); ++i)
    CHECK(y.data[i] == doctest::Approx(1.0 + 2.0 * i));
}

TEST_CASE("softmax rows") {
  Tensor x(2, 3);
  x.at(0, 0) = 0.0;
  x.at(0, 1) = 0.0;
  x.at(0, 2) = 0.0;
  x.at(1, 0) = 1000.0;
  x.at(1, 1) = 0.0;
  x.at(1, 2) = -1000.0;
  SoftmaxRows(&x);
  for (int i = 0; i < 2; ++i) {
    double sum = 0.0;
    for (int j = 0; j < 3; ++j) sum += x.at(i, j);
    CHECK(sum == doctest::Approx(1.0));
  }
  CHECK(x.at(0, 0) == doctest::Approx(1.0 / 3));
  CHECK(x.at(1, 0) == doctest::Approx(1.0));
}

}  // namespace
}  // namespace accnorm
