// bench/bench_kernels.cc

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

// Compares the OpenMP-parallel kernels against the serial reference, then
// times a small transformer-block forward/backward through the tape. Usage:
//   bench_kernels [threads]

#include <chrono>
#include <cstdio>
#include <cstdlib>

#include "autodiff/tape.h"
#include "base/rng.h"
#include "kernels/kernels.h"
#include "nn/layers.h"

namespace accnorm {
namespace {

double Seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void BenchGemm(int n, int reps) {
  Rng rng(1234);
  Tensor a = Tensor::Gaussian(n, n, rng);
  Tensor b = Tensor::Gaussian(n, n, rng);
  Tensor c;
  const double flops = 2.0 * n * n * n * reps;

  SetKernelMode(KernelMode::kSerial);
  GemmNN(a, b, &c);  // warm up
  double t0 = Seconds();
  for (int i = 0; i < reps; ++i) GemmNN(a, b, &c);
  double serial = Seconds() - t0;

  SetKernelMode(KernelMode::kParallel);
  GemmNN(a, b, &c);
  t0 = Seconds();
  for (int i = 0; i < reps; ++i) GemmNN(a, b, &c);
  double parallel = Seconds() - t0;

  std::printf("gemm %4d x %4d  serial %7.3f s (%6.2f GF/s)  parallel %7.3f s "
              "(%6.2f GF/s)  speedup %.2fx\n",
              n, n, serial, flops / serial * 1e-9, parallel,
              flops / parallel * 1e-9, serial / parallel);
}

void BenchBlockStep(int seq_len, int dim, int reps) {
  Rng rng(99);
  ParamStore ps;
  BlockParams block = MakeBlock(&ps, "b", dim, 4, 4 * dim, dim, false, &rng);
  Tensor x = Tensor::Gaussian(seq_len, dim, rng, 0.3);

  auto run = [&]() {
    Graph g(&ps);
    Graph::Var h =
        ApplyBlock(&g, block, g.Input(x), -1, nullptr, -1, nullptr);
    Graph::Var loss = g.MeanAll(g.Mul(h, h));
    g.Backward(loss);
    std::vector<double> grad(ps.TotalSize(), 0.0);
    g.FlushParamGrads(&grad);
    return grad[0];
  };

  for (KernelMode mode : {KernelMode::kSerial, KernelMode::kParallel}) {
    SetKernelMode(mode);
    run();
    double t0 = Seconds();
    for (int i = 0; i < reps; ++i) run();
    double dt = Seconds() - t0;
    std::printf("block fwd+bwd T=%d d=%d  %s  %7.2f ms/step\n", seq_len, dim,
                mode == KernelMode::kSerial ? "serial  " : "parallel",
                dt / reps * 1e3);
  }
  SetKernelMode(KernelMode::kParallel);
}

}  // namespace
}  // namespace accnorm

int main(int argc, char** argv) {
  if (argc > 1) accnorm::SetKernelThreads(std::atoi(argv[1]));
  std::printf("threads: %d\n", accnorm::GetKernelThreads());
  accnorm::BenchGemm(128, 40);
  accnorm::BenchGemm(256, 10);
  accnorm::BenchGemm(512, 3);
  accnorm::BenchBlockStep(64, 64, 20);
  accnorm::BenchBlockStep(128, 128, 5);
  return 0;
}
