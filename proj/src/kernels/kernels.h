// kernels/kernels.h

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

#ifndef ACCNORM_KERNELS_KERNELS_H_
#define ACCNORM_KERNELS_KERNELS_H_

#include "kernels/tensor.h"

namespace accnorm {

// The dense kernels below exist in two builds: an OpenMP-parallel version
// (default) and a serial reference. Every output element is owned by exactly
// one thread, so the two produce bitwise-identical results for any thread
// count; the serial path stays as the oracle for tests and the benchmark.
enum class KernelMode { kParallel, kSerial };

KernelMode GetKernelMode();
void SetKernelMode(KernelMode mode);

// Thread count for the parallel path (defaults to OpenMP's own default).
void SetKernelThreads(int n);
int GetKernelThreads();

// C = A * B
void GemmNN(const Tensor& a, const Tensor& b, Tensor* c);
// C = A * B^T
void GemmNT(const Tensor& a, const Tensor& b, Tensor* c);
// C = A^T * B
void GemmTN(const Tensor& a, const Tensor& b, Tensor* c);

// Serial reference implementations (always single-threaded plain loops).
void GemmNNSerial(const Tensor& a, const Tensor& b, Tensor* c);
void GemmNTSerial(const Tensor& a, const Tensor& b, Tensor* c);
void GemmTNSerial(const Tensor& a, const Tensor& b, Tensor* c);

// y += alpha * x (flat)
void Axpy(double alpha, const Tensor& x, Tensor* y);

// In-place row-wise softmax.
void SoftmaxRows(Tensor* x);

}  // namespace accnorm

#endif  // ACCNORM_KERNELS_KERNELS_H_
