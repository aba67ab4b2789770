// kernels/kernels.cc

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

#include "kernels/kernels.h"

#include <cmath>

#include <omp.h>

namespace accnorm {

namespace {
KernelMode g_mode = KernelMode::kParallel;
int g_threads = 0;  // 0 = OpenMP default

// Work below this many output elements is not worth a parallel region.
constexpr int kParallelCutoff = 4096;

inline bool UseParallel(size_t out_elems) {
  return g_mode == KernelMode::kParallel &&
         out_elems >= static_cast<size_t>(kParallelCutoff);
}
}  // namespace

KernelMode GetKernelMode() { return g_mode; }
void SetKernelMode(KernelMode mode) { g_mode = mode; }

void SetKernelThreads(int n) {
  g_threads = n;
  if (n > 0) omp_set_num_threads(n);
}
int GetKernelThreads() {
  return g_threads > 0 ? g_threads : omp_get_max_threads();
}

// Row-owned accumulation: thread t computes full rows of C, each row's k-loop
// runs sequentially, so results do not depend on the thread count.

void GemmNNSerial(const Tensor& a, const Tensor& b, Tensor* c) {
  ACN_CHECK(a.cols == b.rows, "GemmNN: inner dims " << a.cols << " vs " << b.rows);
  c->rows = a.rows;
  c->cols = b.cols;
  c->data.assign(static_cast<size_t>(a.rows) * b.cols, 0.0);
  const int m = a.rows, k = a.cols, n = b.cols;
  for (int i = 0; i < m; ++i) {
    const double* arow = a.row(i);
    double* crow = c->row(i);
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b.row(p);
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void GemmNTSerial(const Tensor& a, const Tensor& b, Tensor* c) {
  ACN_CHECK(a.cols == b.cols, "GemmNT: inner dims " << a.cols << " vs " << b.cols);
  c->rows = a.rows;
  c->cols = b.rows;
  c->data.assign(static_cast<size_t>(a.rows) * b.rows, 0.0);
  const int m = a.rows, k = a.cols, n = b.rows;
  for (int i = 0; i < m; ++i) {
    const double* arow = a.row(i);
    double* crow = c->row(i);
    for (int j = 0; j < n; ++j) {
      const double* brow = b.row(j);
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] = acc;
    }
  }
}

void GemmTNSerial(const Tensor& a, const Tensor& b, Tensor* c) {
  ACN_CHECK(a.rows == b.rows, "GemmTN: inner dims " << a.rows << " vs " << b.rows);
  c->rows = a.cols;
  c->cols = b.cols;
  c->data.assign(static_cast<size_t>(a.cols) * b.cols, 0.0);
  const int m = a.cols, k = a.rows, n = b.cols;
  for (int i = 0; i < m; ++i) {
    double* crow = c->row(i);
    for (int p = 0; p < k; ++p) {
      const double av = a.at(p, i);
      const double* brow = b.row(p);
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void GemmNN(const Tensor& a, const Tensor& b, Tensor* c) {
  ACN_CHECK(a.cols == b.rows, "GemmNN: inner dims " << a.cols << " vs " << b.rows);
  const size_t out = static_cast<size_t>(a.rows) * b.cols;
  if (!UseParallel(out)) {
    GemmNNSerial(a, b, c);
    return;
  }
  c->rows = a.rows;
  c->cols = b.cols;
  c->data.assign(out, 0.0);
  const int m = a.rows, k = a.cols, n = b.cols;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    const double* arow = a.row(i);
    double* crow = c->row(i);
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b.row(p);
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void GemmNT(const Tensor& a, const Tensor& b, Tensor* c) {
  ACN_CHECK(a.cols == b.cols, "GemmNT: inner dims " << a.cols << " vs " << b.cols);
  const size_t out = static_cast<size_t>(a.rows) * b.rows;
  if (!UseParallel(out)) {
    GemmNTSerial(a, b, c);
    return;
  }
  c->rows = a.rows;
  c->cols = b.rows;
  c->data.assign(out, 0.0);
  const int m = a.rows, k = a.cols, n = b.rows;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    const double* arow = a.row(i);
    double* crow = c->row(i);
    for (int j = 0; j < n; ++j) {
      const double* brow = b.row(j);
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] = acc;
    }
  }
}

void GemmTN(const Tensor& a, const Tensor& b, Tensor* c) {
  ACN_CHECK(a.rows == b.rows, "GemmTN: inner dims " << a.rows << " vs " << b.rows);
  const size_t out = static_cast<size_t>(a.cols) * b.cols;
  if (!UseParallel(out)) {
    GemmTNSerial(a, b, c);
    return;
  }
  c->rows = a.cols;
  c->cols = b.cols;
  c->data.assign(out, 0.0);
  const int m = a.cols, k = a.rows, n = b.cols;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    double* crow = c->row(i);
    for (int p = 0; p < k; ++p) {
      const double av = a.at(p, i);
      const double* brow = b.row(p);
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void Axpy(double alpha, const Tensor& x, Tensor* y) {
  ACN_CHECK(x.size() == y->size(), "Axpy: size mismatch");
  const size_t n = x.size();
  for (size_t i = 0; i < n; ++i) y->data[i] += alpha * x.data[i];
}

void SoftmaxRows(Tensor* x) {
  for (int i = 0; i < x->rows; ++i) {
    double* r = x->row(i);
    double mx = r[0];
    for (int j = 1; j < x->cols; ++j) mx = std::max(mx, r[j]);
    double sum = 0.0;
    for (int j = 0; j < x->cols; ++j) {
      r[j] = std::exp(r[j] - mx);
      sum += r[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < x->cols; ++j) r[j] *= inv;
  }
}

}  // namespace accnorm
