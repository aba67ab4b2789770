// autodiff/tape.h

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

#ifndef ACCNORM_AUTODIFF_TAPE_H_
#define ACCNORM_AUTODIFF_TAPE_H_

#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "kernels/kernels.h"
#include "kernels/tensor.h"

namespace accnorm {

// Named parameter tensors in one flat buffer. The flat layout makes the
// optimizer, checkpointing, and finite-difference probing trivial.
class ParamStore {
 public:
  struct Info {
    std::string name;
    int rows = 0;
    int cols = 0;
    size_t offset = 0;
  };

  int Add(const std::string& name, const Tensor& init);
  int AddZero(const std::string& name, int rows, int cols);
  int Find(const std::string& name) const;  // -1 if absent
  const Info& InfoOf(int id) const { return infos_[id]; }
  int Count() const { return static_cast<int>(infos_.size()); }
  size_t TotalSize() const { return flat_.size(); }

  std::vector<double>& Flat() { return flat_; }
  const std::vector<double>& Flat() const { return flat_; }

  double* Data(int id) { return flat_.data() + infos_[id].offset; }
  const double* Data(int id) const { return flat_.data() + infos_[id].offset; }
  Tensor Copy(int id) const;

 private:
  std::vector<Info> infos_;
  std::map<std::string, int> index_;
  std::vector<double> flat_;
};

// Reverse-mode tape over Tensors. One Graph per (sequence, loss) evaluation;
// build forward, call Backward on a 1x1 root, then FlushParamGrads. Graphs
// over the same ParamStore are independent and safe to run in parallel as
// long as each has its own gradient sink.
class Graph {
 public:
  using Var = int;

  explicit Graph(const ParamStore* params = nullptr) : params_(params) {}

  Var Input(Tensor t);                 // constant
  Var Param(int param_id);             // leaf view into the store

  Var MatMul(Var a, Var b);            // A * B
  Var MatMulNT(Var a, Var b);          // A * B^T
  Var Add(Var a, Var b);
  Var Sub(Var a, Var b);
  Var Mul(Var a, Var b);               // elementwise
  Var Scale(Var a, double s);
  Var AddRow(Var x, Var row);          // broadcast 1xC over rows of x
  Var MulRow(Var x, Var row);
  Var Gelu(Var x);
  Var Tanh(Var x);
  Var LayerNorm(Var x, Var gain, Var bias);  // row-wise, eps 1e-5
  Var SoftmaxRows(Var x);
  Var SliceCols(Var x, int c0, int c1);
  Var ConcatCols(const std::vector<Var>& xs);
  Var Rows(Var table, std::vector<int> ids);        // gather rows
  Var RepeatRows(Var x, std::vector<int> counts);   // expand by durations
  Var ShiftRows(Var x, int offset);    // rows moved down by offset, zero fill
  Var SumAll(Var x);                   // 1x1
  Var MeanAll(Var x);                  // 1x1

  // Sum over rows of -log softmax(logits)[target]; 1x1.
  Var CrossEntropyRows(Var logits, std::vector<int> targets);
  // CTC negative log-likelihood over unnormalized logits (T x (labels+1)),
  // blank is the last column. Infeasible targets give +inf with no gradient.
  Var CtcLoss(Var logits, std::vector<int> targets);
  // Sum of squared differences; 1x1.
  Var MseSum(Var pred, Var target);

  const Tensor& Value(Var v) const { return nodes_[v].value; }
  int RowsOf(Var v) const { return nodes_[v].value.rows; }
  int ColsOf(Var v) const { return nodes_[v].value.cols; }

  void Backward(Var root);
  // Adds accumulated parameter gradients into a flat buffer of the store's
  // total size. Call after Backward.
  void FlushParamGrads(std::vector<double>* flat_grad) const;
  // Gradient of a non-param node (for sampling-time velocity probes etc.).
  const Tensor& GradOf(Var v) const { return nodes_[v].grad; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated on demand
    bool needs_grad = false;
    int param_id = -1;
    std::function<void(Graph*)> backward;  // captures indices, not pointers
  };

  Var NewNode(Tensor value, bool needs_grad);
  Tensor& GradBuf(Var v);
  bool NeedsGrad(Var v) const { return nodes_[v].needs_grad; }

  const ParamStore* params_;
  std::vector<Node> nodes_;
  std::map<int, Var> param_vars_;  // param_id -> leaf, so grads accumulate once
};

}  // namespace accnorm

#endif  // ACCNORM_AUTODIFF_TAPE_H_
