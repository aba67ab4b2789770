// nn/layers.h

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

#ifndef ACCNORM_NN_LAYERS_H_
#define ACCNORM_NN_LAYERS_H_

#include <string>
#include <vector>

#include "autodiff/tape.h"
#include "base/rng.h"
#include "kernels/tensor.h"

namespace accnorm {

// Parameter-id bundles. Factories register tensors into a ParamStore under
// hierarchical names; Apply* build the forward graph.

struct LinearParams {
  int w = -1;  // in x out
  int b = -1;  // 1 x out
};

LinearParams MakeLinear(ParamStore* ps, const std::string& name, int in,
                        int out, Rng* rng);
LinearParams MakeLinearZero(ParamStore* ps, const std::string& name, int in,
                            int out);
Graph::Var ApplyLinear(Graph* g, const LinearParams& p, Graph::Var x);

struct LnParams {
  int gain = -1;
  int bias = -1;
};

LnParams MakeLn(ParamStore* ps, const std::string& name, int dim);
Graph::Var ApplyLn(Graph* g, const LnParams& p, Graph::Var x);

// Adaptive layer norm: LayerNorm followed by (1 + scale, shift) modulation
// predicted from a 1 x D condition row by a zero-initialized projection, so
// the block starts as a plain LayerNorm.
struct AdaLnParams {
  LnParams ln;
  LinearParams proj;  // D -> 2*dim, zero init
  int dim = 0;
};

AdaLnParams MakeAdaLn(ParamStore* ps, const std::string& name, int dim,
                      int cond_dim);
// cond < 0 means unconditioned: plain layer norm.
Graph::Var ApplyAdaLn(Graph* g, const AdaLnParams& p, Graph::Var x,
                      Graph::Var cond);

struct AttnParams {
  LinearParams q, k, v, o;
  int heads = 0;
  int dim = 0;
};

AttnParams MakeAttn(ParamStore* ps, const std::string& name, int dim,
                    int heads, Rng* rng);
// mask, when non-null, is an additive T_q x T_kv bias on the logits.
Graph::Var ApplyAttn(Graph* g, const AttnParams& p, Graph::Var x_q,
                     Graph::Var x_kv, const Tensor* mask);

struct FfnParams {
  LinearParams in, out;
};

FfnParams MakeFfn(ParamStore* ps, const std::string& name, int dim, int hidden,
                  Rng* rng);
Graph::Var ApplyFfn(Graph* g, const FfnParams& p, Graph::Var x);

// Pre-norm transformer block: x + Attn(Norm(x)), x + Ffn(Norm(x)). Norms are
// AdaLN when cond >= 0 is passed to Apply, plain otherwise. cross holds the
// optional second attention (decoder) and is skipped when absent.
struct BlockParams {
  AdaLnParams norm1, norm2, norm3;
  AttnParams self_attn, cross_attn;
  FfnParams ffn;
  bool has_cross = false;
};

BlockParams MakeBlock(ParamStore* ps, const std::string& name, int dim,
                      int heads, int ffn_hidden, int cond_dim, bool cross,
                      Rng* rng);
Graph::Var ApplyBlock(Graph* g, const BlockParams& p, Graph::Var x,
                      Graph::Var cond, const Tensor* self_mask,
                      Graph::Var memory, const Tensor* cross_mask);

// Sinusoidal position table, rows 0..n-1.
Tensor SinusoidalPositions(int n, int dim);
// Sinusoidal embedding of a scalar (flow time, log duration), 1 x dim.
Tensor SinusoidalScalar(double value, int dim, double scale = 1000.0);
// Additive causal mask: 0 on and below the diagonal, -1e30 above.
Tensor CausalMask(int n);

}  // namespace accnorm

#endif  // ACCNORM_NN_LAYERS_H_
