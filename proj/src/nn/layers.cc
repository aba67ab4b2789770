// nn/layers.cc

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

#include "nn/layers.h"

#include <cmath>

namespace accnorm {

LinearParams MakeLinear(ParamStore* ps, const std::string& name, int in,
                        int out, Rng* rng) {
  LinearParams p;
  const double scale = 1.0 / std::sqrt(static_cast<double>(in));
  p.w = ps->Add(name + ".w", Tensor::Gaussian(in, out, *rng, scale));
  p.b = ps->AddZero(name + ".b", 1, out);
  return p;
}

LinearParams MakeLinearZero(ParamStore* ps, const std::string& name, int in,
                            int out) {
  LinearParams p;
  p.w = ps->AddZero(name + ".w", in, out);
  p.b = ps->AddZero(name + ".b", 1, out);
  return p;
}

Graph::Var ApplyLinear(Graph* g, const LinearParams& p, Graph::Var x) {
  return g->AddRow(g->MatMul(x, g->Param(p.w)), g->Param(p.b));
}

LnParams MakeLn(ParamStore* ps, const std::string& name, int dim) {
  LnParams p;
  Tensor ones(1, dim);
  for (auto& v : ones.data) v = 1.0;
  p.gain = ps->Add(name + ".g", ones);
  p.bias = ps->AddZero(name + ".b", 1, dim);
  return p;
}

Graph::Var ApplyLn(Graph* g, const LnParams& p, Graph::Var x) {
  return g->LayerNorm(x, g->Param(p.gain), g->Param(p.bias));
}

AdaLnParams MakeAdaLn(ParamStore* ps, const std::string& name, int dim,
                      int cond_dim) {
  AdaLnParams p;
  p.ln = MakeLn(ps, name, dim);
  p.proj = MakeLinearZero(ps, name + ".mod", cond_dim, 2 * dim);
  p.dim = dim;
  return p;
}

Graph::Var ApplyAdaLn(Graph* g, const AdaLnParams& p, Graph::Var x,
                      Graph::Var cond) {
  Graph::Var h = ApplyLn(g, p.ln, x);
  if (cond < 0) return h;
  Graph::Var mod = ApplyLinear(g, p.proj, cond);  // 1 x 2*dim
  Graph::Var scale = g->SliceCols(mod, 0, p.dim);
  Graph::Var shift = g->SliceCols(mod, p.dim, 2 * p.dim);
  Tensor ones(1, p.dim);
  for (auto& v : ones.data) v = 1.0;
  Graph::Var one_plus = g->Add(g->Input(ones), scale);
  return g->AddRow(g->MulRow(h, one_plus), shift);
}

AttnParams MakeAttn(ParamStore* ps, const std::string& name, int dim,
                    int heads, Rng* rng) {
  ACN_CHECK(dim % heads == 0, "MakeAttn: dim not divisible by heads");
  AttnParams p;
  p.q = MakeLinear(ps, name + ".q", dim, dim, rng);
  p.k = MakeLinear(ps, name + ".k", dim, dim, rng);
  p.v = MakeLinear(ps, name + ".v", dim, dim, rng);
  p.o = MakeLinear(ps, name + ".o", dim, dim, rng);
  p.heads = heads;
  p.dim = dim;
  return p;
}

Graph::Var ApplyAttn(Graph* g, const AttnParams& p, Graph::Var x_q,
                     Graph::Var x_kv, const Tensor* mask) {
  const int dh = p.dim / p.heads;
  Graph::Var q = ApplyLinear(g, p.q, x_q);
  Graph::Var k = ApplyLinear(g, p.k, x_kv);
  Graph::Var v = ApplyLinear(g, p.v, x_kv);
  std::vector<Graph::Var> heads;
  heads.reserve(p.heads);
  for (int h = 0; h < p.heads; ++h) {
    Graph::Var qh = g->SliceCols(q, h * dh, (h + 1) * dh);
    Graph::Var kh = g->SliceCols(k, h * dh, (h + 1) * dh);
    Graph::Var vh = g->SliceCols(v, h * dh, (h + 1) * dh);
    Graph::Var logits = g->Scale(g->MatMulNT(qh, kh), 1.0 / std::sqrt(dh));
    if (mask != nullptr) logits = g->Add(logits, g->Input(*mask));
    Graph::Var attn = g->SoftmaxRows(logits);
    heads.push_back(g->MatMul(attn, vh));
  }
  return ApplyLinear(g, p.o, g->ConcatCols(heads));
}

FfnParams MakeFfn(ParamStore* ps, const std::string& name, int dim, int hidden,
                  Rng* rng) {
  FfnParams p;
  p.in = MakeLinear(ps, name + ".in", dim, hidden, rng);
  p.out = MakeLinear(ps, name + ".out", hidden, dim, rng);
  return p;
}

Graph::Var ApplyFfn(Graph* g, const FfnParams& p, Graph::Var x) {
  return ApplyLinear(g, p.out, g->Gelu(ApplyLinear(g, p.in, x)));
}

BlockParams MakeBlock(ParamStore* ps, const std::string& name, int dim,
                      int heads, int ffn_hidden, int cond_dim, bool cross,
                      Rng* rng) {
  BlockParams p;
  p.norm1 = MakeAdaLn(ps, name + ".n1", dim, cond_dim);
  p.self_attn = MakeAttn(ps, name + ".self", dim, heads, rng);
  if (cross) {
    p.norm3 = MakeAdaLn(ps, name + ".n3", dim, cond_dim);
    p.cross_attn = MakeAttn(ps, name + ".cross", dim, heads, rng);
    p.has_cross = true;
  }
  p.norm2 = MakeAdaLn(ps, name + ".n2", dim, cond_dim);
  p.ffn = MakeFfn(ps, name + ".ffn", dim, ffn_hidden, rng);
  return p;
}

Graph::Var ApplyBlock(Graph* g, const BlockParams& p, Graph::Var x,
                      Graph::Var cond, const Tensor* self_mask,
                      Graph::Var memory, const Tensor* cross_mask) {
  Graph::Var n1 = ApplyAdaLn(g, p.norm1, x, cond);
  x = g->Add(x, ApplyAttn(g, p.self_attn, n1, n1, self_mask));
  if (p.has_cross) {
    ACN_CHECK(memory >= 0, "ApplyBlock: cross block without memory");
    x = g->Add(x, ApplyAttn(g, p.cross_attn, ApplyAdaLn(g, p.norm3, x, cond),
                            memory, cross_mask));
  }
  x = g->Add(x, ApplyFfn(g, p.ffn, ApplyAdaLn(g, p.norm2, x, cond)));
  return x;
}

Tensor SinusoidalPositions(int n, int dim) {
  Tensor t(n, dim);
  for (int pos = 0; pos < n; ++pos) {
    for (int i = 0; i < dim / 2; ++i) {
      double freq = std::pow(10000.0, -2.0 * i / dim);
      t.at(pos, 2 * i) = std::sin(pos * freq);
      t.at(pos, 2 * i + 1) = std::cos(pos * freq);
    }
  }
  return t;
}

Tensor SinusoidalScalar(double value, int dim, double scale) {
  Tensor t(1, dim);
  for (int i = 0; i < dim / 2; ++i) {
    double freq = std::pow(scale, -2.0 * i / dim);
    t.at(0, 2 * i) = std::sin(value * freq);
    t.at(0, 2 * i + 1) = std::cos(value * freq);
  }
  return t;
}

Tensor CausalMask(int n) {
  Tensor m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) m.at(i, j) = -1e30;
  return m;
}

}  // namespace accnorm
