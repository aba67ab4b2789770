// autodiff/tape.cc

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

#include "autodiff/tape.h"

#include <algorithm>
#include <cmath>
#include <memory>

namespace accnorm {

namespace {
constexpr double kLnEps = 1e-5;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double LogAdd(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::fabs(a - b)));
}
}  // namespace

int ParamStore::Add(const std::string& name, const Tensor& init) {
  ACN_CHECK(index_.find(name) == index_.end(), "duplicate param: " << name);
  Info info;
  info.name = name;
  info.rows = init.rows;
  info.cols = init.cols;
  info.offset = flat_.size();
  flat_.insert(flat_.end(), init.data.begin(), init.data.end());
  infos_.push_back(info);
  index_[name] = static_cast<int>(infos_.size()) - 1;
  return index_[name];
}

int ParamStore::AddZero(const std::string& name, int rows, int cols) {
  return Add(name, Tensor(rows, cols));
}

int ParamStore::Find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

Tensor ParamStore::Copy(int id) const {
  const Info& info = infos_[id];
  Tensor t(info.rows, info.cols);
  std::copy(Data(id), Data(id) + t.size(), t.data.begin());
  return t;
}

Graph::Var Graph::NewNode(Tensor value, bool needs_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return static_cast<Var>(nodes_.size()) - 1;
}

Tensor& Graph::GradBuf(Var v) {
  Node& n = nodes_[v];
  if (n.grad.rows == 0) n.grad = Tensor(n.value.rows, n.value.cols);
  return n.grad;
}

Graph::Var Graph::Input(Tensor t) { return NewNode(std::move(t), false); }

Graph::Var Graph::Param(int param_id) {
  ACN_CHECK(params_ != nullptr, "Param on a store-less graph");
  auto it = param_vars_.find(param_id);
  if (it != param_vars_.end()) return it->second;
  Var v = NewNode(params_->Copy(param_id), true);
  nodes_[v].param_id = param_id;
  param_vars_[param_id] = v;
  return v;
}

Graph::Var Graph::MatMul(Var a, Var b) {
  Tensor out;
  GemmNN(Value(a), Value(b), &out);
  Var v = NewNode(std::move(out), NeedsGrad(a) || NeedsGrad(b));
  if (nodes_[v].needs_grad) {
    nodes_[v].backward = [a, b, v](Graph* g) {
      const Tensor& dy = g->nodes_[v].grad;
      Tensor tmp;
      if (g->NeedsGrad(a)) {
        GemmNT(dy, g->Value(b), &tmp);
        Axpy(1.0, tmp, &g->GradBuf(a));
      }
      if (g->NeedsGrad(b)) {
        GemmTN(g->Value(a), dy, &tmp);
        Axpy(1.0, tmp, &g->GradBuf(b));
      }
    };
  }
  return v;
}

Graph::Var Graph::MatMulNT(Var a, Var b) {
  Tensor out;
  GemmNT(Value(a), Value(b), &out);
  Var v = NewNode(std::move(out), NeedsGrad(a) || NeedsGrad(b));
  if (nodes_[v].needs_grad) {
    nodes_[v].backward = [a, b, v](Graph* g) {
      const Tensor& dy = g->nodes_[v].grad;
      Tensor tmp;
      if (g->NeedsGrad(a)) {
        GemmNN(dy, g->Value(b), &tmp);
        Axpy(1.0, tmp, &g->GradBuf(a));
      }
      if (g->NeedsGrad(b)) {
        GemmTN(dy, g->Value(a), &tmp);
        Axpy(1.0, tmp, &g->GradBuf(b));
      }
    };
  }
  return v;
}

Graph::Var Graph::Add(Var a, Var b) {
  ACN_CHECK(Value(a).same_shape(Value(b)), "Add: shape mismatch");
  Tensor out = Value(a);
  Axpy(1.0, Value(b), &out);
  Var v = NewNode(std::move(out), NeedsGrad(a) || NeedsGrad(b));
  if (nodes_[v].needs_grad) {
    nodes_[v].backward = [a, b, v](Graph* g) {
      const Tensor& dy = g->nodes_[v].grad;
      if (g->NeedsGrad(a)) Axpy(1.0, dy, &g->GradBuf(a));
      if (g->NeedsGrad(b)) Axpy(1.0, dy, &g->GradBuf(b));
    };
  }
  return v;
}

Graph::Var Graph::Sub(Var a, Var b) {
  ACN_CHECK(Value(a).same_shape(Value(b)), "Sub: shape mismatch");
  Tensor out = Value(a);
  Axpy(-1.0, Value(b), &out);
  Var v = NewNode(std::move(out), NeedsGrad(a) || NeedsGrad(b));
  if (nodes_[v].needs_grad) {
    nodes_[v].backward = [a, b, v](Graph* g) {
      const Tensor& dy = g->nodes_[v].grad;
      if (g->NeedsGrad(a)) Axpy(1.0, dy, &g->GradBuf(a));
      if (g->NeedsGrad(b)) Axpy(-1.0, dy, &g->GradBuf(b));
    };
  }
  return v;
}

Graph::Var Graph::Mul(Var a, Var b) {
  ACN_CHECK(Value(a).same_shape(Value(b)), "Mul: shape mismatch");
  Tensor out = Value(a);
  for (size_t i = 0; i < out.size(); ++i) out.data[i] *= Value(b).data[i];
  Var v = NewNode(std::move(out), NeedsGrad(a) || NeedsGrad(b));
  if (nodes_[v].needs_grad) {
    nodes_[v].backward = [a, b, v](Graph* g) {
      const Tensor& dy = g->nodes_[v].grad;
      if (g->NeedsGrad(a)) {
        Tensor& da = g->GradBuf(a);
        const Tensor& bv = g->Value(b);
        for (size_t i = 0; i < dy.size(); ++i) da.data[i] += dy.data[i] * bv.data[i];
      }
      if (g->NeedsGrad(b)) {
        Tensor& db = g->GradBuf(b);
        const Tensor& av = g->Value(a);
        for (size_t i = 0; i < dy.size(); ++i) db.data[i] += dy.data[i] * av.data[i];
      }
    };
  }
  return v;
}

Graph::Var Graph::Scale(Var a, double s) {
  Tensor out = Value(a);
  for (auto& x : out.data) x *= s;
  Var v = NewNode(std::move(out), NeedsGrad(a));
  if (nodes_[v].needs_grad) {
    nodes_[v].backward = [a, s, v](Graph* g) {
      Axpy(s, g->nodes_[v].grad, &g->GradBuf(a));
    };
  }
  return v;
}

Graph::Var Graph::AddRow(Var x, Var row) {
  const Tensor& xv = Value(x);
  const Tensor& rv = Value(row);
  ACN_CHECK(rv.rows == 1 && rv.cols == xv.cols, "AddRow: bad row shape");
  Tensor out = xv;
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) out.at(i, j) += rv.at(0, j);
  Var v = NewNode(std::move(out), NeedsGrad(x) || NeedsGrad(row));
  if (nodes_[v].needs_grad) {
    nodes_[v].backward = [x, row, v](Graph* g) {
      const Tensor& dy = g->nodes_[v].grad;
      if (g->NeedsGrad(x)) Axpy(1.0, dy, &g->GradBuf(x));
      if (g->NeedsGrad(row)) {
        Tensor& dr = g->GradBuf(row);
        for (int i = 0; i < dy.rows; ++i)
          for (int j = 0; j < dy.cols; ++j) dr.at(0, j) += dy.at(i, j);
      }
    };
  }
  return v;
}

Graph::Var Graph::MulRow(Var x, Var row) {
  const Tensor& xv = Value(x);
  const Tensor& rv = Value(row);
  ACN_CHECK(rv.rows == 1 && rv.cols == xv.cols, "MulRow: bad row shape");
  Tensor out = xv;
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) out.at(i, j) *= rv.at(0, j);
  Var v = NewNode(std::move(out), NeedsGrad(x) || NeedsGrad(row));
  if (nodes_[v].needs_grad) {
    nodes_[v].backward = [x, row, v](Graph* g) {
      const Tensor& dy = g->nodes_[v].grad;
      const Tensor& xv2 = g->Value(x);
      const Tensor& rv2 = g->Value(row);
      if (g->NeedsGrad(x)) {
        Tensor& dx = g->GradBuf(x);
        for (int i = 0; i < dy.rows; ++i)
          for (int j = 0; j < dy.cols; ++j) dx.at(i, j) += dy.at(i, j) * rv2.at(0, j);
      }
      if (g->NeedsGrad(row)) {
        Tensor& dr = g->GradBuf(row);
        for (int i = 0; i < dy.rows; ++i)
          for (int j = 0; j < dy.cols; ++j) dr.at(0, j) += dy.at(i, j) * xv2.at(i, j);
      }
    };
  }
  return v;
}

Graph::Var Graph::Gelu(Var x) {
  Tensor out = Value(x);
  for (auto& t : out.data) {
    double u = kGeluC * (t + kGeluA * t * t * t);
    t = 0.5 * t * (1.0 + std::tanh(u));
  }
  Var v = NewNode(std::move(out), NeedsGrad(x));
  if (nodes_[v].needs_grad) {
    nodes_[v].backward = [x, v](Graph* g) {
      const Tensor& dy = g->nodes_[v].grad;
      const Tensor& xv = g->Value(x);
      Tensor& dx = g->GradBuf(x);
      for (size_t i = 0; i < dy.size(); ++i) {
        double t = xv.data[i];
        double u = kGeluC * (t + kGeluA * t * t * t);
        double th = std::tanh(u);
        double d = 0.5 * (1.0 + th) +
                   0.5 * t * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * t * t);
        dx.data[i] += dy.data[i] * d;
      }
    };
  }
  return v;
}

Graph::Var Graph::Tanh(Var x) {
  Tensor out = Value(x);
  for (auto& t : out.data) t = std::tanh(t);
  Var v = NewNode(std::move(out), NeedsGrad(x));
  if (nodes_[v].needs_grad) {
    nodes_[v].backward = [x, v](Graph* g) {
      const Tensor& dy = g->nodes_[v].grad;
      const Tensor& yv = g->Value(v);
      Tensor& dx = g->GradBuf(x);
      for (size_t i = 0; i < dy.size(); ++i)
        dx.data[i] += dy.data[i] * (1.0 - yv.data[i] * yv.data[i]);
    };
  }
  return v;
}

Graph::Var Graph::LayerNorm(Var x, Var gain, Var bias) {
  const Tensor& xv = Value(x);
  const Tensor& gv = Value(gain);
  const Tensor& bv = Value(bias);
  ACN_CHECK(gv.rows == 1 && gv.cols == xv.cols, "LayerNorm: bad gain shape");
  ACN_CHECK(bv.rows == 1 && bv.cols == xv.cols, "LayerNorm: bad bias shape");
  const int r = xv.rows, c = xv.cols;
  // Cache normalized activations and inverse stddevs for the backward pass.
  auto xhat = std::make_shared<Tensor>(r, c);
  auto inv_sigma = std::make_shared<std::vector<double>>(r);
  Tensor out(r, c);
  for (int i = 0; i < r; ++i) {
    const double* xi = xv.row(i);
    double mu = 0.0;
    for (int j = 0; j < c; ++j) mu += xi[j];
    mu /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= c;
    double inv = 1.0 / std::sqrt(var + kLnEps);
    (*inv_sigma)[i] = inv;
    for (int j = 0; j < c; ++j) {
      double xh = (xi[j] - mu) * inv;
      xhat->at(i, j) = xh;
      out.at(i, j) = xh * gv.at(0, j) + bv.at(0, j);
    }
  }
  Var v = NewNode(std::move(out), NeedsGrad(x) || NeedsGrad(gain) || NeedsGrad(bias));
  if (nodes_[v].needs_grad) {
    nodes_[v].backward = [x, gain, bias, v, xhat, inv_sigma](Graph* g) {
      const Tensor& dy = g->nodes_[v].grad;
      const Tensor& gv2 = g->Value(gain);
      const int r2 = dy.rows, c2 = dy.cols;
      if (g->NeedsGrad(gain)) {
        Tensor& dg = g->GradBuf(gain);
        for (int i = 0; i < r2; ++i)
          for (int j = 0; j < c2; ++j) dg.at(0, j) += dy.at(i, j) * xhat->at(i, j);
      }
      if (g->NeedsGrad(bias)) {
        Tensor& db = g->GradBuf(bias);
        for (int i = 0; i < r2; ++i)
          for (int j = 0; j < c2; ++j) db.at(0, j) += dy.at(i, j);
      }
      if (g->NeedsGrad(x)) {
        Tensor& dx = g->GradBuf(x);
        for (int i = 0; i < r2; ++i) {
          double mean_dxh = 0.0, mean_dxh_xh = 0.0;
          for (int j = 0; j < c2; ++j) {
            double dxh = dy.at(i, j) * gv2.at(0, j);
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xhat->at(i, j);
          }
          mean_dxh /= c2;
          mean_dxh_xh /= c2;
          const double inv = (*inv_sigma)[i];
          for (int j = 0; j < c2; ++j) {
            double dxh = dy.at(i, j) * gv2.at(0, j);
            dx.at(i, j) += inv * (dxh - mean_dxh - xhat->at(i, j) * mean_dxh_xh);
          }
        }
      }
    };
  }
  return v;
}

Graph::Var Graph::SoftmaxRows(Var x) {
  Tensor out = Value(x);
  accnorm::SoftmaxRows(&out);
  Var v = NewNode(std::move(out), NeedsGrad(x));
  if (nodes_[v].needs_grad) {
    nodes_[v].backward = [x, v](Graph* g) {
      const Tensor& dy = g->nodes_[v].grad;
      const Tensor& yv = g->Value(v);
      Tensor& dx = g->GradBuf(x);
      for (int i = 0; i < dy.rows; ++i) {
        double dot = 0.0;
        for (int j = 0; j < dy.cols; ++j) dot += dy.at(i, j) * yv.at(i, j);
        for (int j = 0; j < dy.cols; ++j)
          dx.at(i, j) += yv.at(i, j) * (dy.at(i, j) - dot);
      }
    };
  }
  return v;
}

Graph::Var Graph::SliceCols(Var x, int c0, int c1) {
  const Tensor& xv = Value(x);
  ACN_CHECK(0 <= c0 && c0 < c1 && c1 <= xv.cols, "SliceCols: bad range");
  Tensor out(xv.rows, c1 - c0);
  for (int i = 0; i < xv.rows; ++i)
    for (int j = c0; j < c1; ++j) out.at(i, j - c0) = xv.at(i, j);
  Var v = NewNode(std::move(out), NeedsGrad(x));
  if (nodes_[v].needs_grad) {
    nodes_[v].backward = [x, c0, v](Graph* g) {
      const Tensor& dy = g->nodes_[v].grad;
      Tensor& dx = g->GradBuf(x);
      for (int i = 0; i < dy.rows; ++i)
        for (int j = 0; j < dy.cols; ++j) dx.at(i, c0 + j) += dy.at(i, j);
    };
  }
  return v;
}

Graph::Var Graph::ConcatCols(const std::vector<Var>& xs) {
  ACN_CHECK(!xs.empty(), "ConcatCols: empty");
  int rows = Value(xs[0]).rows;
  int cols = 0;
  bool needs = false;
  for (Var x : xs) {
    ACN_CHECK(Value(x).rows == rows, "ConcatCols: row mismatch");
    cols += Value(x).cols;
    needs = needs || NeedsGrad(x);
  }
  Tensor out(rows, cols);
  int off = 0;
  for (Var x : xs) {
    const Tensor& xv = Value(x);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < xv.cols; ++j) out.at(i, off + j) = xv.at(i, j);
    off += xv.cols;
  }
  Var v = NewNode(std::move(out), needs);
  if (needs) {
    std::vector<Var> parts = xs;
    nodes_[v].backward = [parts, v](Graph* g) {
      const Tensor& dy = g->nodes_[v].grad;
      int off2 = 0;
      for (Var x : parts) {
        const int c = g->Value(x).cols;
        if (g->NeedsGrad(x)) {
          Tensor& dx = g->GradBuf(x);
          for (int i = 0; i < dy.rows; ++i)
            for (int j = 0; j < c; ++j) dx.at(i, j) += dy.at(i, off2 + j);
        }
        off2 += c;
      }
    };
  }
  return v;
}

Graph::Var Graph::Rows(Var table, std::vector<int> ids) {
  const Tensor& tv = Value(table);
  Tensor out(static_cast<int>(ids.size()), tv.cols);
  for (size_t i = 0; i < ids.size(); ++i) {
    ACN_CHECK(ids[i] >= 0 && ids[i] < tv.rows, "Rows: id out of range");
    std::copy(tv.row(ids[i]), tv.row(ids[i]) + tv.cols, out.row(static_cast<int>(i)));
  }
  Var v = NewNode(std::move(out), NeedsGrad(table));
  if (nodes_[v].needs_grad) {
    nodes_[v].backward = [table, ids, v](Graph* g) {
      const Tensor& dy = g->nodes_[v].grad;
      Tensor& dt = g->GradBuf(table);
      for (size_t i = 0; i < ids.size(); ++i)
        for (int j = 0; j < dy.cols; ++j)
          dt.at(ids[i], j) += dy.at(static_cast<int>(i), j);
    };
  }
  return v;
}

Graph::Var Graph::RepeatRows(Var x, std::vector<int> counts) {
  const Tensor& xv = Value(x);
  ACN_CHECK(static_cast<int>(counts.size()) == xv.rows, "RepeatRows: count size");
  int total = 0;
  for (int c : counts) {
    ACN_CHECK(c >= 1, "RepeatRows: count < 1");
    total += c;
  }
  Tensor out(total, xv.cols);
  int r = 0;
  for (int i = 0; i < xv.rows; ++i)
    for (int k = 0; k < counts[i]; ++k, ++r)
      std::copy(xv.row(i), xv.row(i) + xv.cols, out.row(r));
  Var v = NewNode(std::move(out), NeedsGrad(x));
  if (nodes_[v].needs_grad) {
    nodes_[v].backward = [x, counts, v](Graph* g) {
      const Tensor& dy = g->nodes_[v].grad;
      Tensor& dx = g->GradBuf(x);
      int r2 = 0;
      for (int i = 0; i < dx.rows; ++i)
        for (int k = 0; k < counts[i]; ++k, ++r2)
          for (int j = 0; j < dy.cols; ++j) dx.at(i, j) += dy.at(r2, j);
    };
  }
  return v;
}

Graph::Var Graph::ShiftRows(Var x, int offset) {
  const Tensor& xv = Value(x);
  Tensor out(xv.rows, xv.cols);
  for (int i = 0; i < xv.rows; ++i) {
    int src = i - offset;
    if (src >= 0 && src < xv.rows)
      std::copy(xv.row(src), xv.row(src) + xv.cols, out.row(i));
  }
  Var v = NewNode(std::move(out), NeedsGrad(x));
  if (nodes_[v].needs_grad) {
    nodes_[v].backward = [x, offset, v](Graph* g) {
      const Tensor& dy = g->nodes_[v].grad;
      Tensor& dx = g->GradBuf(x);
      for (int i = 0; i < dy.rows; ++i) {
        int src = i - offset;
        if (src >= 0 && src < dy.rows)
          for (int j = 0; j < dy.cols; ++j) dx.at(src, j) += dy.at(i, j);
      }
    };
  }
  return v;
}

Graph::Var Graph::SumAll(Var x) {
  Tensor out(1, 1);
  for (double t : Value(x).data) out.data[0] += t;
  Var v = NewNode(std::move(out), NeedsGrad(x));
  if (nodes_[v].needs_grad) {
    nodes_[v].backward = [x, v](Graph* g) {
      const double gval = g->nodes_[v].grad.data[0];
      Tensor& dx = g->GradBuf(x);
      for (auto& t : dx.data) t += gval;
    };
  }
  return v;
}

Graph::Var Graph::MeanAll(Var x) {
  return Scale(SumAll(x), 1.0 / static_cast<double>(Value(x).size()));
}

Graph::Var Graph::CrossEntropyRows(Var logits, std::vector<int> targets) {
  const Tensor& lv = Value(logits);
  ACN_CHECK(static_cast<int>(targets.size()) == lv.rows, "CE: target count");
  auto probs = std::make_shared<Tensor>(lv);
  accnorm::SoftmaxRows(probs.get());
  Tensor out(1, 1);
  double loss = 0.0;
  for (int i = 0; i < lv.rows; ++i) {
    ACN_CHECK(targets[i] >= 0 && targets[i] < lv.cols, "CE: target out of range");
    loss -= std::log(std::max(probs->at(i, targets[i]), 1e-300));
  }
  out.data[0] = loss;
  Var v = NewNode(std::move(out), NeedsGrad(logits));
  if (nodes_[v].needs_grad) {
    nodes_[v].backward = [logits, targets, probs, v](Graph* g) {
      const double gval = g->nodes_[v].grad.data[0];
      Tensor& dl = g->GradBuf(logits);
      for (int i = 0; i < dl.rows; ++i) {
        for (int j = 0; j < dl.cols; ++j) dl.at(i, j) += gval * probs->at(i, j);
        dl.at(i, targets[i]) -= gval;
      }
    };
  }
  return v;
}

Graph::Var Graph::CtcLoss(Var logits, std::vector<int> targets) {
  const Tensor& lv = Value(logits);
  const int T = lv.rows;
  const int C = lv.cols;
  const int blank = C - 1;
  const int U = static_cast<int>(targets.size());
  for (int u : targets) ACN_CHECK(u >= 0 && u < blank, "CTC: label out of range");

  // Extended label sequence: blank, t0, blank, t1, ..., blank.
  const int S = 2 * U + 1;
  auto label_of = [targets, blank](int s) {
    return (s % 2 == 0) ? blank : targets[(s - 1) / 2];
  };

  // Log-softmax per frame.
  auto lp = std::make_shared<Tensor>(lv);
  for (int t = 0; t < T; ++t) {
    double* r = lp->row(t);
    double mx = r[0];
    for (int j = 1; j < C; ++j) mx = std::max(mx, r[j]);
    double sum = 0.0;
    for (int j = 0; j < C; ++j) sum += std::exp(r[j] - mx);
    const double lse = mx + std::log(sum);
    for (int j = 0; j < C; ++j) r[j] -= lse;
  }

  Tensor alpha(T, S);
  for (auto& x : alpha.data) x = kNegInf;
  if (T > 0) {
    alpha.at(0, 0) = lp->at(0, blank);
    if (S > 1) alpha.at(0, 1) = lp->at(0, label_of(1));
    for (int t = 1; t < T; ++t) {
      for (int s = 0; s < S; ++s) {
        double a = alpha.at(t - 1, s);
        if (s >= 1) a = LogAdd(a, alpha.at(t - 1, s - 1));
        if (s >= 2 && s % 2 == 1 && label_of(s) != label_of(s - 2))
          a = LogAdd(a, alpha.at(t - 1, s - 2));
        if (a != kNegInf) alpha.at(t, s) = a + lp->at(t, label_of(s));
      }
    }
  }
  double log_p = kNegInf;
  if (T > 0) {
    log_p = alpha.at(T - 1, S - 1);
    if (S > 1) log_p = LogAdd(log_p, alpha.at(T - 1, S - 2));
  } else if (U == 0) {
    log_p = 0.0;  // empty input, empty target
  }

  Tensor out(1, 1);
  out.data[0] = -log_p;
  const bool feasible = (log_p != kNegInf);
  Var v = NewNode(std::move(out), NeedsGrad(logits) && feasible);
  if (!feasible || !NeedsGrad(logits) || T == 0) return v;

  // Beta excludes the emission at t, so alpha + beta is the full path mass.
  auto alpha_ptr = std::make_shared<Tensor>(std::move(alpha));
  nodes_[v].backward = [logits, lp, alpha_ptr, v, T, S, C, label_of,
                        log_p](Graph* g) {
    const double gval = g->nodes_[v].grad.data[0];
    Tensor beta(T, S);
    for (auto& x : beta.data) x = kNegInf;
    beta.at(T - 1, S - 1) = 0.0;
    if (S > 1) beta.at(T - 1, S - 2) = 0.0;
    for (int t = T - 2; t >= 0; --t) {
      for (int s = 0; s < S; ++s) {
        double b = kNegInf;
        for (int s2 = s; s2 <= std::min(S - 1, s + 2); ++s2) {
          if (s2 == s + 2 && !(s2 % 2 == 1 && label_of(s2) != label_of(s)))
            continue;
          if (beta.at(t + 1, s2) != kNegInf)
            b = LogAdd(b, lp->at(t + 1, label_of(s2)) + beta.at(t + 1, s2));
        }
        beta.at(t, s) = b;
      }
    }
    Tensor& dl = g->GradBuf(logits);
    for (int t = 0; t < T; ++t) {
      // Posterior mass per output symbol at frame t.
      std::vector<double> q(C, 0.0);
      for (int s = 0; s < S; ++s) {
        double m = alpha_ptr->at(t, s) + beta.at(t, s);
        if (m != kNegInf) q[label_of(s)] += std::exp(m - log_p);
      }
      for (int j = 0; j < C; ++j)
        dl.at(t, j) += gval * (std::exp(lp->at(t, j)) - q[j]);
    }
  };
  return v;
}

Graph::Var Graph::MseSum(Var pred, Var target) {
  ACN_CHECK(Value(pred).same_shape(Value(target)), "MseSum: shape mismatch");
  Tensor out(1, 1);
  const Tensor& pv = Value(pred);
  const Tensor& tv = Value(target);
  double loss = 0.0;
  for (size_t i = 0; i < pv.size(); ++i) {
    double d = pv.data[i] - tv.data[i];
    loss += d * d;
  }
  out.data[0] = loss;
  Var v = NewNode(std::move(out), NeedsGrad(pred) || NeedsGrad(target));
  if (nodes_[v].needs_grad) {
    nodes_[v].backward = [pred, target, v](Graph* g) {
      const double gval = g->nodes_[v].grad.data[0];
      const Tensor& pv2 = g->Value(pred);
      const Tensor& tv2 = g->Value(target);
      if (g->NeedsGrad(pred)) {
        Tensor& dp = g->GradBuf(pred);
        for (size_t i = 0; i < pv2.size(); ++i)
          dp.data[i] += 2.0 * gval * (pv2.data[i] - tv2.data[i]);
      }
      if (g->NeedsGrad(target)) {
        Tensor& dt = g->GradBuf(target);
        for (size_t i = 0; i < pv2.size(); ++i)
          dt.data[i] -= 2.0 * gval * (pv2.data[i] - tv2.data[i]);
      }
    };
  }
  return v;
}

void Graph::Backward(Var root) {
  ACN_CHECK(Value(root).rows == 1 && Value(root).cols == 1, "Backward: root not scalar");
  ACN_CHECK(std::isfinite(Value(root).data[0]), "Backward: non-finite root");
  GradBuf(root).data[0] = 1.0;
  for (int i = root; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.backward && n.grad.rows != 0) n.backward(this);
  }
}

void Graph::FlushParamGrads(std::vector<double>* flat_grad) const {
  ACN_CHECK(params_ != nullptr && flat_grad->size() == params_->TotalSize(),
            "FlushParamGrads: bad sink");
  for (const auto& [pid, var] : param_vars_) {
    const Node& n = nodes_[var];
    if (n.grad.rows == 0) continue;
    const size_t off = params_->InfoOf(pid).offset;
    for (size_t i = 0; i < n.grad.size(); ++i)
      (*flat_grad)[off + i] += n.grad.data[i];
  }
}

}  // namespace accnorm
