// tests/autodiff_test.cc

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

#include <cmath>
#include <functional>

#include "autodiff/tape.h"
#include "base/rng.h"
#include "test_util.h"

namespace accnorm {
namespace {

using Builder = std::function<Graph::Var(Graph*)>;

// Analytic gradients of every parameter entry against central differences.
void CheckAllGrads(ParamStore* ps, const Builder& build, double tol = 3e-5) {
  Graph g(ps);
  Graph::Var root = build(&g);
  REQUIRE(g.Value(root).rows == 1);
  REQUIRE(g.Value(root).cols == 1);
  g.Backward(root);
  std::vector<double> flat(ps->TotalSize(), 0.0);
  g.FlushParamGrads(&flat);
  auto loss = [&]() {
    Graph g2(ps);
    return g2.Value(build(&g2)).data[0];
  };
  for (size_t i = 0; i < ps->TotalSize(); ++i) {
    double num = test::NumericalGrad(ps, i, loss);
    bool ok = std::fabs(flat[i] - num) < 1e-7 || test::RelDiff(flat[i], num) < tol;
    if (!ok) {
      CAPTURE(i);
      CAPTURE(flat[i]);
      CAPTURE(num);
    }
    CHECK(ok);
  }
}

TEST_CASE("gradcheck matmul chain with shared parameter") {
  Rng rng(11);
  ParamStore ps;
  int w = ps.Add("w", Tensor::Gaussian(4, 4, rng, 0.5));
  int x = ps.Add("x", Tensor::Gaussian(3, 4, rng, 0.5));
  CheckAllGrads(&ps, [&](Graph* g) {
    Graph::Var xv = g->Param(x);
    Graph::Var h = g->MatMul(xv, g->Param(w));
    Graph::Var h2 = g->MatMul(h, g->Param(w));  // reuse w
    return g->MeanAll(g->Mul(h2, h2));
  });
}

TEST_CASE("gradcheck matmul NT and elementwise ops") {
  Rng rng(12);
  ParamStore ps;
  int a = ps.Add("a", Tensor::Gaussian(3, 5, rng));
  int b = ps.Add("b", Tensor::Gaussian(4, 5, rng));
  CheckAllGrads(&ps, [&](Graph* g) {
    Graph::Var c = g->MatMulNT(g->Param(a), g->Param(b));  // 3x4
    Graph::Var d = g->Scale(c, 0.7);
    Graph::Var e = g->Sub(g->Mul(c, d), g->Add(c, d));
    return g->SumAll(g->Tanh(e));
  });
}

TEST_CASE("gradcheck row broadcast and slice/concat") {
  Rng rng(13);
  ParamStore ps;
  int x = ps.Add("x", Tensor::Gaussian(4, 6, rng));
  int r = ps.Add("r", Tensor::Gaussian(1, 6, rng));
  CheckAllGrads(&ps, [&](Graph* g) {
    Graph::Var h = g->MulRow(g->AddRow(g->Param(x), g->Param(r)), g->Param(r));
    Graph::Var left = g->SliceCols(h, 0, 3);
    Graph::Var right = g->SliceCols(h, 3, 6);
    Graph::Var cat = g->ConcatCols({right, left});
    return g->MeanAll(g->Gelu(cat));
  });
}

TEST_CASE("gradcheck layer norm and softmax") {
  Rng rng(14);
  ParamStore ps;
  int x = ps.Add("x", Tensor::Gaussian(5, 8, rng));
  int gain = ps.Add("g", Tensor::Gaussian(1, 8, rng, 0.3));
  int bias = ps.Add("b", Tensor::Gaussian(1, 8, rng, 0.3));
  CheckAllGrads(&ps, [&](Graph* g) {
    Graph::Var ln = g->LayerNorm(g->Param(x), g->Param(gain), g->Param(bias));
    Graph::Var sm = g->SoftmaxRows(ln);
    return g->MseSum(sm, g->Scale(ln, 0.1));
  });
}

TEST_CASE("gradcheck gather, repeat, shift") {
  Rng rng(15);
  ParamStore ps;
  int table = ps.Add("t", Tensor::Gaussian(6, 4, rng));
  CheckAllGrads(&ps, [&](Graph* g) {
    Graph::Var got = g->Rows(g->Param(table), {0, 3, 3, 5});  // repeated id
    Graph::Var rep = g->RepeatRows(got, {2, 1, 3, 1});
    Graph::Var sh = g->ShiftRows(rep, 1);
    return g->SumAll(g->Mul(sh, rep));
  });
}

TEST_CASE("gradcheck cross entropy") {
  Rng rng(16);
  ParamStore ps;
  int x = ps.Add("x", Tensor::Gaussian(4, 7, rng));
  int w = ps.Add("w", Tensor::Gaussian(7, 5, rng));
  std::vector<int> targets = {0, 4, 2, 2};
  CheckAllGrads(&ps, [&](Graph* g) {
    Graph::Var logits = g->MatMul(g->Param(x), g->Param(w));
    return g->Scale(g->CrossEntropyRows(logits, targets), 0.25);
  });
}

TEST_CASE("gradcheck mse both sides") {
  Rng rng(17);
  ParamStore ps;
  int a = ps.Add("a", Tensor::Gaussian(3, 3, rng));
  int b = ps.Add("b", Tensor::Gaussian(3, 3, rng));
  CheckAllGrads(&ps, [&](Graph* g) {
    return g->MseSum(g->Gelu(g->Param(a)), g->Tanh(g->Param(b)));
  });
}

TEST_CASE("gradcheck ctc loss") {
  Rng rng(18);
  ParamStore ps;
  int x = ps.Add("x", Tensor::Gaussian(5, 4, rng));  // blank = 3
  std::vector<int> targets = {0, 2, 1};
  CheckAllGrads(&ps, [&](Graph* g) {
    return g->Scale(g->CtcLoss(g->Param(x), targets), 0.5);
  });
}

TEST_CASE("ctc matches brute-force enumeration on exhaustive small grid") {
  Rng rng(19);
  // 2-phone inventory plus blank.
  const int C = 3;
  for (int T = 1; T <= 6; ++T) {
    std::vector<std::vector<int>> targets = {{}};
    for (int len = 1; len <= 3; ++len) {
      std::vector<std::vector<int>> next;
      for (const auto& t : targets)
        if (static_cast<int>(t.size()) == len - 1)
          for (int p = 0; p < C - 1; ++p) {
            auto u = t;
            u.push_back(p);
            next.push_back(u);
          }
      targets.insert(targets.end(), next.begin(), next.end());
    }
    for (const auto& tgt : targets) {
      Tensor logits = Tensor::Gaussian(T, C, rng);
      Graph g;
      Graph::Var loss = g.CtcLoss(g.Input(logits), tgt);
      double got = g.Value(loss).data[0];
      double want = test::CtcBruteForce(logits, tgt);
      if (std::isinf(want)) {
        CHECK(std::isinf(got));
      } else {
        CHECK(std::fabs(got - want) <= 1e-6);
      }
    }
  }
}

TEST_CASE("ctc degenerate and infeasible cases") {
  // One frame, one target, near-certain posterior: loss near 0.
  Tensor logits(1, 2);
  logits.at(0, 0) = 40.0;
  logits.at(0, 1) = -40.0;
  Graph g;
  CHECK(g.Value(g.CtcLoss(g.Input(logits), {0})).data[0] ==
        doctest::Approx(0.0).epsilon(1e-9));

  // Target longer than input: infeasible, signaled as +inf.
  Rng rng(3);
  Tensor two = Tensor::Gaussian(1, 3, rng);
  Graph g2;
  CHECK(std::isinf(g2.Value(g2.CtcLoss(g2.Input(two), {0, 1})).data[0]));

  // Repeated labels need a separating blank: T=2 cannot host [a, a].
  Tensor t2(2, 2);
  Graph g3;
  CHECK(std::isinf(g3.Value(g3.CtcLoss(g3.Input(t2), {0, 0})).data[0]));
}

TEST_CASE("forward values of structural ops") {
  Graph g;
  Tensor t(3, 2);
  for (size_t i = 0; i < t.size(); ++i) t.data[i] = static_cast<double>(i);
  Graph::Var v = g.Input(t);

  const Tensor& rep = g.Value(g.RepeatRows(v, {2, 1, 2}));
  CHECK(rep.rows == 5);
  CHECK(rep.at(0, 0) == 0.0);
  CHECK(rep.at(1, 0) == 0.0);
  CHECK(rep.at(2, 0) == 2.0);
  CHECK(rep.at(4, 1) == 5.0);

  const Tensor& sh = g.Value(g.ShiftRows(v, 1));
  CHECK(sh.at(0, 0) == 0.0);
  CHECK(sh.at(0, 1) == 0.0);
  CHECK(sh.at(1, 0) == 0.0);
  CHECK(sh.at(2, 1) == 3.0);

  const Tensor& got = g.Value(g.Rows(v, {2, 0}));
  CHECK(got.at(0, 0) == 4.0);
  CHECK(got.at(1, 1) == 1.0);
}

TEST_CASE("backward requires finite scalar root") {
  Graph g;
  Tensor t(1, 2);
  Graph::Var v = g.Input(t);
  CHECK_THROWS_AS(g.Backward(v), std::invalid_argument);
}

}  // namespace
}  // namespace accnorm
