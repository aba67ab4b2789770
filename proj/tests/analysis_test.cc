// tests/analysis_test.cc

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
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "analysis/analysis.h"
#include "base/io.h"
#include "base/rng.h"
#include "doctest.h"
#include "synthgen/synthgen.h"
#include "test_util.h"
#include "token/codec.h"

using namespace accnorm;
using namespace accnorm::test;

namespace {

// Exhaustive minimum total cost over all monotone alignments with steps
// {(1,0),(0,1),(1,1)} starting at (0,0) and ending at (n-1,m-1).
double BruteDtwTotal(const Tensor& a, const Tensor& b, int i, int j) {
  double d = 0.0;
  for (int c = 0; c < a.cols; ++c) {
    const double v = a.at(i, c) - b.at(j, c);
    d += v * v;
  }
  d = std::sqrt(d);
  if (i == 0 && j == 0) return d;
  double best = 1e300;
  if (i > 0 && j > 0) best = std::min(best, BruteDtwTotal(a, b, i - 1, j - 1));
  if (i > 0) best = std::min(best, BruteDtwTotal(a, b, i - 1, j));
  if (j > 0) best = std::min(best, BruteDtwTotal(a, b, i, j - 1));
  return d + best;
}

int BruteEdit(const std::vector<int>& ref, const std::vector<int>& hyp,
              size_t i, size_t j) {
  if (i == ref.size()) return static_cast<int>(hyp.size() - j);
  if (j == hyp.size()) return static_cast<int>(ref.size() - i);
  int best = BruteEdit(ref, hyp, i + 1, j + 1) + (ref[i] != hyp[j] ? 1 : 0);
  best = std::min(best, BruteEdit(ref, hyp, i + 1, j) + 1);
  best = std::min(best, BruteEdit(ref, hyp, i, j + 1) + 1);
  return best;
}

}  // namespace

TEST_CASE("distribution counting matches the hand example") {
  AlignedFrames af;
  af.tokens = {3, 3, 4};
  af.phones = {1, 1, 1};
  PhoneTokenDistribution d = CollectDistributions({af}, 2, 6, 0.5);
  CHECK(d.counts.at(1, 3) == 2.0);
  CHECK(d.counts.at(1, 4) == 1.0);
  CHECK(d.counts.at(1, 0) == 0.0);

  // Smoothed rows are positive and normalized; the empty phone row is
  // uniform and flagged.
  for (int p = 0; p < 2; ++p) {
    double sum = 0.0;
    for (int t = 0; t < 6; ++t) {
      CHECK(d.probs.at(p, t) > 0.0);
      sum += d.probs.at(p, t);
    }
    CHECK(std::fabs(sum - 1.0) < 1e-9);
  }
  CHECK(d.empty_phone[0] == 1);
  CHECK(d.empty_phone[1] == 0);
  CHECK(std::fabs(d.probs.at(1, 3) - 2.5 / 6.0) < 1e-12);

  // Unlabeled frames are skipped.
  AlignedFrames skip;
  skip.tokens = {0, 1};
  skip.phones = {-1, 0};
  PhoneTokenDistribution s = CollectDistributions({skip}, 1, 2, 0.5);
  CHECK(s.counts.at(0, 0) == 0.0);
  CHECK(s.counts.at(0, 1) == 1.0);

  // alpha = 0 keeps raw frequencies and still falls back to uniform on an
  // empty phone.
  PhoneTokenDistribution raw = CollectDistributions({af}, 2, 6, 0.0);
  CHECK(raw.probs.at(1, 3) == 2.0 / 3.0);
  CHECK(raw.probs.at(0, 0) == 1.0 / 6.0);
  CHECK(raw.empty_phone[0] == 1);

  CHECK_THROWS_AS(CollectDistributions({af}, 1, 6, 0.5),
                  std::invalid_argument);
}

TEST_CASE("counted distributions recover the generator emissions") {
  CorpusSpec spec;
  spec.n_phones = 10;
  spec.vocab = 24;
  spec.feat_dim = 6;
  spec.speaker_dim = 4;
  spec.seed = 404;
  Generator gen(spec);
  std::vector<AlignedFrames> frames;
  std::vector<long> phone_frames(spec.n_phones, 0);
  long total = 0;
  for (int i = 0; total < 60000; ++i) {
    Utterance u = gen.SampleNative(12, DeriveSeed(9001, i));
    AlignedFrames af;
    af.tokens = u.tokens;
    af.phones = u.alignment;
    for (int p : u.alignment) ++phone_frames[p];
    total += static_cast<long>(u.tokens.size());
    frames.push_back(std::move(af));
  }
  PhoneTokenDistribution d =
      CollectDistributions(frames, spec.n_phones, spec.vocab, 0.5);
  const PhoneInventory& inv = gen.inventory();
  for (int p = 0; p < spec.n_phones; ++p) {
    if (phone_frames[p] < 2000) continue;
    double tv = 0.0;
    for (int t = 0; t < spec.vocab; ++t)
      tv += std::fabs(d.probs.at(p, t) - inv.tokens_per_phone[p][t]);
    CHECK(tv / 2.0 < 0.05);
  }
}

TEST_CASE("kl matrix is zero on identity and matches the hand value") {
  AlignedFrames e0;
  e0.tokens = {0};
  e0.phones = {0};
  AlignedFrames r0;
  r0.tokens = {1};
  r0.phones = {0};
  PhoneTokenDistribution eval = CollectDistributions({e0}, 1, 2, 0.5);
  PhoneTokenDistribution ref = CollectDistributions({r0}, 1, 2, 0.5);

  // counts (1,0) and (0,1) smoothed with alpha 0.5 over V=2 give (3/4,1/4)
  // and (1/4,3/4); KL = 3/4 log 3 - 1/4 log 3 = log(3)/2.
  Tensor kl = KlMatrix(eval, ref);
  CHECK(std::fabs(kl.at(0, 0) - 0.5 * std::log(3.0)) < 1e-12);

  Tensor self = KlMatrix(eval, eval);
  CHECK(self.at(0, 0) == 0.0);

  // Random distributions: non-negative everywhere, zero diagonal against
  // themselves.
  Rng rng(77);
  std::vector<AlignedFrames> batch;
  for (int i = 0; i < 6; ++i) {
    AlignedFrames af;
    for (int k = 0; k < 40; ++k) {
      af.tokens.push_back(static_cast<int>(rng.uniform_int(8)));
      af.phones.push_back(static_cast<int>(rng.uniform_int(4)));
    }
    batch.push_back(af);
  }
  PhoneTokenDistribution a = CollectDistributions(batch, 4, 8, 0.5);
  std::reverse(batch.begin(), batch.end());
  batch.pop_back();
  PhoneTokenDistribution b = CollectDistributions(batch, 4, 8, 0.5);
  Tensor m = KlMatrix(a, b);
  for (double v : m.data) CHECK(v >= 0.0);
  std::vector<double> diag = KlDiagonal(KlMatrix(a, a));
  for (double v : diag) CHECK(v == 0.0);

  PhoneTokenDistribution wrong = CollectDistributions(batch, 4, 9, 0.5);
  CHECK_THROWS_AS(KlMatrix(a, wrong), std::invalid_argument);
  CHECK_THROWS_AS(KlDiagonal(Tensor(2, 3)), std::invalid_argument);
}

TEST_CASE("token error rate follows the edit-distance contract") {
  std::vector<int> ref = {1, 2, 3, 4};
  CHECK(TokenErrorRate(ref, ref) == 0.0);
  CHECK(TokenErrorRate({}, ref) == 1.0);
  CHECK_THROWS_AS(TokenErrorRate(ref, {}), std::invalid_argument);

  Rng rng(505);
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<int> r, h;
    const int nr = 1 + static_cast<int>(rng.uniform_int(6));
    const int nh = static_cast<int>(rng.uniform_int(7));
    for (int i = 0; i < nr; ++i)
      r.push_back(static_cast<int>(rng.uniform_int(4)));
    for (int i = 0; i < nh; ++i)
      h.push_back(static_cast<int>(rng.uniform_int(4)));
    const double rate = TokenErrorRate(h, r);
    CHECK(rate == doctest::Approx(static_cast<double>(BruteEdit(r, h, 0, 0)) /
                                  r.size())
                      .epsilon(1e-12));

    // Consistent relabeling leaves the rate unchanged.
    auto relabel = [](std::vector<int> v) {
      for (int& x : v) x = (x * 7 + 3) % 29;
      return v;
    };
    CHECK(TokenErrorRate(relabel(h), relabel(r)) == rate);
  }

  TerAccumulator acc;
  acc.Add({1, 2}, {1, 2});
  acc.Add({}, {5, 5});
  CHECK(acc.pairs() == 2);
  CHECK(acc.Rate() == doctest::Approx(2.0 / 4.0).epsilon(1e-12));
  TerAccumulator empty;
  CHECK_THROWS_AS(empty.Rate(), std::invalid_argument);
}

TEST_CASE("dtw absorbs uniform duplication and matches brute force") {
  Rng rng(606);
  Tensor a = Tensor::Gaussian(5, 3, rng);
  DtwResult self = DtwDistance(a, a);
  CHECK(self.total == 0.0);
  CHECK(self.mean == 0.0);
  CHECK(self.path_len == 5);

  // Every frame duplicated: a uniform 2x time warp costs nothing.
  Tensor dup(10, 3);
  for (int i = 0; i < 10; ++i)
    for (int c = 0; c < 3; ++c) dup.at(i, c) = a.at(i / 2, c);
  DtwResult warp = DtwDistance(dup, a);
  CHECK(warp.total == 0.0);
  CHECK(warp.mean == 0.0);

  for (int trial = 0; trial < 30; ++trial) {
    Tensor g = Tensor::Gaussian(3, 2, rng);
    Tensor r = Tensor::Gaussian(2, 2, rng);
    DtwResult got = DtwDistance(g, r);
    CHECK(got.total ==
          doctest::Approx(BruteDtwTotal(g, r, 2, 1)).epsilon(1e-12));
    CHECK(got.mean == doctest::Approx(got.total / got.path_len));
    CHECK(got.total > 0.0);
  }

  Tensor wide(2, 4);
  CHECK_THROWS_AS(DtwDistance(a, wide), std::invalid_argument);
}

TEST_CASE("speaker recovery inverts the feature embedding") {
  CHECK(Cosine({1, 0, 0}, {1, 0, 0}) == doctest::Approx(1.0));
  CHECK(Cosine({1, 0, 0}, {0, 2, 0}) == doctest::Approx(0.0));
  CHECK_THROWS_AS(Cosine({0, 0}, {1, 1}), std::invalid_argument);

  Rng rng(707);
  const int ds = 5, feat = 9, vocab = 7, frames = 40;
  Tensor emb = Tensor::Gaussian(vocab, feat, rng);
  Tensor proj = Tensor::Gaussian(ds, feat, rng);
  std::vector<double> spk(ds);
  for (double& v : spk) v = rng.gaussian();

  std::vector<int> toks(frames);
  Tensor feats(frames, feat);
  for (int t = 0; t < frames; ++t) {
    toks[t] = static_cast<int>(rng.uniform_int(vocab));
    for (int c = 0; c < feat; ++c) {
      double off = 0.0;
      for (int i = 0; i < ds; ++i) off += spk[i] * proj.at(i, c);
      feats.at(t, c) = emb.at(toks[t], c) + off;
    }
  }
  std::vector<double> rec = RecoverSpeaker(feats, toks, emb, proj);
  REQUIRE(rec.size() == spk.size());
  for (int i = 0; i < ds; ++i) CHECK(std::fabs(rec[i] - spk[i]) < 1e-9);

  // Small feature noise still leaves a near-parallel estimate.
  for (double& v : feats.data) v += 0.05 * rng.gaussian();
  std::vector<double> noisy = RecoverSpeaker(feats, toks, emb, proj);
  CHECK(Cosine(noisy, spk) > 0.99);
}

TEST_CASE("report files are deterministic and carry the config hash") {
  std::string dir = ScratchDir("analysis_report");
  const std::string hash = "deadbeef01234567";

  std::vector<std::pair<std::string, double>> rows = {
      {"ter_identity", 0.51}, {"ter_converted", 0.17}};
  WriteMetricsCsv(dir + "/metrics.csv", hash, rows);
  WriteMetricsCsv(dir + "/metrics2.csv", hash, rows);
  std::string one = ReadFile(dir + "/metrics.csv");
  CHECK(one == ReadFile(dir + "/metrics2.csv"));
  CHECK(one.find("# config_hash=" + hash) == 0);
  CHECK(one.find("ter_converted,0.17") != std::string::npos);

  WriteMetricsCsv(dir + "/empty.csv", hash, {});
  CHECK(ReadFile(dir + "/empty.csv") ==
        "# config_hash=" + hash + "\nmetric,value\n");

  Tensor m(2, 2);
  m.at(0, 0) = 0.25;
  m.at(1, 1) = 1.0 / 3.0;
  WriteMatrixCsv(dir + "/kl.csv", hash, m);
  std::string grid = ReadFile(dir + "/kl.csv");
  CHECK(grid.find("0.25,0") != std::string::npos);
  CHECK(grid.find("0,0.33333333333333331") != std::string::npos);

  WriteDurationsCsv(dir + "/durations.csv", hash,
                    {{"utt1", "controlled", 100, 97, 100}});
  CHECK(ReadFile(dir + "/durations.csv")
            .find("utt1,controlled,100,97,100") != std::string::npos);

  WriteHeatmapPpm(dir + "/kl.ppm", m);
  std::string ppm = ReadFile(dir + "/kl.ppm");
  CHECK(ppm.substr(0, 2) == "P6");
  const std::string head = "P6\n24 24\n255\n";
  CHECK(ppm.size() == head.size() + 24 * 24 * 3);
  WriteHeatmapPpm(dir + "/kl2.ppm", m);
  CHECK(ppm == ReadFile(dir + "/kl2.ppm"));
}
