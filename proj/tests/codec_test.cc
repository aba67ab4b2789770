// tests/codec_test.cc

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

#include <algorithm>
#include <map>

#include "base/rng.h"
#include "token/codec.h"

namespace accnorm {
namespace {

std::vector<int> RandomSeq(Rng* rng, int max_len, int vocab) {
  std::vector<int> s(rng->uniform_int(max_len + 1));
  for (auto& t : s) t = static_cast<int>(rng->uniform_int(vocab));
  return s;
}

// Independent recursive edit distance for cross-checking the DP.
int EditRef(const std::vector<int>& a, const std::vector<int>& b, size_t i,
            size_t j, std::map<std::pair<size_t, size_t>, int>* memo) {
  if (i == a.size()) return static_cast<int>(b.size() - j);
  if (j == b.size()) return static_cast<int>(a.size() - i);
  auto key = std::make_pair(i, j);
  auto it = memo->find(key);
  if (it != memo->end()) return it->second;
  int best = EditRef(a, b, i + 1, j + 1, memo) + (a[i] != b[j] ? 1 : 0);
  best = std::min(best, EditRef(a, b, i + 1, j, memo) + 1);
  best = std::min(best, EditRef(a, b, i, j + 1, memo) + 1);
  (*memo)[key] = best;
  return best;
}

int EditRef(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<size_t, size_t>, int> memo;
  return EditRef(a, b, 0, 0, &memo);
}

TEST_CASE("deduplicate examples") {
  DedupSequence d = Deduplicate({5, 5, 2, 2, 2, 9});
  CHECK(d.tokens == std::vector<int>{5, 2, 9});
  CHECK(d.runs == std::vector<int>{2, 3, 1});

  DedupSequence e = Deduplicate({});
  CHECK(e.tokens.empty());
  CHECK(e.runs.empty());

  DedupSequence s = Deduplicate({7});
  CHECK(s.tokens == std::vector<int>{7});
  CHECK(s.runs == std::vector<int>{1});
}

TEST_CASE("expand examples and validation") {
  DedupSequence d;
  d.tokens = {5, 2, 9};
  d.runs = {2, 3, 1};
  CHECK(Expand(d) == std::vector<int>{5, 5, 2, 2, 2, 9});

  DedupSequence e;
  CHECK(Expand(e).empty());

  DedupSequence bad_run;
  bad_run.tokens = {1};
  bad_run.runs = {0};
  CHECK_THROWS_AS(Expand(bad_run), std::invalid_argument);

  DedupSequence dup;
  dup.tokens = {3, 3};
  dup.runs = {1, 1};
  CHECK_THROWS_AS(Expand(dup), std::invalid_argument);
}

TEST_CASE("round trip on 1000 random sequences") {
  Rng rng(20260814);
  for (int i = 0; i < 1000; ++i) {
    std::vector<int> x = RandomSeq(&rng, 500, 64);
    DedupSequence d = Deduplicate(x);
    for (size_t k = 1; k < d.tokens.size(); ++k)
      REQUIRE(d.tokens[k] != d.tokens[k - 1]);
    REQUIRE(Expand(d) == x);
    REQUIRE(Deduplicate(Expand(d)) == d);
  }
}

TEST_CASE("noise zero probabilities is identity") {
  NoiseSpec spec;
  spec.p_mask = spec.p_insert = spec.p_replace = 0.0;
  spec.rng_seed = 7;
  Rng rng(1);
  std::vector<int> x = RandomSeq(&rng, 200, 64);
  CHECK(ApplyNoise(x, spec) == x);
}

TEST_CASE("noise statistics match probabilities") {
  Rng rng(99);
  std::vector<int> x(10000);
  for (auto& t : x) t = static_cast<int>(rng.uniform_int(64));

  NoiseSpec mask_only;
  mask_only.p_mask = 0.2;
  mask_only.p_insert = 0.0;
  mask_only.p_replace = 0.0;
  mask_only.rng_seed = 11;
  std::vector<int> masked = ApplyNoise(x, mask_only);
  int n_mask = static_cast<int>(
      std::count(masked.begin(), masked.end(), mask_only.mask_id));
  CHECK(masked.size() == x.size());
  CHECK(n_mask > 10000 * (0.2 - 0.02));
  CHECK(n_mask < 10000 * (0.2 + 0.02));

  NoiseSpec ins_only;
  ins_only.p_mask = 0.0;
  ins_only.p_insert = 0.1;
  ins_only.p_replace = 0.0;
  ins_only.rng_seed = 12;
  std::vector<int> inserted = ApplyNoise(x, ins_only);
  CHECK(inserted.size() >= 11000 - 150);
  CHECK(inserted.size() <= 11000 + 150);
}

TEST_CASE("noise deterministic given seed") {
  Rng rng(5);
  std::vector<int> x = RandomSeq(&rng, 300, 64);
  NoiseSpec spec;
  spec.rng_seed = 424242;
  CHECK(ApplyNoise(x, spec) == ApplyNoise(x, spec));
  spec.rng_seed = 424243;
  // A different seed on a long input should differ somewhere.
  std::vector<int> big(500, 3);
  NoiseSpec a = spec, b = spec;
  b.rng_seed = 1;
  CHECK(ApplyNoise(big, a) != ApplyNoise(big, b));
}

TEST_CASE("edit distance examples") {
  EditStats same = EditDistance({1, 2, 3}, {1, 2, 3});
  CHECK(same.distance == 0);

  EditStats del = EditDistance({1, 2, 3}, {});
  CHECK(del.distance == 3);
  CHECK(del.deletions == 3);

  EditStats mix = EditDistance({1, 2, 3}, {1, 4, 3, 5});
  CHECK(mix.distance == 2);
  CHECK(mix.substitutions == 1);
  CHECK(mix.insertions == 1);
  CHECK(mix.deletions == 0);
}

TEST_CASE("edit distance against recursive reference") {
  Rng rng(2024);
  for (int i = 0; i < 300; ++i) {
    std::vector<int> a = RandomSeq(&rng, 8, 3);
    std::vector<int> b = RandomSeq(&rng, 8, 3);
    EditStats s = EditDistance(a, b);
    CHECK(s.distance == EditRef(a, b));
    CHECK(s.substitutions + s.insertions + s.deletions == s.distance);
  }
}

TEST_CASE("edit distance metric properties") {
  Rng rng(31337);
  for (int i = 0; i < 200; ++i) {
    std::vector<int> a = RandomSeq(&rng, 10, 4);
    std::vector<int> b = RandomSeq(&rng, 10, 4);
    std::vector<int> c = RandomSeq(&rng, 10, 4);
    int ab = EditDistance(a, b).distance;
    int ba = EditDistance(b, a).distance;
    int bc = EditDistance(b, c).distance;
    int ac = EditDistance(a, c).distance;
    CHECK(ab == ba);
    CHECK(ac <= ab + bc);
    CHECK(EditDistance(a, a).distance == 0);
  }
}

}  // namespace
}  // namespace accnorm
