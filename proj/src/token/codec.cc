// token/codec.cc

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

#include "token/codec.h"

#include <algorithm>

namespace accnorm {

DedupSequence Deduplicate(const std::vector<int>& frames) {
  DedupSequence d;
  for (int t : frames) {
    if (d.tokens.empty() || d.tokens.back() != t) {
      d.tokens.push_back(t);
      d.runs.push_back(1);
    } else {
      ++d.runs.back();
    }
  }
  return d;
}

std::vector<int> Expand(const DedupSequence& d) {
  ACN_CHECK(d.tokens.size() == d.runs.size(), "Expand: length mismatch");
  std::vector<int> out;
  for (size_t i = 0; i < d.tokens.size(); ++i) {
    ACN_CHECK(d.runs[i] >= 1, "Expand: run < 1 at " << i);
    ACN_CHECK(i == 0 || d.tokens[i] != d.tokens[i - 1],
              "Expand: consecutive duplicate token at " << i);
    out.insert(out.end(), d.runs[i], d.tokens[i]);
  }
  return out;
}

std::vector<int> ApplyNoise(const std::vector<int>& x, const NoiseSpec& spec) {
  ACN_CHECK(spec.p_mask >= 0 && spec.p_mask <= 1, "ApplyNoise: bad p_mask");
  ACN_CHECK(spec.p_insert >= 0 && spec.p_insert <= 1, "ApplyNoise: bad p_insert");
  ACN_CHECK(spec.p_replace >= 0 && spec.p_replace <= 1, "ApplyNoise: bad p_replace");
  ACN_CHECK(spec.p_mask + spec.p_replace <= 1.0, "ApplyNoise: mask + replace > 1");
  ACN_CHECK(spec.mask_id >= spec.vocab, "ApplyNoise: mask_id inside vocab");
  Rng rng(spec.rng_seed);
  std::vector<int> out;
  out.reserve(x.size() + x.size() / 8);
  for (int t : x) {
    ACN_CHECK(t >= 0 && t < spec.mask_id, "ApplyNoise: id not below mask_id");
    double u = rng.uniform();
    if (u < spec.p_mask) {
      out.push_back(spec.mask_id);
    } else if (u < spec.p_mask + spec.p_replace) {
      out.push_back(static_cast<int>(rng.uniform_int(spec.vocab)));
    } else {
      out.push_back(t);
    }
    if (rng.uniform() < spec.p_insert)
      out.push_back(static_cast<int>(rng.uniform_int(spec.vocab)));
  }
  return out;
}

EditStats EditDistance(const std::vector<int>& ref, const std::vector<int>& hyp) {
  const int n = static_cast<int>(ref.size());
  const int m = static_cast<int>(hyp.size());
  // dp[i][j]: distance between ref[0..i) and hyp[0..j).
  std::vector<std::vector<int>> dp(n + 1, std::vector<int>(m + 1, 0));
  for (int i = 0; i <= n; ++i) dp[i][0] = i;
  for (int j = 0; j <= m; ++j) dp[0][j] = j;
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= m; ++j) {
      int match = dp[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1] ? 1 : 0);
      int del = dp[i - 1][j] + 1;
      int ins = dp[i][j - 1] + 1;
      dp[i][j] = std::min({match, del, ins});
    }
  }
  EditStats s;
  s.distance = dp[n][m];
  // Backtrace, preferring match/sub, then deletion, then insertion.
  int i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        dp[i][j] == dp[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1] ? 1 : 0)) {
      if (ref[i - 1] != hyp[j - 1]) ++s.substitutions;
      --i;
      --j;
    } else if (i > 0 && dp[i][j] == dp[i - 1][j] + 1) {
      ++s.deletions;
      --i;
    } else {
      ++s.insertions;
      --j;
    }
  }
  return s;
}

}  // namespace accnorm
