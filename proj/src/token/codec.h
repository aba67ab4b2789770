// token/codec.h

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

#ifndef ACCNORM_TOKEN_CODEC_H_
#define ACCNORM_TOKEN_CODEC_H_

#include <cstdint>
#include <vector>

#include "base/common.h"
#include "base/rng.h"

namespace accnorm {

// Run-length form of a frame-level token stream: tokens has no two equal
// consecutive entries, runs holds the frame count of each entry.
struct DedupSequence {
  std::vector<int> tokens;
  std::vector<int> runs;

  bool operator==(const DedupSequence& o) const {
    return tokens == o.tokens && runs == o.runs;
  }
};

DedupSequence Deduplicate(const std::vector<int>& frames);

// Inverse of Deduplicate. Rejects runs < 1 and consecutive duplicate tokens.
std::vector<int> Expand(const DedupSequence& d);

// Token noising for denoising pretraining. Per position, mask wins over
// replace (mutually exclusive, sampled in that order); insertion is sampled
// independently for the gap after each position, including the last. There
// is no gap before the first position.
struct NoiseSpec {
  double p_mask = 0.2;
  double p_insert = 0.1;
  double p_replace = 0.1;
  int vocab = 64;
  int mask_id = 64;  // reserved id >= vocab
  uint64_t rng_seed = 0;
};

std::vector<int> ApplyNoise(const std::vector<int>& x, const NoiseSpec& spec);

// Unit-cost Levenshtein alignment of hyp against ref.
struct EditStats {
  int distance = 0;
  int substitutions = 0;
  int insertions = 0;  // extra symbols in hyp
  int deletions = 0;   // ref symbols missing from hyp
};

EditStats EditDistance(const std::vector<int>& ref, const std::vector<int>& hyp);

}  // namespace accnorm

#endif  // ACCNORM_TOKEN_CODEC_H_
