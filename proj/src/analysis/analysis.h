// analysis/analysis.h

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

#ifndef ACCNORM_ANALYSIS_ANALYSIS_H_
#define ACCNORM_ANALYSIS_ANALYSIS_H_

#include <string>
#include <utility>
#include <vector>

#include "kernels/tensor.h"

namespace accnorm {

// Frame-parallel tokens and phone labels for one utterance. A negative
// phone marks an unlabeled frame (inserted material, CTC blank) and is
// skipped during counting.
struct AlignedFrames {
  std::vector<int> tokens;
  std::vector<int> phones;
};

// Per-phone token distributions: raw counts and the smoothed probabilities
// (counts + alpha) / (total + alpha * V). Phones with no frames fall back
// to uniform and are flagged.
struct PhoneTokenDistribution {
  Tensor counts;  // P x V
  Tensor probs;   // P x V
  std::vector<int> empty_phone;
  double alpha = 0.5;
};

PhoneTokenDistribution CollectDistributions(
    const std::vector<AlignedFrames>& frames, int n_phones, int vocab,
    double alpha = 0.5);

// Entry (i, j) = KL(eval_i || ref_j) over token distributions.
Tensor KlMatrix(const PhoneTokenDistribution& eval,
                const PhoneTokenDistribution& ref);

std::vector<double> KlDiagonal(const Tensor& kl);

// Edit distance over the reference length; throws on an empty reference.
double TokenErrorRate(const std::vector<int>& hyp, const std::vector<int>& ref);

// Corpus-level rate: summed edit distance over summed reference length.
class TerAccumulator {
 public:
  void Add(const std::vector<int>& hyp, const std::vector<int>& ref);
  double Rate() const;
  long long pairs() const { return pairs_; }

 private:
  long long distance_ = 0;
  long long length_ = 0;
  long long pairs_ = 0;
};

// Dynamic time warping under Euclidean frame distance with steps
// {(1,0),(0,1),(1,1)}; ties prefer the diagonal, then the gen axis. mean is
// the path total divided by the number of aligned frame pairs.
struct DtwResult {
  double total = 0.0;
  int path_len = 0;
  double mean = 0.0;
};

DtwResult DtwDistance(const Tensor& gen, const Tensor& ref);

double Cosine(const std::vector<double>& a, const std::vector<double>& b);

// Least-squares speaker estimate from feature frames: subtracts the token
// embedding rows for the planned frame tokens and solves
// (U U^T) s = U r_mean with U the speaker projection.
std::vector<double> RecoverSpeaker(const Tensor& features,
                                   const std::vector<int>& frame_tokens,
                                   const Tensor& token_emb,
                                   const Tensor& speaker_proj);

// Report writers. Every file starts with a config-hash comment line and
// formats doubles at full precision, so equal inputs give equal bytes.
void WriteMetricsCsv(const std::string& path, const std::string& config_hash,
                     const std::vector<std::pair<std::string, double>>& rows);
void WriteMatrixCsv(const std::string& path, const std::string& config_hash,
                    const Tensor& m);

struct DurationRow {
  std::string id;
  std::string mode;
  int source_total = 0;
  int pre_total = 0;
  int post_total = 0;
};

void WriteDurationsCsv(const std::string& path, const std::string& config_hash,
                       const std::vector<DurationRow>& rows);

// Binary PPM heatmap, black -> red -> yellow -> white, scaled by the matrix
// maximum; cell pixel size is fixed so the grid stays readable.
void WriteHeatmapPpm(const std::string& path, const Tensor& m);

}  // namespace accnorm

#endif  // ACCNORM_ANALYSIS_ANALYSIS_H_
