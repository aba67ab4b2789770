// converter/converter.h

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

#ifndef ACCNORM_CONVERTER_CONVERTER_H_
#define ACCNORM_CONVERTER_CONVERTER_H_

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "autodiff/tape.h"
#include "nn/layers.h"
#include "nn/trainutil.h"

namespace accnorm {

// Sequence-to-sequence token normalizer: encoder over deduplicated source
// tokens with accent-conditioned AdaLN, autoregressive decoder producing the
// canonical native token string, plus a CTC head on the encoder for phone
// supervision. Token id `vocab` triples as encoder mask, decoder BOS and
// output EOS; CTC blank is the last phone column.
struct ConverterConfig {
  int vocab = 64;
  int phones = 24;
  int accents = 6;  // accent table holds rows 0..accents, 0 = native
  int layers = 2;
  int dim = 64;
  int heads = 4;
  int ffn_mult = 4;
  int accent_dim = 16;
  double ctc_weight = 1.0;
  bool use_accent_embedding = true;
  bool use_phone_supervision = true;
  uint64_t init_seed = 1;

  std::map<std::string, std::string> Echo() const;
  static ConverterConfig FromEcho(
      const std::map<std::string, std::string>& echo);
};

struct ConverterExample {
  std::vector<int> src;     // deduplicated, possibly noised token ids
  std::vector<int> tgt;     // canonical native token ids, no EOS
  std::vector<int> phones;  // realized phones of src (CTC labels)
  int accent_id = 0;
};

class ConverterModel {
 public:
  explicit ConverterModel(const ConverterConfig& cfg);

  const ConverterConfig& config() const { return cfg_; }
  ParamStore& params() { return ps_; }
  const ParamStore& params() const { return ps_; }

  int bos() const { return cfg_.vocab; }
  int eos() const { return cfg_.vocab; }

  // Encoder memory for a source sequence; rejects empty input.
  Graph::Var Encode(Graph* g, const std::vector<int>& src,
                    int accent_id) const;
  // Next-token logits for a forced decoder input (BOS-prefixed), causal.
  Graph::Var DecodeLogits(Graph* g, Graph::Var memory,
                          const std::vector<int>& tgt_in) const;
  // Per-position phone logits over the encoder memory, blank last.
  Graph::Var CtcLogits(Graph* g, Graph::Var memory) const;

  // Unnormalized example loss: CE sum over tgt+EOS, plus ctc_weight * CTC
  // when supervision is on and the alignment is feasible. Infeasible CTC is
  // dropped and counted through ctc_skipped.
  Graph::Var ExampleLoss(Graph* g, const ConverterExample& ex,
                         bool* ctc_skipped) const;

  void Save(const std::string& path) const;
  static std::unique_ptr<ConverterModel> Load(const std::string& path);

  // Layer bundles, exposed for the inference path.
  struct Net {
    int enc_embed = -1;    // (vocab+1) x dim
    int dec_embed = -1;    // (vocab+1) x dim
    int accent_table = -1; // (accents+1) x accent_dim
    std::vector<BlockParams> enc_blocks;
    std::vector<BlockParams> dec_blocks;
    LnParams enc_final;
    LnParams dec_final;
    LinearParams out_head;  // dim -> vocab+1
    LinearParams ctc_head;  // dim -> phones+1
  };
  const Net& net() const { return net_; }

 private:
  ConverterConfig cfg_;
  ParamStore ps_;
  Net net_;
};

// Per-step example provider; called once per (step, lane). Noising policies
// live in the sampler so the trainer stays generic.
using ExampleSampler = std::function<ConverterExample(int step, int lane)>;

// Adam training with linear warmup and global grad clipping. Throws
// DivergenceError when the batch loss stops being finite.
TrainStats TrainConverter(ConverterModel* model, const ExampleSampler& sampler,
                          const std::vector<ConverterExample>& valid,
                          const TrainOptions& opts);

// Mean per-token loss over a fixed set, forward only.
double EvalConverterLoss(const ConverterModel& model,
                         const std::vector<ConverterExample>& examples);

struct DecodeResult {
  std::vector<int> tokens;  // EOS stripped, consecutive repeats collapsed
  double logprob = 0.0;
  bool truncated = false;
};

// Beam search over a plain-tensor KV-cached decoder (the training graph is
// too slow to rebuild per step). ForcedLogits runs the same code path under
// teacher forcing so tests can pin it against DecodeLogits.
class ConverterInference {
 public:
  explicit ConverterInference(const ConverterModel& model);
  ~ConverterInference();

  DecodeResult Decode(const std::vector<int>& src, int accent_id,
                      int beam_width = 10) const;
  Tensor ForcedLogits(const std::vector<int>& src, int accent_id,
                      const std::vector<int>& tgt_in) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace accnorm

#endif  // ACCNORM_CONVERTER_CONVERTER_H_
