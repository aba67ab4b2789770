// synth/synth.h

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

#ifndef ACCNORM_SYNTH_SYNTH_H_
#define ACCNORM_SYNTH_SYNTH_H_

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "autodiff/tape.h"
#include "nn/layers.h"
#include "nn/trainutil.h"

namespace accnorm {

// Conditional flow matching primitives. The probability path interpolates
// from noise x0 to data x1 with a small terminal width sigma_min:
//   x_t = (1 - (1 - sigma_min) t) x0 + t x1
// whose constant velocity along the path is x1 - (1 - sigma_min) x0.
Tensor FmInterpolate(const Tensor& x0, const Tensor& x1, double t,
                     double sigma_min);
Tensor FmTargetVelocity(const Tensor& x0, const Tensor& x1, double sigma_min);

// Classifier-free guidance blend: v_uncond + s (v_cond - v_uncond).
Tensor CfgVelocity(const Tensor& v_uncond, const Tensor& v_cond,
                   double strength);

struct SynthConfig {
  int vocab = 64;
  int feat_dim = 20;
  int speaker_dim = 16;
  int dim = 64;
  int enc_layers = 2;
  int dec_layers = 4;
  int heads = 4;
  int ffn_mult = 4;
  int time_dim = 32;
  double cond_drop = 0.2;
  double sigma_min = 1e-4;
  double dur_weight = 1.0;
  uint64_t init_seed = 1;

  std::map<std::string, std::string> Echo() const;
  static SynthConfig FromEcho(const std::map<std::string, std::string>& echo);
};

// One training utterance: deduplicated tokens with frame runs, a speaker
// vector, and the target feature frames (sum(durs) x feat_dim rows).
struct SynthExample {
  std::vector<int> tokens;
  std::vector<int> durs;
  std::vector<double> speaker;
  Tensor features;
};

// Flow-matching feature synthesizer over token plans. A token encoder feeds
// both the frame-level conditioning (expanded by durations) and a window-3
// convolutional duration regression head; the velocity field is a
// transformer with AdaLN conditioning on flow time and speaker. Token and
// speaker conditioning drop out jointly for classifier-free guidance.
class SynthModel {
 public:
  explicit SynthModel(const SynthConfig& cfg);

  const SynthConfig& config() const { return cfg_; }
  ParamStore& params() { return ps_; }
  const ParamStore& params() const { return ps_; }

  // Token encoder output, one row per deduplicated token.
  Graph::Var EncodeTokens(Graph* g, const std::vector<int>& tokens) const;
  // Predicted log durations (N x 1) from encoder rows plus the speaker.
  Graph::Var PredictLogDurs(Graph* g, Graph::Var enc,
                            const std::vector<double>& speaker) const;

  // Velocity at flow time t for frame state x_t (T x feat_dim). enc < 0
  // drops token conditioning; speaker == nullptr drops speaker conditioning.
  // durs expand encoder rows to frames and must sum to the row count of x_t.
  Graph::Var Velocity(Graph* g, Graph::Var x_t, double t, Graph::Var enc,
                      const std::vector<int>& durs,
                      const std::vector<double>* speaker) const;

  // Flow MSE per element plus weighted duration MSE per token. The caller
  // supplies the draw of t, the noise sample and the dropout decision so the
  // trainer stays deterministic.
  Graph::Var ExampleLoss(Graph* g, const SynthExample& ex, double t,
                         const Tensor& x0, bool drop_cond) const;

  // Euler sampler with classifier-free guidance; deterministic in the seed.
  Tensor SampleFeatures(const std::vector<int>& tokens,
                        const std::vector<int>& durs,
                        const std::vector<double>& speaker,
                        double cfg_strength, int steps, uint64_t seed) const;

  // Regression durations in frames (exp of the head output).
  std::vector<double> PredictDurations(const std::vector<int>& tokens,
                                       const std::vector<double>& speaker) const;

  void Save(const std::string& path) const;
  static std::unique_ptr<SynthModel> Load(const std::string& path);

 private:
  SynthConfig cfg_;
  ParamStore ps_;
  int tok_embed_ = -1;
  int null_tok_ = -1;      // 1 x dim, replaces expanded token rows on drop
  int null_speaker_ = -1;  // 1 x speaker_dim
  std::vector<BlockParams> enc_blocks_;
  LnParams enc_final_;
  LinearParams dur_h1_, dur_h2_, dur_out_;  // window-3 conv stack
  LinearParams in_proj_;
  LinearParams cond_h1_, cond_h2_;
  std::vector<BlockParams> dec_blocks_;
  LnParams dec_final_;
  LinearParams head_;
};

using SynthSampler = std::function<SynthExample(int step, int lane)>;

// Adam training; per-example flow time, noise and condition dropout are
// derived from opts.seed, the step and the lane.
TrainStats TrainSynth(SynthModel* model, const SynthSampler& sampler,
                      const std::vector<SynthExample>& valid,
                      const TrainOptions& opts);

// Mean loss over a fixed set with frozen (t, x0, keep-all) draws.
double EvalSynthLoss(const SynthModel& model,
                     const std::vector<SynthExample>& examples, uint64_t seed);

}  // namespace accnorm

#endif  // ACCNORM_SYNTH_SYNTH_H_
