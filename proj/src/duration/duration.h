// duration/duration.h

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

#ifndef ACCNORM_DURATION_DURATION_H_
#define ACCNORM_DURATION_DURATION_H_

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "autodiff/tape.h"
#include "nn/layers.h"
#include "nn/trainutil.h"

namespace accnorm {

// Rounds positive real frame counts half-up and floors every entry at 1.
std::vector<int> RoundDurations(const std::vector<double>& durs);

int PlanTotal(const std::vector<int>& plan);

// Rescales a duration plan so it sums exactly to target_total. Real-valued
// scaling by target_total / sum(plan), then largest-remainder rounding in
// exact integer arithmetic; remainder ties go to the lowest index and a
// fix-up pass lifts zero entries to 1 at the expense of the largest ones.
// Throws when target_total < plan length.
std::vector<int> ScaleToTotal(const std::vector<int>& plan, int target_total);

struct DeviationStats {
  double mean_abs_seconds = 0.0;
  double mean_rel = 0.0;
};

// Mean |pred - src| * frame_hop and mean |pred - src| / src over paired
// per-utterance frame totals.
DeviationStats DurationDeviation(const std::vector<int>& pred_totals,
                                 const std::vector<int>& source_totals,
                                 double frame_hop);

struct DurationFlowConfig {
  int vocab = 64;
  int speaker_dim = 16;
  int dim = 48;
  int layers = 2;
  int heads = 4;
  int ffn_mult = 4;
  int time_dim = 16;
  double cond_drop = 0.2;
  double sigma_min = 1e-4;
  double jitter_lo = 0.85;  // training-time tempo jitter, uniform range
  double jitter_hi = 1.30;
  uint64_t init_seed = 1;

  std::map<std::string, std::string> Echo() const;
  static DurationFlowConfig FromEcho(
      const std::map<std::string, std::string>& echo);
};

// One training plan: deduplicated tokens with their gold frame counts.
struct DurationExample {
  std::vector<int> tokens;
  std::vector<int> durs;
  std::vector<double> speaker;
};

// Result of controlled sampling: the raw rounded plan before the exact-total
// adjustment, and the adjusted plan that sums to the requested total.
struct ControlledPlan {
  std::vector<int> pre;
  std::vector<int> adjusted;
};

// Flow-matching model over per-token log durations. The state is an N x 1
// column; token embeddings join it through the input projection and the
// transformer blocks receive AdaLN conditioning computed from flow time,
// speaker and the average log duration. Condition dropout replaces tokens
// and speaker with learned null rows but keeps the average-duration scalar,
// so guided sampling still honours the requested total.
class DurationFlowModel {
 public:
  explicit DurationFlowModel(const DurationFlowConfig& cfg);

  const DurationFlowConfig& config() const { return cfg_; }
  ParamStore& params() { return ps_; }
  const ParamStore& params() const { return ps_; }

  Graph::Var Velocity(Graph* g, Graph::Var x_t, double t,
                      const std::vector<int>& tokens,
                      const std::vector<double>& speaker, double avg_log_dur,
                      bool drop_cond) const;

  // Flow MSE per token against the rate-jittered gold log durations. The
  // caller supplies t, the noise column, the jitter rate and the dropout
  // decision so the trainer stays deterministic.
  Graph::Var ExampleLoss(Graph* g, const DurationExample& ex, double t,
                         const Tensor& x0, double rate, bool drop_cond) const;

  // Euler sampler with classifier-free guidance over the log-duration
  // column; deterministic in the seed.
  std::vector<double> SampleLogDurs(const std::vector<int>& tokens,
                                    const std::vector<double>& speaker,
                                    double avg_log_dur, double cfg_strength,
                                    int steps, uint64_t seed) const;

  // Samples conditioned on target_total / N average duration, rounds, then
  // applies ScaleToTotal as the final adjustment.
  ControlledPlan SampleControlled(const std::vector<int>& tokens,
                                  const std::vector<double>& speaker,
                                  int target_total, double cfg_strength,
                                  int steps, uint64_t seed) const;

  void Save(const std::string& path) const;
  static std::unique_ptr<DurationFlowModel> Load(const std::string& path);

 private:
  DurationFlowConfig cfg_;
  ParamStore ps_;
  int tok_embed_ = -1;
  int null_tok_ = -1;      // 1 x dim, replaces token rows on drop
  int null_speaker_ = -1;  // 1 x speaker_dim
  LinearParams in_proj_;
  LinearParams cond_h1_, cond_h2_;
  std::vector<BlockParams> blocks_;
  LnParams final_;
  LinearParams head_;
};

using DurationSampler = std::function<DurationExample(int step, int lane)>;

// Adam training; flow time, noise, tempo jitter and condition dropout are
// derived from opts.seed, the step and the lane.
TrainStats TrainDurationFlow(DurationFlowModel* model,
                             const DurationSampler& sampler,
                             const std::vector<DurationExample>& valid,
                             const TrainOptions& opts);

// Mean loss over a fixed set with frozen (t, x0) draws, rate 1, keep-all.
double EvalDurationFlowLoss(const DurationFlowModel& model,
                            const std::vector<DurationExample>& examples,
                            uint64_t seed);

}  // namespace accnorm

#endif  // ACCNORM_DURATION_DURATION_H_
