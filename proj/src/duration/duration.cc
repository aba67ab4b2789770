// duration/duration.cc

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

#include "duration/duration.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <utility>

#include "kernels/kernels.h"
#include "nn/checkpoint.h"
#include "synth/synth.h"

namespace accnorm {

std::vector<int> RoundDurations(const std::vector<double>& durs) {
  std::vector<int> out(durs.size());
  for (size_t i = 0; i < durs.size(); ++i) {
    ACN_CHECK(std::isfinite(durs[i]), "RoundDurations: non-finite entry");
    out[i] = static_cast<int>(std::max(1L, std::lround(durs[i])));
  }
  return out;
}

int PlanTotal(const std::vector<int>& plan) {
  int total = 0;
  for (int d : plan) total += d;
  return total;
}

std::vector<int> ScaleToTotal(const std::vector<int>& plan, int target_total) {
  const int n = static_cast<int>(plan.size());
  ACN_CHECK(n > 0, "ScaleToTotal: empty plan");
  ACN_CHECK(target_total >= n, "ScaleToTotal: target " << target_total
                                                       << " below token count "
                                                       << n);
  long long sum = 0;
  for (int d : plan) {
    ACN_CHECK(d >= 1, "ScaleToTotal: nonpositive duration");
    sum += d;
  }
  // Largest-remainder apportionment in exact integer arithmetic:
  // plan[i] * target / sum, floors first, then one extra frame per unit of
  // leftover in decreasing remainder order (ties to the lowest index).
  std::vector<int> out(n);
  std::vector<std::pair<long long, int>> rem(n);
  long long given = 0;
  for (int i = 0; i < n; ++i) {
    const long long scaled =
        static_cast<long long>(plan[i]) * target_total;
    out[i] = static_cast<int>(scaled / sum);
    rem[i] = {scaled % sum, i};
    given += out[i];
  }
  std::sort(rem.begin(), rem.end(),
            [](const std::pair<long long, int>& a,
               const std::pair<long long, int>& b) {
              if (a.first != b.first) return a.first > b.first;
              return a.second < b.second;
            });
  const int leftover = static_cast<int>(target_total - given);
  for (int k = 0; k < leftover; ++k) ++out[rem[k].second];
  // Lift zero entries to one frame at the expense of the largest entries;
  // target_total >= n guarantees a donor exists.
  for (int i = 0; i < n; ++i) {
    if (out[i] >= 1) continue;
    int big = 0;
    for (int j = 1; j < n; ++j)
      if (out[j] > out[big]) big = j;
    ACN_CHECK(out[big] >= 2, "ScaleToTotal: no donor entry");
    --out[big];
    out[i] = 1;
  }
  return out;
}

DeviationStats DurationDeviation(const std::vector<int>& pred_totals,
                                 const std::vector<int>& source_totals,
                                 double frame_hop) {
  ACN_CHECK(!pred_totals.empty(), "DurationDeviation: empty lists");
  ACN_CHECK(pred_totals.size() == source_totals.size(),
            "DurationDeviation: length mismatch");
  double abs_sum = 0.0, rel_sum = 0.0;
  for (size_t i = 0; i < pred_totals.size(); ++i) {
    ACN_CHECK(source_totals[i] >= 1, "DurationDeviation: bad source total");
    const double d = std::fabs(static_cast<double>(pred_totals[i]) -
                               static_cast<double>(source_totals[i]));
    abs_sum += d * frame_hop;
    rel_sum += d / source_totals[i];
  }
  DeviationStats stats;
  stats.mean_abs_seconds = abs_sum / pred_totals.size();
  stats.mean_rel = rel_sum / pred_totals.size();
  return stats;
}

namespace {

std::string Fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

double ParseD(const std::map<std::string, std::string>& m,
              const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw ConfigError("durflow echo missing key: " + key);
  return std::stod(it->second);
}

}  // namespace

std::map<std::string, std::string> DurationFlowConfig::Echo() const {
  return {{"arch", "durflow"},
          {"vocab", std::to_string(vocab)},
          {"speaker_dim", std::to_string(speaker_dim)},
          {"dim", std::to_string(dim)},
          {"layers", std::to_string(layers)},
          {"heads", std::to_string(heads)},
          {"ffn_mult", std::to_string(ffn_mult)},
          {"time_dim", std::to_string(time_dim)},
          {"cond_drop", Fmt(cond_drop)},
          {"sigma_min", Fmt(sigma_min)},
          {"jitter_lo", Fmt(jitter_lo)},
          {"jitter_hi", Fmt(jitter_hi)},
          {"init_seed", std::to_string(init_seed)}};
}

DurationFlowConfig DurationFlowConfig::FromEcho(
    const std::map<std::string, std::string>& echo) {
  auto it = echo.find("arch");
  if (it == echo.end() || it->second != "durflow")
    throw ConfigError("checkpoint is not a duration flow model");
  DurationFlowConfig c;
  c.vocab = static_cast<int>(ParseD(echo, "vocab"));
  c.speaker_dim = static_cast<int>(ParseD(echo, "speaker_dim"));
  c.dim = static_cast<int>(ParseD(echo, "dim"));
  c.layers = static_cast<int>(ParseD(echo, "layers"));
  c.heads = static_cast<int>(ParseD(echo, "heads"));
  c.ffn_mult = static_cast<int>(ParseD(echo, "ffn_mult"));
  c.time_dim = static_cast<int>(ParseD(echo, "time_dim"));
  c.cond_drop = ParseD(echo, "cond_drop");
  c.sigma_min = ParseD(echo, "sigma_min");
  c.jitter_lo = ParseD(echo, "jitter_lo");
  c.jitter_hi = ParseD(echo, "jitter_hi");
  c.init_seed = std::stoull(echo.at("init_seed"));
  return c;
}

DurationFlowModel::DurationFlowModel(const DurationFlowConfig& cfg)
    : cfg_(cfg) {
  ACN_CHECK(cfg.dim % cfg.heads == 0, "durflow: dim % heads != 0");
  ACN_CHECK(cfg.sigma_min > 0.0 && cfg.sigma_min < 0.5,
            "durflow: sigma_min out of range");
  ACN_CHECK(cfg.jitter_lo > 0.0 && cfg.jitter_hi >= cfg.jitter_lo,
            "durflow: bad jitter range");
  Rng rng(cfg.init_seed);
  const double emb_scale = 1.0 / std::sqrt(cfg.dim);
  tok_embed_ =
      ps_.Add("tok.embed", Tensor::Gaussian(cfg.vocab, cfg.dim, rng, emb_scale));
  null_tok_ = ps_.Add("null.tok", Tensor::Gaussian(1, cfg.dim, rng, emb_scale));
  null_speaker_ =
      ps_.Add("null.speaker",
              Tensor::Gaussian(1, cfg.speaker_dim, rng,
                               1.0 / std::sqrt(cfg.speaker_dim)));
  in_proj_ = MakeLinear(&ps_, "in.proj", 2 + cfg.dim, cfg.dim, &rng);
  cond_h1_ = MakeLinear(&ps_, "cond.h1", cfg.time_dim + cfg.speaker_dim + 1,
                        cfg.dim, &rng);
  cond_h2_ = MakeLinear(&ps_, "cond.h2", cfg.dim, cfg.dim, &rng);
  for (int l = 0; l < cfg.layers; ++l)
    blocks_.push_back(MakeBlock(&ps_, "b" + std::to_string(l), cfg.dim,
                                cfg.heads, cfg.dim * cfg.ffn_mult, cfg.dim,
                                false, &rng));
  final_ = MakeLn(&ps_, "final", cfg.dim);
  head_ = MakeLinear(&ps_, "head", cfg.dim, 1, &rng);
}

Graph::Var DurationFlowModel::Velocity(Graph* g, Graph::Var x_t, double t,
                                       const std::vector<int>& tokens,
                                       const std::vector<double>& speaker,
                                       double avg_log_dur,
                                       bool drop_cond) const {
  const int n = g->RowsOf(x_t);
  ACN_CHECK(g->ColsOf(x_t) == 1, "durflow: state must be one column");
  ACN_CHECK(static_cast<int>(tokens.size()) == n,
            "durflow: tokens vs state rows");
  for (int tk : tokens)
    ACN_CHECK(tk >= 0 && tk < cfg_.vocab, "durflow: bad token " << tk);
  ACN_CHECK(static_cast<int>(speaker.size()) == cfg_.speaker_dim,
            "durflow: bad speaker vector");
  ACN_CHECK(std::isfinite(avg_log_dur), "durflow: bad average duration");

  Graph::Var tokrows = drop_cond
                           ? g->RepeatRows(g->Param(null_tok_), {n})
                           : g->Rows(g->Param(tok_embed_), tokens);
  Tensor avg(1, 1);
  avg.at(0, 0) = avg_log_dur;
  // The average-duration scalar is broadcast to every position so the total
  // stays controllable even when tokens and speaker are dropped.
  Graph::Var avg_col = g->RepeatRows(g->Input(avg), {n});
  Graph::Var x =
      ApplyLinear(g, in_proj_, g->ConcatCols({x_t, tokrows, avg_col}));
  x = g->Add(x, g->Input(SinusoidalPositions(n, cfg_.dim)));

  Graph::Var spk;
  if (drop_cond) {
    spk = g->Param(null_speaker_);
  } else {
    Tensor s(1, cfg_.speaker_dim);
    for (int i = 0; i < cfg_.speaker_dim; ++i) s.at(0, i) = speaker[i];
    spk = g->Input(s);
  }
  Graph::Var c = ApplyLinear(
      g, cond_h2_,
      g->Gelu(ApplyLinear(
          g, cond_h1_,
          g->ConcatCols({g->Input(SinusoidalScalar(t, cfg_.time_dim)), spk,
                         g->Input(avg)}))));
  for (const auto& b : blocks_) x = ApplyBlock(g, b, x, c, nullptr, -1, nullptr);
  return ApplyLinear(g, head_, ApplyLn(g, final_, x));
}

Graph::Var DurationFlowModel::ExampleLoss(Graph* g, const DurationExample& ex,
                                          double t, const Tensor& x0,
                                          double rate, bool drop_cond) const {
  const int n = static_cast<int>(ex.tokens.size());
  ACN_CHECK(n > 0 && ex.durs.size() == ex.tokens.size(),
            "durflow: bad example plan");
  ACN_CHECK(rate > 0.0, "durflow: nonpositive rate");
  ACN_CHECK(x0.rows == n && x0.cols == 1, "durflow: noise shape mismatch");
  Tensor x1(n, 1);
  double mean = 0.0;
  for (int i = 0; i < n; ++i) {
    ACN_CHECK(ex.durs[i] >= 1, "durflow: nonpositive duration");
    x1.at(i, 0) = std::log(ex.durs[i] * rate);
    mean += ex.durs[i] * rate;
  }
  const double avg_log = std::log(mean / n);
  Graph::Var x_t = g->Input(FmInterpolate(x0, x1, t, cfg_.sigma_min));
  Graph::Var vstar = g->Input(FmTargetVelocity(x0, x1, cfg_.sigma_min));
  Graph::Var v =
      Velocity(g, x_t, t, ex.tokens, ex.speaker, avg_log, drop_cond);
  return g->Scale(g->MseSum(v, vstar), 1.0 / n);
}

std::vector<double> DurationFlowModel::SampleLogDurs(
    const std::vector<int>& tokens, const std::vector<double>& speaker,
    double avg_log_dur, double cfg_strength, int steps, uint64_t seed) const {
  ACN_CHECK(steps >= 1, "durflow: steps < 1");
  ACN_CHECK(!tokens.empty(), "durflow: empty token plan");
  const int n = static_cast<int>(tokens.size());
  Rng rng(seed);
  Tensor x = Tensor::Gaussian(n, 1, rng);
  for (int k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) / steps;
    Graph g(&ps_);
    Graph::Var x_in = g.Input(x);
    Tensor v =
        g.Value(Velocity(&g, x_in, t, tokens, speaker, avg_log_dur, false));
    if (cfg_strength != 1.0) {
      Tensor vu =
          g.Value(Velocity(&g, x_in, t, tokens, speaker, avg_log_dur, true));
      v = CfgVelocity(vu, v, cfg_strength);
    }
    Axpy(1.0 / steps, v, &x);
  }
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = x.at(i, 0);
  return out;
}

ControlledPlan DurationFlowModel::SampleControlled(
    const std::vector<int>& tokens, const std::vector<double>& speaker,
    int target_total, double cfg_strength, int steps, uint64_t seed) const {
  const int n = static_cast<int>(tokens.size());
  ACN_CHECK(n > 0, "durflow: empty token plan");
  ACN_CHECK(target_total >= n, "durflow: target " << target_total
                                                  << " below token count "
                                                  << n);
  const double avg_log = std::log(static_cast<double>(target_total) / n);
  std::vector<double> ld =
      SampleLogDurs(tokens, speaker, avg_log, cfg_strength, steps, seed);
  std::vector<double> reals(n);
  for (int i = 0; i < n; ++i) reals[i] = std::exp(ld[i]);
  ControlledPlan plan;
  plan.pre = RoundDurations(reals);
  plan.adjusted = ScaleToTotal(plan.pre, target_total);
  return plan;
}

void DurationFlowModel::Save(const std::string& path) const {
  SaveCheckpoint(path, ps_, cfg_.Echo());
}

std::unique_ptr<DurationFlowModel> DurationFlowModel::Load(
    const std::string& path) {
  ParamStore loaded;
  std::map<std::string, std::string> echo;
  LoadCheckpoint(path, &loaded, &echo);
  auto model =
      std::make_unique<DurationFlowModel>(DurationFlowConfig::FromEcho(echo));
  ParamStore& ps = model->params();
  if (loaded.Count() != ps.Count() || loaded.TotalSize() != ps.TotalSize())
    throw ConfigError("durflow checkpoint layout mismatch: " + path);
  for (int i = 0; i < ps.Count(); ++i)
    if (loaded.InfoOf(i).name != ps.InfoOf(i).name ||
        loaded.InfoOf(i).rows != ps.InfoOf(i).rows ||
        loaded.InfoOf(i).cols != ps.InfoOf(i).cols)
      throw ConfigError("durflow checkpoint tensor mismatch: " +
                        loaded.InfoOf(i).name);
  ps.Flat() = loaded.Flat();
  return model;
}

TrainStats TrainDurationFlow(DurationFlowModel* model,
                             const DurationSampler& sampler,
                             const std::vector<DurationExample>& valid,
                             const TrainOptions& opts) {
  ParamStore& ps = model->params();
  const DurationFlowConfig& cfg = model->config();
  auto step_fn = [&](int step, std::vector<double>* grad) {
    double loss_sum = 0.0;
    for (int lane = 0; lane < opts.batch; ++lane) {
      DurationExample ex = sampler(step, lane);
      Rng r(DeriveSeed(opts.seed, step, lane));
      const double t = r.uniform();
      const double rate = r.uniform(cfg.jitter_lo, cfg.jitter_hi);
      const bool drop = r.uniform() < cfg.cond_drop;
      Tensor x0 = Tensor::Gaussian(static_cast<int>(ex.tokens.size()), 1, r);
      Graph g(&ps);
      Graph::Var loss = model->ExampleLoss(&g, ex, t, x0, rate, drop);
      loss_sum += g.Value(loss).at(0, 0);
      g.Backward(g.Scale(loss, 1.0 / opts.batch));
      g.FlushParamGrads(grad);
    }
    return loss_sum / opts.batch;
  };
  TrainEvalFn eval_fn;
  if (!valid.empty())
    eval_fn = [&]() { return EvalDurationFlowLoss(*model, valid, opts.seed); };
  TrainOptions local = opts;
  if (local.tag.empty()) local.tag = "durflow";
  return RunTraining(&ps, step_fn, eval_fn, local);
}

double EvalDurationFlowLoss(const DurationFlowModel& model,
                            const std::vector<DurationExample>& examples,
                            uint64_t seed) {
  ACN_CHECK(!examples.empty(), "EvalDurationFlowLoss: empty set");
  double sum = 0.0;
  for (size_t i = 0; i < examples.size(); ++i) {
    const DurationExample& ex = examples[i];
    Rng r(DeriveSeed(seed, 0xd0f1, i));
    const double t = r.uniform();
    Tensor x0 = Tensor::Gaussian(static_cast<int>(ex.tokens.size()), 1, r);
    Graph g(&model.params());
    sum += g.Value(model.ExampleLoss(&g, ex, t, x0, 1.0, false)).at(0, 0);
  }
  return sum / examples.size();
}

}  // namespace accnorm
