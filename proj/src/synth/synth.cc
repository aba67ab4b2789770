// synth/synth.cc

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

#include "synth/synth.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "kernels/kernels.h"
#include "nn/checkpoint.h"

namespace accnorm {

Tensor FmInterpolate(const Tensor& x0, const Tensor& x1, double t,
                     double sigma_min) {
  ACN_CHECK(x0.same_shape(x1), "FmInterpolate: shape mismatch");
  const double a = 1.0 - (1.0 - sigma_min) * t;
  Tensor out(x0.rows, x0.cols);
  for (size_t i = 0; i < out.size(); ++i)
    out.data[i] = a * x0.data[i] + t * x1.data[i];
  return out;
}

Tensor FmTargetVelocity(const Tensor& x0, const Tensor& x1, double sigma_min) {
  ACN_CHECK(x0.same_shape(x1), "FmTargetVelocity: shape mismatch");
  Tensor out(x0.rows, x0.cols);
  for (size_t i = 0; i < out.size(); ++i)
    out.data[i] = x1.data[i] - (1.0 - sigma_min) * x0.data[i];
  return out;
}

Tensor CfgVelocity(const Tensor& v_uncond, const Tensor& v_cond,
                   double strength) {
  ACN_CHECK(v_uncond.same_shape(v_cond), "CfgVelocity: shape mismatch");
  Tensor out(v_uncond.rows, v_uncond.cols);
  for (size_t i = 0; i < out.size(); ++i)
    out.data[i] =
        v_uncond.data[i] + strength * (v_cond.data[i] - v_uncond.data[i]);
  return out;
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
  if (it == m.end()) throw ConfigError("synth echo missing key: " + key);
  return std::stod(it->second);
}

}  // namespace

std::map<std::string, std::string> SynthConfig::Echo() const {
  return {{"arch", "synth"},
          {"vocab", std::to_string(vocab)},
          {"feat_dim", std::to_string(feat_dim)},
          {"speaker_dim", std::to_string(speaker_dim)},
          {"dim", std::to_string(dim)},
          {"enc_layers", std::to_string(enc_layers)},
          {"dec_layers", std::to_string(dec_layers)},
          {"heads", std::to_string(heads)},
          {"ffn_mult", std::to_string(ffn_mult)},
          {"time_dim", std::to_string(time_dim)},
          {"cond_drop", Fmt(cond_drop)},
          {"sigma_min", Fmt(sigma_min)},
          {"dur_weight", Fmt(dur_weight)},
          {"init_seed", std::to_string(init_seed)}};
}

SynthConfig SynthConfig::FromEcho(
    const std::map<std::string, std::string>& echo) {
  auto it = echo.find("arch");
  if (it == echo.end() || it->second != "synth")
    throw ConfigError("checkpoint is not a synthesizer model");
  SynthConfig c;
  c.vocab = static_cast<int>(ParseD(echo, "vocab"));
  c.feat_dim = static_cast<int>(ParseD(echo, "feat_dim"));
  c.speaker_dim = static_cast<int>(ParseD(echo, "speaker_dim"));
  c.dim = static_cast<int>(ParseD(echo, "dim"));
  c.enc_layers = static_cast<int>(ParseD(echo, "enc_layers"));
  c.dec_layers = static_cast<int>(ParseD(echo, "dec_layers"));
  c.heads = static_cast<int>(ParseD(echo, "heads"));
  c.ffn_mult = static_cast<int>(ParseD(echo, "ffn_mult"));
  c.time_dim = static_cast<int>(ParseD(echo, "time_dim"));
  c.cond_drop = ParseD(echo, "cond_drop");
  c.sigma_min = ParseD(echo, "sigma_min");
  c.dur_weight = ParseD(echo, "dur_weight");
  c.init_seed = std::stoull(echo.at("init_seed"));
  return c;
}

SynthModel::SynthModel(const SynthConfig& cfg) : cfg_(cfg) {
  ACN_CHECK(cfg.dim % cfg.heads == 0, "synth: dim % heads != 0");
  ACN_CHECK(cfg.sigma_min > 0.0 && cfg.sigma_min < 0.5,
            "synth: sigma_min out of range");
  Rng rng(cfg.init_seed);
  const double emb_scale = 1.0 / std::sqrt(cfg.dim);
  tok_embed_ =
      ps_.Add("tok.embed", Tensor::Gaussian(cfg.vocab, cfg.dim, rng, emb_scale));
  null_tok_ = ps_.Add("null.tok", Tensor::Gaussian(1, cfg.dim, rng, emb_scale));
  null_speaker_ =
      ps_.Add("null.speaker",
              Tensor::Gaussian(1, cfg.speaker_dim, rng,
                               1.0 / std::sqrt(cfg.speaker_dim)));
  for (int l = 0; l < cfg.enc_layers; ++l)
    enc_blocks_.push_back(MakeBlock(&ps_, "enc.b" + std::to_string(l), cfg.dim,
                                    cfg.heads, cfg.dim * cfg.ffn_mult, 1, false,
                                    &rng));
  enc_final_ = MakeLn(&ps_, "enc.final", cfg.dim);
  dur_h1_ = MakeLinear(&ps_, "dur.h1", 3 * cfg.dim + cfg.speaker_dim, cfg.dim,
                       &rng);
  dur_h2_ = MakeLinear(&ps_, "dur.h2", 3 * cfg.dim, cfg.dim, &rng);
  dur_out_ = MakeLinear(&ps_, "dur.out", cfg.dim, 1, &rng);
  in_proj_ = MakeLinear(&ps_, "in.proj", cfg.feat_dim + cfg.dim, cfg.dim, &rng);
  cond_h1_ = MakeLinear(&ps_, "cond.h1", cfg.time_dim + cfg.speaker_dim,
                        cfg.dim, &rng);
  cond_h2_ = MakeLinear(&ps_, "cond.h2", cfg.dim, cfg.dim, &rng);
  for (int l = 0; l < cfg.dec_layers; ++l)
    dec_blocks_.push_back(MakeBlock(&ps_, "dec.b" + std::to_string(l), cfg.dim,
                                    cfg.heads, cfg.dim * cfg.ffn_mult, cfg.dim,
                                    false, &rng));
  dec_final_ = MakeLn(&ps_, "dec.final", cfg.dim);
  head_ = MakeLinear(&ps_, "head", cfg.dim, cfg.feat_dim, &rng);
}

Graph::Var SynthModel::EncodeTokens(Graph* g,
                                    const std::vector<int>& tokens) const {
  ACN_CHECK(!tokens.empty(), "synth: empty token plan");
  for (int t : tokens)
    ACN_CHECK(t >= 0 && t < cfg_.vocab, "synth: bad token " << t);
  const int n = static_cast<int>(tokens.size());
  Graph::Var x = g->Add(g->Rows(g->Param(tok_embed_), tokens),
                        g->Input(SinusoidalPositions(n, cfg_.dim)));
  for (const auto& b : enc_blocks_)
    x = ApplyBlock(g, b, x, -1, nullptr, -1, nullptr);
  return ApplyLn(g, enc_final_, x);
}

Graph::Var SynthModel::PredictLogDurs(
    Graph* g, Graph::Var enc, const std::vector<double>& speaker) const {
  ACN_CHECK(static_cast<int>(speaker.size()) == cfg_.speaker_dim,
            "synth: bad speaker vector");
  Tensor s(1, cfg_.speaker_dim);
  for (int i = 0; i < cfg_.speaker_dim; ++i) s.at(0, i) = speaker[i];
  Graph::Var spk = g->RepeatRows(g->Input(s), {g->RowsOf(enc)});
  Graph::Var w1 = g->ConcatCols(
      {g->ShiftRows(enc, 1), enc, g->ShiftRows(enc, -1), spk});
  Graph::Var h = g->Gelu(ApplyLinear(g, dur_h1_, w1));
  Graph::Var w2 =
      g->ConcatCols({g->ShiftRows(h, 1), h, g->ShiftRows(h, -1)});
  Graph::Var h2 = g->Gelu(ApplyLinear(g, dur_h2_, w2));
  return ApplyLinear(g, dur_out_, h2);
}

Graph::Var SynthModel::Velocity(Graph* g, Graph::Var x_t, double t,
                                Graph::Var enc, const std::vector<int>& durs,
                                const std::vector<double>* speaker) const {
  const int T = g->RowsOf(x_t);
  Graph::Var tokcond;
  if (enc >= 0) {
    ACN_CHECK(static_cast<int>(durs.size()) == g->RowsOf(enc),
              "synth: durs vs encoder rows");
    long total = 0;
    for (int d : durs) total += d;
    ACN_CHECK(total == T, "synth: durations sum " << total << " != " << T);
    tokcond = g->RepeatRows(enc, durs);
  } else {
    tokcond = g->RepeatRows(g->Param(null_tok_), {T});
  }
  Graph::Var x = ApplyLinear(g, in_proj_, g->ConcatCols({x_t, tokcond}));
  x = g->Add(x, g->Input(SinusoidalPositions(T, cfg_.dim)));

  Graph::Var spk;
  if (speaker != nullptr) {
    ACN_CHECK(static_cast<int>(speaker->size()) == cfg_.speaker_dim,
              "synth: bad speaker vector");
    Tensor s(1, cfg_.speaker_dim);
    for (int i = 0; i < cfg_.speaker_dim; ++i) s.at(0, i) = (*speaker)[i];
    spk = g->Input(s);
  } else {
    spk = g->Param(null_speaker_);
  }
  Graph::Var c = ApplyLinear(
      g, cond_h2_,
      g->Gelu(ApplyLinear(
          g, cond_h1_,
          g->ConcatCols(
              {g->Input(SinusoidalScalar(t, cfg_.time_dim)), spk}))));
  for (const auto& b : dec_blocks_)
    x = ApplyBlock(g, b, x, c, nullptr, -1, nullptr);
  return ApplyLinear(g, head_, ApplyLn(g, dec_final_, x));
}

Graph::Var SynthModel::ExampleLoss(Graph* g, const SynthExample& ex, double t,
                                   const Tensor& x0, bool drop_cond) const {
  const int n = static_cast<int>(ex.tokens.size());
  ACN_CHECK(n > 0 && ex.durs.size() == ex.tokens.size(),
            "synth: bad example plan");
  long total = 0;
  for (int d : ex.durs) {
    ACN_CHECK(d >= 1, "synth: nonpositive duration");
    total += d;
  }
  ACN_CHECK(ex.features.rows == total && ex.features.cols == cfg_.feat_dim,
            "synth: features shape mismatch");
  ACN_CHECK(x0.same_shape(ex.features), "synth: noise shape mismatch");

  Graph::Var enc = EncodeTokens(g, ex.tokens);
  Tensor log_durs(n, 1);
  for (int i = 0; i < n; ++i) log_durs.at(i, 0) = std::log(ex.durs[i]);
  Graph::Var dur_loss = g->Scale(
      g->MseSum(PredictLogDurs(g, enc, ex.speaker), g->Input(log_durs)),
      1.0 / n);

  Graph::Var x_t = g->Input(FmInterpolate(x0, ex.features, t, cfg_.sigma_min));
  Graph::Var vstar =
      g->Input(FmTargetVelocity(x0, ex.features, cfg_.sigma_min));
  Graph::Var v = Velocity(g, x_t, t, drop_cond ? -1 : enc, ex.durs,
                          drop_cond ? nullptr : &ex.speaker);
  Graph::Var flow_loss =
      g->Scale(g->MseSum(v, vstar), 1.0 / (ex.features.size()));
  return g->Add(flow_loss, g->Scale(dur_loss, cfg_.dur_weight));
}

Tensor SynthModel::SampleFeatures(const std::vector<int>& tokens,
                                  const std::vector<int>& durs,
                                  const std::vector<double>& speaker,
                                  double cfg_strength, int steps,
                                  uint64_t seed) const {
  ACN_CHECK(steps >= 1, "synth: steps < 1");
  long total = 0;
  for (int d : durs) total += d;
  ACN_CHECK(total >= 1, "synth: empty frame plan");
  Rng rng(seed);
  Tensor x = Tensor::Gaussian(static_cast<int>(total), cfg_.feat_dim, rng);
  for (int k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) / steps;
    Graph g(&ps_);
    Graph::Var x_in = g.Input(x);
    Graph::Var enc = EncodeTokens(&g, tokens);
    Tensor v = g.Value(Velocity(&g, x_in, t, enc, durs, &speaker));
    if (cfg_strength != 1.0) {
      Tensor vu = g.Value(Velocity(&g, x_in, t, -1, durs, nullptr));
      v = CfgVelocity(vu, v, cfg_strength);
    }
    Axpy(1.0 / steps, v, &x);
  }
  return x;
}

std::vector<double> SynthModel::PredictDurations(
    const std::vector<int>& tokens, const std::vector<double>& speaker) const {
  Graph g(&ps_);
  const Tensor& ld =
      g.Value(PredictLogDurs(&g, EncodeTokens(&g, tokens), speaker));
  std::vector<double> out(ld.rows);
  for (int i = 0; i < ld.rows; ++i) out[i] = std::exp(ld.at(i, 0));
  return out;
}

void SynthModel::Save(const std::string& path) const {
  SaveCheckpoint(path, ps_, cfg_.Echo());
}

std::unique_ptr<SynthModel> SynthModel::Load(const std::string& path) {
  ParamStore loaded;
  std::map<std::string, std::string> echo;
  LoadCheckpoint(path, &loaded, &echo);
  auto model = std::make_unique<SynthModel>(SynthConfig::FromEcho(echo));
  ParamStore& ps = model->params();
  if (loaded.Count() != ps.Count() || loaded.TotalSize() != ps.TotalSize())
    throw ConfigError("synth checkpoint layout mismatch: " + path);
  for (int i = 0; i < ps.Count(); ++i)
    if (loaded.InfoOf(i).name != ps.InfoOf(i).name ||
        loaded.InfoOf(i).rows != ps.InfoOf(i).rows ||
        loaded.InfoOf(i).cols != ps.InfoOf(i).cols)
      throw ConfigError("synth checkpoint tensor mismatch: " +
                        loaded.InfoOf(i).name);
  ps.Flat() = loaded.Flat();
  return model;
}

TrainStats TrainSynth(SynthModel* model, const SynthSampler& sampler,
                      const std::vector<SynthExample>& valid,
                      const TrainOptions& opts) {
  ParamStore& ps = model->params();
  const SynthConfig& cfg = model->config();
  auto step_fn = [&](int step, std::vector<double>* grad) {
    double loss_sum = 0.0;
    for (int lane = 0; lane < opts.batch; ++lane) {
      SynthExample ex = sampler(step, lane);
      Rng r(DeriveSeed(opts.seed, step, lane));
      const double t = r.uniform();
      const bool drop = r.uniform() < cfg.cond_drop;
      Tensor x0 =
          Tensor::Gaussian(ex.features.rows, ex.features.cols, r);
      Graph g(&ps);
      Graph::Var loss = model->ExampleLoss(&g, ex, t, x0, drop);
      loss_sum += g.Value(loss).at(0, 0);
      g.Backward(g.Scale(loss, 1.0 / opts.batch));
      g.FlushParamGrads(grad);
    }
    return loss_sum / opts.batch;
  };
  TrainEvalFn eval_fn;
  if (!valid.empty())
    eval_fn = [&]() { return EvalSynthLoss(*model, valid, opts.seed); };
  TrainOptions local = opts;
  if (local.tag.empty()) local.tag = "synth";
  return RunTraining(&ps, step_fn, eval_fn, local);
}

double EvalSynthLoss(const SynthModel& model,
                     const std::vector<SynthExample>& examples,
                     uint64_t seed) {
  ACN_CHECK(!examples.empty(), "EvalSynthLoss: empty set");
  double sum = 0.0;
  for (size_t i = 0; i < examples.size(); ++i) {
    const SynthExample& ex = examples[i];
    Rng r(DeriveSeed(seed, 0xe7a1, i));
    const double t = r.uniform();
    Tensor x0 = Tensor::Gaussian(ex.features.rows, ex.features.cols, r);
    Graph g(&model.params());
    sum += g.Value(model.ExampleLoss(&g, ex, t, x0, false)).at(0, 0);
  }
  return sum / examples.size();
}

}  // namespace accnorm
