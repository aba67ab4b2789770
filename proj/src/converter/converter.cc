// converter/converter.cc

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

#include "converter/converter.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "nn/checkpoint.h"

namespace accnorm {

namespace {

std::string Fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

double ParseD(const std::map<std::string, std::string>& m,
              const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw ConfigError("converter echo missing key: " + key);
  return std::stod(it->second);
}

}  // namespace

std::map<std::string, std::string> ConverterConfig::Echo() const {
  return {{"arch", "converter"},
          {"vocab", std::to_string(vocab)},
          {"phones", std::to_string(phones)},
          {"accents", std::to_string(accents)},
          {"layers", std::to_string(layers)},
          {"dim", std::to_string(dim)},
          {"heads", std::to_string(heads)},
          {"ffn_mult", std::to_string(ffn_mult)},
          {"accent_dim", std::to_string(accent_dim)},
          {"ctc_weight", Fmt(ctc_weight)},
          {"use_accent_embedding", use_accent_embedding ? "1" : "0"},
          {"use_phone_supervision", use_phone_supervision ? "1" : "0"},
          {"init_seed", std::to_string(init_seed)}};
}

ConverterConfig ConverterConfig::FromEcho(
    const std::map<std::string, std::string>& echo) {
  auto it = echo.find("arch");
  if (it == echo.end() || it->second != "converter")
    throw ConfigError("checkpoint is not a converter model");
  ConverterConfig c;
  c.vocab = static_cast<int>(ParseD(echo, "vocab"));
  c.phones = static_cast<int>(ParseD(echo, "phones"));
  c.accents = static_cast<int>(ParseD(echo, "accents"));
  c.layers = static_cast<int>(ParseD(echo, "layers"));
  c.dim = static_cast<int>(ParseD(echo, "dim"));
  c.heads = static_cast<int>(ParseD(echo, "heads"));
  c.ffn_mult = static_cast<int>(ParseD(echo, "ffn_mult"));
  c.accent_dim = static_cast<int>(ParseD(echo, "accent_dim"));
  c.ctc_weight = ParseD(echo, "ctc_weight");
  c.use_accent_embedding = ParseD(echo, "use_accent_embedding") != 0;
  c.use_phone_supervision = ParseD(echo, "use_phone_supervision") != 0;
  c.init_seed = std::stoull(echo.at("init_seed"));
  return c;
}

ConverterModel::ConverterModel(const ConverterConfig& cfg) : cfg_(cfg) {
  ACN_CHECK(cfg.dim % cfg.heads == 0, "converter: dim % heads != 0");
  Rng rng(cfg.init_seed);
  const double emb_scale = 1.0 / std::sqrt(cfg.dim);
  net_.enc_embed = ps_.Add(
      "enc.embed", Tensor::Gaussian(cfg.vocab + 1, cfg.dim, rng, emb_scale));
  net_.dec_embed = ps_.Add(
      "dec.embed", Tensor::Gaussian(cfg.vocab + 1, cfg.dim, rng, emb_scale));
  net_.accent_table =
      ps_.Add("accent.table",
              Tensor::Gaussian(cfg.accents + 1, cfg.accent_dim, rng,
                               1.0 / std::sqrt(cfg.accent_dim)));
  for (int l = 0; l < cfg.layers; ++l)
    net_.enc_blocks.push_back(MakeBlock(&ps_, "enc.b" + std::to_string(l),
                                        cfg.dim, cfg.heads,
                                        cfg.dim * cfg.ffn_mult, cfg.accent_dim,
                                        false, &rng));
  net_.enc_final = MakeLn(&ps_, "enc.final", cfg.dim);
  for (int l = 0; l < cfg.layers; ++l)
    net_.dec_blocks.push_back(MakeBlock(&ps_, "dec.b" + std::to_string(l),
                                        cfg.dim, cfg.heads,
                                        cfg.dim * cfg.ffn_mult, cfg.accent_dim,
                                        true, &rng));
  net_.dec_final = MakeLn(&ps_, "dec.final", cfg.dim);
  net_.out_head = MakeLinear(&ps_, "out.head", cfg.dim, cfg.vocab + 1, &rng);
  net_.ctc_head = MakeLinear(&ps_, "ctc.head", cfg.dim, cfg.phones + 1, &rng);
}

Graph::Var ConverterModel::Encode(Graph* g, const std::vector<int>& src,
                                  int accent_id) const {
  ACN_CHECK(!src.empty(), "converter: empty source");
  ACN_CHECK(accent_id >= 0 && accent_id <= cfg_.accents,
            "converter: bad accent id " << accent_id);
  for (int t : src)
    ACN_CHECK(t >= 0 && t <= cfg_.vocab, "converter: source token " << t);
  const int n = static_cast<int>(src.size());
  Graph::Var x = g->Add(g->Rows(g->Param(net_.enc_embed), src),
                        g->Input(SinusoidalPositions(n, cfg_.dim)));
  Graph::Var cond = -1;
  if (cfg_.use_accent_embedding)
    cond = g->Rows(g->Param(net_.accent_table), {accent_id});
  for (const auto& b : net_.enc_blocks)
    x = ApplyBlock(g, b, x, cond, nullptr, -1, nullptr);
  return ApplyLn(g, net_.enc_final, x);
}

Graph::Var ConverterModel::DecodeLogits(Graph* g, Graph::Var memory,
                                        const std::vector<int>& tgt_in) const {
  ACN_CHECK(!tgt_in.empty(), "converter: empty decoder input");
  const int m = static_cast<int>(tgt_in.size());
  Graph::Var x = g->Add(g->Rows(g->Param(net_.dec_embed), tgt_in),
                        g->Input(SinusoidalPositions(m, cfg_.dim)));
  Tensor mask = CausalMask(m);
  for (const auto& b : net_.dec_blocks)
    x = ApplyBlock(g, b, x, -1, &mask, memory, nullptr);
  return ApplyLinear(g, net_.out_head, ApplyLn(g, net_.dec_final, x));
}

Graph::Var ConverterModel::CtcLogits(Graph* g, Graph::Var memory) const {
  return ApplyLinear(g, net_.ctc_head, memory);
}

Graph::Var ConverterModel::ExampleLoss(Graph* g, const ConverterExample& ex,
                                       bool* ctc_skipped) const {
  ACN_CHECK(!ex.tgt.empty(), "converter: empty target");
  Graph::Var mem = Encode(g, ex.src, ex.accent_id);
  std::vector<int> tgt_in(1, bos());
  tgt_in.insert(tgt_in.end(), ex.tgt.begin(), ex.tgt.end());
  std::vector<int> tgt_out(ex.tgt);
  tgt_out.push_back(eos());
  Graph::Var loss =
      g->CrossEntropyRows(DecodeLogits(g, mem, tgt_in), tgt_out);
  if (cfg_.use_phone_supervision && !ex.phones.empty()) {
    Graph::Var ctc = g->CtcLoss(CtcLogits(g, mem), ex.phones);
    if (std::isfinite(g->Value(ctc).at(0, 0))) {
      loss = g->Add(loss, g->Scale(ctc, cfg_.ctc_weight));
    } else if (ctc_skipped != nullptr) {
      *ctc_skipped = true;
    }
  }
  return loss;
}

void ConverterModel::Save(const std::string& path) const {
  SaveCheckpoint(path, ps_, cfg_.Echo());
}

std::unique_ptr<ConverterModel> ConverterModel::Load(const std::string& path) {
  ParamStore loaded;
  std::map<std::string, std::string> echo;
  LoadCheckpoint(path, &loaded, &echo);
  auto model = std::make_unique<ConverterModel>(ConverterConfig::FromEcho(echo));
  ParamStore& ps = model->params();
  if (loaded.Count() != ps.Count() || loaded.TotalSize() != ps.TotalSize())
    throw ConfigError("converter checkpoint layout mismatch: " + path);
  for (int i = 0; i < ps.Count(); ++i)
    if (loaded.InfoOf(i).name != ps.InfoOf(i).name ||
        loaded.InfoOf(i).rows != ps.InfoOf(i).rows ||
        loaded.InfoOf(i).cols != ps.InfoOf(i).cols)
      throw ConfigError("converter checkpoint tensor mismatch: " +
                        loaded.InfoOf(i).name);
  ps.Flat() = loaded.Flat();
  return model;
}

TrainStats TrainConverter(ConverterModel* model, const ExampleSampler& sampler,
                          const std::vector<ConverterExample>& valid,
                          const TrainOptions& opts) {
  ParamStore& ps = model->params();
  long ctc_skipped = 0;
  auto step_fn = [&](int step, std::vector<double>* grad) {
    std::vector<ConverterExample> batch;
    batch.reserve(opts.batch);
    long batch_tokens = 0;
    for (int lane = 0; lane < opts.batch; ++lane) {
      batch.push_back(sampler(step, lane));
      batch_tokens += static_cast<long>(batch.back().tgt.size()) + 1;
    }
    double loss_sum = 0.0;
    for (const auto& ex : batch) {
      Graph g(&ps);
      bool skipped = false;
      Graph::Var loss = model->ExampleLoss(&g, ex, &skipped);
      if (skipped) ++ctc_skipped;
      loss_sum += g.Value(loss).at(0, 0);
      g.Backward(g.Scale(loss, 1.0 / batch_tokens));
      g.FlushParamGrads(grad);
    }
    return loss_sum / batch_tokens;
  };
  TrainEvalFn eval_fn;
  if (!valid.empty())
    eval_fn = [&]() { return EvalConverterLoss(*model, valid); };
  TrainOptions local = opts;
  if (local.tag.empty()) local.tag = "converter";
  TrainStats stats = RunTraining(&ps, step_fn, eval_fn, local);
  stats.ctc_skipped = ctc_skipped;
  return stats;
}

double EvalConverterLoss(const ConverterModel& model,
                         const std::vector<ConverterExample>& examples) {
  ACN_CHECK(!examples.empty(), "EvalConverterLoss: empty set");
  double sum = 0.0;
  long tokens = 0;
  for (const auto& ex : examples) {
    Graph g(&model.params());
    sum += g.Value(model.ExampleLoss(&g, ex, nullptr)).at(0, 0);
    tokens += static_cast<long>(ex.tgt.size()) + 1;
  }
  return sum / tokens;
}

// ---------------------------------------------------------------------------
// Inference path. Plain tensors, per-beam KV caches. Mirrors the graph ops
// exactly (same kernels, same loop order), pinned by an equivalence test.

namespace {

constexpr double kLnEpsInf = 1e-5;
constexpr double kGeluCInf = 0.7978845608028654;
constexpr double kGeluAInf = 0.044715;

struct InfLinear {
  Tensor w, b;
};

struct InfLn {
  Tensor g, b;
};

struct InfAdaLn {
  InfLn ln;
  InfLinear mod;
  int dim = 0;
};

struct InfAttn {
  InfLinear q, k, v, o;
  int heads = 0;
  int dim = 0;
};

struct InfBlock {
  InfAdaLn n1, n2, n3;
  InfAttn self, cross;
  InfLinear ffn_in, ffn_out;
  bool has_cross = false;
};

InfLinear GrabLinear(const ParamStore& ps, const LinearParams& p) {
  return {ps.Copy(p.w), ps.Copy(p.b)};
}

InfLn GrabLn(const ParamStore& ps, const LnParams& p) {
  return {ps.Copy(p.gain), ps.Copy(p.bias)};
}

InfAdaLn GrabAdaLn(const ParamStore& ps, const AdaLnParams& p) {
  return {GrabLn(ps, p.ln), GrabLinear(ps, p.proj), p.dim};
}

InfAttn GrabAttn(const ParamStore& ps, const AttnParams& p) {
  return {GrabLinear(ps, p.q), GrabLinear(ps, p.k), GrabLinear(ps, p.v),
          GrabLinear(ps, p.o), p.heads, p.dim};
}

InfBlock GrabBlock(const ParamStore& ps, const BlockParams& p) {
  InfBlock b;
  b.n1 = GrabAdaLn(ps, p.norm1);
  b.n2 = GrabAdaLn(ps, p.norm2);
  b.self = GrabAttn(ps, p.self_attn);
  if (p.has_cross) {
    b.n3 = GrabAdaLn(ps, p.norm3);
    b.cross = GrabAttn(ps, p.cross_attn);
    b.has_cross = true;
  }
  b.ffn_in = GrabLinear(ps, p.ffn.in);
  b.ffn_out = GrabLinear(ps, p.ffn.out);
  return b;
}

Tensor LinearF(const Tensor& x, const InfLinear& l) {
  Tensor y(x.rows, l.w.cols);
  GemmNN(x, l.w, &y);
  for (int i = 0; i < y.rows; ++i)
    for (int j = 0; j < y.cols; ++j) y.at(i, j) += l.b.at(0, j);
  return y;
}

Tensor LnF(const Tensor& x, const InfLn& p) {
  Tensor out(x.rows, x.cols);
  const int c = x.cols;
  for (int i = 0; i < x.rows; ++i) {
    const double* xi = x.row(i);
    double mu = 0.0;
    for (int j = 0; j < c; ++j) mu += xi[j];
    mu /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= c;
    double inv = 1.0 / std::sqrt(var + kLnEpsInf);
    for (int j = 0; j < c; ++j)
      out.at(i, j) = (xi[j] - mu) * inv * p.g.at(0, j) + p.b.at(0, j);
  }
  return out;
}

// cond is 1 x D or empty for the unconditioned case.
Tensor AdaLnF(const Tensor& x, const InfAdaLn& p, const Tensor& cond) {
  Tensor h = LnF(x, p.ln);
  if (cond.rows == 0) return h;
  Tensor mod = LinearF(cond, p.mod);
  for (int i = 0; i < h.rows; ++i)
    for (int j = 0; j < p.dim; ++j)
      h.at(i, j) = h.at(i, j) * (1.0 + mod.at(0, j)) + mod.at(0, p.dim + j);
  return h;
}

void GeluF(Tensor* x) {
  for (auto& v : x->data) {
    double u = kGeluCInf * (v + kGeluAInf * v * v * v);
    v = 0.5 * v * (1.0 + std::tanh(u));
  }
}

Tensor SliceColsF(const Tensor& x, int c0, int c1) {
  Tensor out(x.rows, c1 - c0);
  for (int i = 0; i < x.rows; ++i)
    for (int j = c0; j < c1; ++j) out.at(i, j - c0) = x.at(i, j);
  return out;
}

// Full multi-head attention over precomputed q/k/v activations, optional
// causal masking. Matches ApplyAttn (logits scaled after the product).
Tensor AttendF(const Tensor& q, const Tensor& k, const Tensor& v,
               const InfAttn& p, bool causal) {
  const int dh = p.dim / p.heads;
  Tensor out(q.rows, p.dim);
  for (int h = 0; h < p.heads; ++h) {
    Tensor qh = SliceColsF(q, h * dh, (h + 1) * dh);
    Tensor kh = SliceColsF(k, h * dh, (h + 1) * dh);
    Tensor vh = SliceColsF(v, h * dh, (h + 1) * dh);
    Tensor logits(qh.rows, kh.rows);
    GemmNT(qh, kh, &logits);
    const double s = 1.0 / std::sqrt(dh);
    for (auto& val : logits.data) val *= s;
    if (causal)
      for (int i = 0; i < logits.rows; ++i)
        for (int j = i + 1; j < logits.cols; ++j) logits.at(i, j) += -1e30;
    SoftmaxRows(&logits);
    Tensor ctx(qh.rows, dh);
    GemmNN(logits, vh, &ctx);
    for (int i = 0; i < ctx.rows; ++i)
      for (int j = 0; j < dh; ++j) out.at(i, h * dh + j) = ctx.at(i, j);
  }
  return out;
}

Tensor SelfAttnF(const Tensor& x, const InfAttn& p, bool causal) {
  Tensor q = LinearF(x, p.q);
  Tensor k = LinearF(x, p.k);
  Tensor v = LinearF(x, p.v);
  return LinearF(AttendF(q, k, v, p, causal), p.o);
}

Tensor AddT(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  for (size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
  return out;
}

Tensor FfnF(const Tensor& x, const InfBlock& b) {
  Tensor h = LinearF(x, b.ffn_in);
  GeluF(&h);
  return LinearF(h, b.ffn_out);
}

// Row `pos` of SinusoidalPositions(n, dim), without building the table.
Tensor PosRow(int pos, int dim) {
  Tensor t(1, dim);
  for (int i = 0; i < dim / 2; ++i) {
    double freq = std::pow(10000.0, -2.0 * i / dim);
    t.at(0, 2 * i) = std::sin(pos * freq);
    t.at(0, 2 * i + 1) = std::cos(pos * freq);
  }
  return t;
}

}  // namespace

struct ConverterInference::Impl {
  ConverterConfig cfg;
  Tensor enc_embed, dec_embed, accent_table;
  std::vector<InfBlock> enc_blocks, dec_blocks;
  InfLn enc_final, dec_final;
  InfLinear out_head;

  explicit Impl(const ConverterModel& model) : cfg(model.config()) {
    const ParamStore& ps = model.params();
    const auto& net = model.net();
    enc_embed = ps.Copy(net.enc_embed);
    dec_embed = ps.Copy(net.dec_embed);
    accent_table = ps.Copy(net.accent_table);
    for (const auto& b : net.enc_blocks) enc_blocks.push_back(GrabBlock(ps, b));
    for (const auto& b : net.dec_blocks) dec_blocks.push_back(GrabBlock(ps, b));
    enc_final = GrabLn(ps, net.enc_final);
    dec_final = GrabLn(ps, net.dec_final);
    out_head = GrabLinear(ps, net.out_head);
  }

  Tensor CondRow(int accent_id) const {
    if (!cfg.use_accent_embedding) return Tensor();
    Tensor cond(1, cfg.accent_dim);
    for (int j = 0; j < cfg.accent_dim; ++j)
      cond.at(0, j) = accent_table.at(accent_id, j);
    return cond;
  }

  Tensor EncodeF(const std::vector<int>& src, int accent_id) const {
    const int n = static_cast<int>(src.size());
    Tensor pos = SinusoidalPositions(n, cfg.dim);
    Tensor x(n, cfg.dim);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < cfg.dim; ++j)
        x.at(i, j) = enc_embed.at(src[i], j) + pos.at(i, j);
    Tensor cond = CondRow(accent_id);
    for (const auto& b : enc_blocks) {
      x = AddT(x, SelfAttnF(AdaLnF(x, b.n1, cond), b.self, false));
      x = AddT(x, FfnF(AdaLnF(x, b.n2, cond), b));
    }
    return LnF(x, enc_final);
  }

  // Per-layer cross attention K/V, computed once per source.
  struct CrossKv {
    std::vector<Tensor> k, v;
  };

  CrossKv CrossFromMemory(const Tensor& memory) const {
    CrossKv kv;
    for (const auto& b : dec_blocks) {
      kv.k.push_back(LinearF(memory, b.cross.k));
      kv.v.push_back(LinearF(memory, b.cross.v));
    }
    return kv;
  }

  // Growing per-layer self-attention cache for one beam.
  struct BeamCache {
    std::vector<Tensor> k, v;  // t x dim per layer
  };

  static void AppendRow(Tensor* m, const Tensor& row) {
    if (m->rows == 0) *m = Tensor(0, row.cols);
    m->data.insert(m->data.end(), row.data.begin(), row.data.end());
    m->rows += 1;
  }

  // One decoder position through all layers; appends to the cache and
  // returns the next-token logits row.
  Tensor DecodeStep(int token, int t_pos, const CrossKv& cross,
                    BeamCache* cache) const {
    Tensor pos = PosRow(t_pos, cfg.dim);
    Tensor x(1, cfg.dim);
    for (int j = 0; j < cfg.dim; ++j)
      x.at(0, j) = dec_embed.at(token, j) + pos.at(0, j);
    const Tensor no_cond;
    if (cache->k.empty()) {
      cache->k.resize(dec_blocks.size());
      cache->v.resize(dec_blocks.size());
    }
    for (size_t l = 0; l < dec_blocks.size(); ++l) {
      const InfBlock& b = dec_blocks[l];
      Tensor n1 = AdaLnF(x, b.n1, no_cond);
      AppendRow(&cache->k[l], LinearF(n1, b.self.k));
      AppendRow(&cache->v[l], LinearF(n1, b.self.v));
      Tensor q = LinearF(n1, b.self.q);
      x = AddT(x, LinearF(AttendF(q, cache->k[l], cache->v[l], b.self, false),
                          b.self.o));
      Tensor n3 = AdaLnF(x, b.n3, no_cond);
      Tensor qc = LinearF(n3, b.cross.q);
      x = AddT(x,
               LinearF(AttendF(qc, cross.k[l], cross.v[l], b.cross, false),
                       b.cross.o));
      x = AddT(x, FfnF(AdaLnF(x, b.n2, no_cond), b));
    }
    return LinearF(LnF(x, dec_final), out_head);
  }
};

ConverterInference::ConverterInference(const ConverterModel& model)
    : impl_(new Impl(model)) {}

ConverterInference::~ConverterInference() = default;

Tensor ConverterInference::ForcedLogits(const std::vector<int>& src,
                                        int accent_id,
                                        const std::vector<int>& tgt_in) const {
  const Impl& im = *impl_;
  Tensor memory = im.EncodeF(src, accent_id);
  const int m = static_cast<int>(tgt_in.size());
  Tensor pos = SinusoidalPositions(m, im.cfg.dim);
  Tensor x(m, im.cfg.dim);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < im.cfg.dim; ++j)
      x.at(i, j) = im.dec_embed.at(tgt_in[i], j) + pos.at(i, j);
  const Tensor no_cond;
  for (const auto& b : im.dec_blocks) {
    x = AddT(x, SelfAttnF(AdaLnF(x, b.n1, no_cond), b.self, true));
    Tensor n3 = AdaLnF(x, b.n3, no_cond);
    Tensor q = LinearF(n3, b.cross.q);
    Tensor k = LinearF(memory, b.cross.k);
    Tensor v = LinearF(memory, b.cross.v);
    x = AddT(x, LinearF(AttendF(q, k, v, b.cross, false), b.cross.o));
    x = AddT(x, FfnF(AdaLnF(x, b.n2, no_cond), b));
  }
  return LinearF(LnF(x, im.dec_final), im.out_head);
}

DecodeResult ConverterInference::Decode(const std::vector<int>& src,
                                        int accent_id, int beam_width) const {
  ACN_CHECK(!src.empty(), "Decode: empty source");
  ACN_CHECK(beam_width >= 1, "Decode: beam width < 1");
  const Impl& im = *impl_;
  const int eos = im.cfg.vocab;
  const int max_len = 2 * static_cast<int>(src.size()) + 8;

  Tensor memory = im.EncodeF(src, accent_id);
  Impl::CrossKv cross = im.CrossFromMemory(memory);

  struct Beam {
    std::vector<int> toks;
    double logp = 0.0;
    Impl::BeamCache cache;
  };
  struct Done {
    std::vector<int> toks;
    double logp;
  };
  std::vector<Beam> live(1);
  std::vector<Done> done;

  for (int t = 0; t < max_len && !live.empty(); ++t) {
    struct Cand {
      int parent;
      int token;
      double logp;
    };
    std::vector<Cand> cands;
    for (size_t bi = 0; bi < live.size(); ++bi) {
      Beam& b = live[bi];
      const int in_tok = b.toks.empty() ? im.cfg.vocab : b.toks.back();
      Tensor logits = im.DecodeStep(in_tok, t, cross, &b.cache);
      // Log softmax of the single row.
      double mx = logits.at(0, 0);
      for (int j = 1; j < logits.cols; ++j) mx = std::max(mx, logits.at(0, j));
      double z = 0.0;
      for (int j = 0; j < logits.cols; ++j) z += std::exp(logits.at(0, j) - mx);
      const double lz = std::log(z) + mx;
      for (int j = 0; j < logits.cols; ++j)
        cands.push_back({static_cast<int>(bi), j, b.logp + logits.at(0, j) - lz});
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.logp != b.logp) return a.logp > b.logp;
      if (a.parent != b.parent) return a.parent < b.parent;
      return a.token < b.token;
    });
    std::vector<Beam> next;
    for (const Cand& c : cands) {
      if (static_cast<int>(next.size()) >= beam_width) break;
      if (c.token == eos) {
        if (static_cast<int>(done.size()) < beam_width)
          done.push_back({live[c.parent].toks, c.logp});
        continue;
      }
      Beam nb;
      nb.toks = live[c.parent].toks;
      nb.toks.push_back(c.token);
      nb.logp = c.logp;
      nb.cache = live[c.parent].cache;
      next.push_back(std::move(nb));
    }
    live.swap(next);
    if (static_cast<int>(done.size()) >= beam_width) break;
    // Scores only decrease; once the best finished beats every live beam,
    // extending cannot win.
    if (!done.empty() && !live.empty()) {
      double best_done = done[0].logp;
      for (const auto& d : done) best_done = std::max(best_done, d.logp);
      double best_live = live[0].logp;
      for (const auto& b : live) best_live = std::max(best_live, b.logp);
      if (best_done >= best_live) break;
    }
  }

  DecodeResult res;
  if (!done.empty()) {
    size_t best = 0;
    for (size_t i = 1; i < done.size(); ++i)
      if (done[i].logp > done[best].logp) best = i;
    res.tokens = done[best].toks;
    res.logprob = done[best].logp;
  } else {
    ACN_CHECK(!live.empty(), "Decode: no hypotheses");
    size_t best = 0;
    for (size_t i = 1; i < live.size(); ++i)
      if (live[i].logp > live[best].logp) best = i;
    res.tokens = live[best].toks;
    res.logprob = live[best].logp;
    res.truncated = true;
  }
  // Collapse accidental repeats so the output is a valid dedup sequence.
  std::vector<int> collapsed;
  for (int tok : res.tokens)
    if (collapsed.empty() || collapsed.back() != tok) collapsed.push_back(tok);
  res.tokens = std::move(collapsed);
  return res;
}

}  // namespace accnorm
