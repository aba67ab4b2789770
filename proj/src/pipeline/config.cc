// pipeline/config.cc

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

#include "pipeline/config.h"

#include <algorithm>
#include <cstdlib>
#include <iomanip>
#include <sstream>
#include <vector>

#include "base/common.h"
#include "base/io.h"
#include "base/rng.h"

namespace accnorm {

namespace {

std::string Trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string FmtD(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// Raw key/value lines plus consumption tracking, so leftovers can be
// reported as unknown keys.
class Reader {
 public:
  explicit Reader(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = Trim(line);
      if (line.empty()) continue;
      size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": expected key = value");
      std::string key = Trim(line.substr(0, eq));
      std::string val = Trim(line.substr(eq + 1));
      if (key.empty() || val.empty())
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": empty key or value");
      if (!raw_.emplace(key, val).second)
        throw ConfigError("duplicate config key: " + key);
    }
  }

  int GetInt(const std::string& key, int def, int lo, int hi) {
    long long v = def;
    auto it = raw_.find(key);
    if (it != raw_.end()) {
      char* end = nullptr;
      v = std::strtoll(it->second.c_str(), &end, 10);
      if (end == it->second.c_str() || *end != '\0')
        throw ConfigError("config key " + key + ": not an integer: " +
                          it->second);
      raw_.erase(it);
    }
    if (v < lo || v > hi)
      throw ConfigError("config key " + key + ": value " + std::to_string(v) +
                        " outside [" + std::to_string(lo) + ", " +
                        std::to_string(hi) + "]");
    return static_cast<int>(v);
  }

  double GetDouble(const std::string& key, double def, double lo, double hi) {
    double v = def;
    auto it = raw_.find(key);
    if (it != raw_.end()) {
      char* end = nullptr;
      v = std::strtod(it->second.c_str(), &end);
      if (end == it->second.c_str() || *end != '\0')
        throw ConfigError("config key " + key + ": not a number: " +
                          it->second);
      raw_.erase(it);
    }
    if (!(v >= lo && v <= hi))
      throw ConfigError("config key " + key + ": value " + FmtD(v) +
                        " outside [" + FmtD(lo) + ", " + FmtD(hi) + "]");
    return v;
  }

  bool GetBool(const std::string& key, bool def) {
    auto it = raw_.find(key);
    if (it == raw_.end()) return def;
    std::string v = it->second;
    raw_.erase(it);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key " + key + ": expected true or false, got " +
                      v);
  }

  uint64_t GetSeed(const std::string& key, uint64_t def) {
    auto it = raw_.find(key);
    if (it == raw_.end()) return def;
    char* end = nullptr;
    unsigned long long v = std::strtoull(it->second.c_str(), &end, 10);
    if (end == it->second.c_str() || *end != '\0')
      throw ConfigError("config key " + key + ": not an integer: " +
                        it->second);
    raw_.erase(it);
    return v;
  }

  void FailOnLeftovers() const {
    if (raw_.empty()) return;
    std::string msg = "unknown config key";
    if (raw_.size() > 1) msg += "s";
    msg += ":";
    for (const auto& kv : raw_) msg += " " + kv.first;
    throw ConfigError(msg);
  }

 private:
  std::map<std::string, std::string> raw_;
};

void FillTrainOptions(Reader* r, const std::string& prefix, TrainOptions* o,
                      int def_steps, int def_batch, double def_lr,
                      const std::string& tag) {
  o->steps = r->GetInt(prefix + ".train_steps", def_steps, 1, 10000000);
  o->batch = r->GetInt(prefix + ".batch", def_batch, 1, 4096);
  o->lr = r->GetDouble(prefix + ".lr", def_lr, 1e-8, 1.0);
  o->warmup = r->GetInt(prefix + ".warmup", 40, 0, 1000000);
  o->clip = r->GetDouble(prefix + ".clip", 1.0, 1e-6, 1000.0);
  o->valid_every = std::max(10, o->steps / 8);
  o->tag = tag;
}

void CheckDivisible(const std::string& key_dim, int dim,
                    const std::string& key_heads, int heads) {
  if (dim % heads != 0)
    throw ConfigError("config key " + key_dim + " (" + std::to_string(dim) +
                      ") must be divisible by " + key_heads + " (" +
                      std::to_string(heads) + ")");
}

void CheckEven(const std::string& key, int v) {
  if (v % 2 != 0)
    throw ConfigError("config key " + key + " must be even, got " +
                      std::to_string(v));
}

}  // namespace

ExperimentConfig ParseExperimentConfig(const std::string& text) {
  Reader r(text);
  ExperimentConfig c;

  c.seed = r.GetSeed("seed", 1);

  CorpusSpec& cs = c.corpus;
  cs.n_phones = r.GetInt("corpus.n_phones", 24, 4, 256);
  cs.vocab = r.GetInt("corpus.vocab", 64, 8, 4096);
  cs.feat_dim = r.GetInt("corpus.feat_dim", 20, 2, 256);
  cs.speaker_dim = r.GetInt("corpus.speaker_dim", 16, 2, 128);
  cs.n_accents = r.GetInt("corpus.n_accents", 6, 1, 32);
  cs.speakers_per_accent = r.GetInt("corpus.speakers_per_accent", 4, 2, 128);
  cs.native_speakers = r.GetInt("corpus.native_speakers", 24, 1, 1024);
  cs.train_per_accent = r.GetInt("corpus.train_per_accent", 320, 1, 1000000);
  cs.valid_per_accent = r.GetInt("corpus.valid_per_accent", 50, 1, 1000000);
  cs.test_per_accent = r.GetInt("corpus.test_per_accent", 80, 1, 1000000);
  cs.native_train = r.GetInt("corpus.native_train", 700, 1, 1000000);
  cs.native_valid = r.GetInt("corpus.native_valid", 50, 1, 1000000);
  cs.min_phones = r.GetInt("corpus.min_phones", 8, 1, 1000);
  cs.max_phones = r.GetInt("corpus.max_phones", 14, 1, 1000);
  cs.frame_hop = r.GetDouble("corpus.frame_hop", 0.02, 1e-6, 10.0);
  cs.noise_sigma = r.GetDouble("corpus.noise_sigma", 0.05, 0.0, 10.0);
  cs.emission_resample =
      r.GetDouble("corpus.emission_resample", 0.15, 0.0, 0.999);
  cs.seed = DeriveSeed(c.seed, 1);
  if (cs.vocab < 2 * cs.n_phones)
    throw ConfigError("corpus.vocab must be at least twice corpus.n_phones");
  if (cs.max_phones < cs.min_phones)
    throw ConfigError("corpus.max_phones must be >= corpus.min_phones");

  c.noise.p_mask = r.GetDouble("noise.p_mask", 0.2, 0.0, 0.9);
  c.noise.p_insert = r.GetDouble("noise.p_insert", 0.1, 0.0, 0.9);
  c.noise.p_replace = r.GetDouble("noise.p_replace", 0.1, 0.0, 0.9);
  if (c.noise.p_mask + c.noise.p_replace > 0.95)
    throw ConfigError("noise.p_mask + noise.p_replace must be <= 0.95");
  c.noise.vocab = cs.vocab;
  c.noise.mask_id = cs.vocab;

  ConverterConfig& cc = c.converter;
  cc.vocab = cs.vocab;
  cc.phones = cs.n_phones;
  cc.accents = cs.n_accents;
  cc.layers = r.GetInt("converter.layers", 2, 1, 16);
  cc.dim = r.GetInt("converter.dim", 64, 8, 1024);
  cc.heads = r.GetInt("converter.heads", 4, 1, 64);
  cc.ffn_mult = r.GetInt("converter.ffn_mult", 4, 1, 16);
  cc.accent_dim = r.GetInt("converter.accent_dim", 16, 1, 256);
  cc.ctc_weight = r.GetDouble("converter.ctc_weight", 1.0, 0.0, 100.0);
  cc.init_seed = DeriveSeed(c.seed, 2);
  CheckDivisible("converter.dim", cc.dim, "converter.heads", cc.heads);
  c.converter_beam = r.GetInt("converter.beam", 10, 1, 64);
  c.converter_aug = r.GetDouble("converter.aug_scale", 0.25, 0.0, 1.0);

  c.pretrain_opts.steps =
      r.GetInt("converter.pretrain_steps", 1500, 1, 10000000);
  c.pretrain_opts.batch = r.GetInt("converter.pretrain_batch", 16, 1, 4096);
  c.pretrain_opts.lr =
      r.GetDouble("converter.pretrain_lr", 1e-3, 1e-8, 1.0);
  c.pretrain_opts.valid_every = std::max(10, c.pretrain_opts.steps / 8);
  c.pretrain_opts.seed = DeriveSeed(c.seed, 3);
  c.pretrain_opts.tag = "pretrain";
  FillTrainOptions(&r, "converter", &c.converter_opts, 2500, 16, 1e-3,
                   "converter");
  c.pretrain_opts.warmup = c.converter_opts.warmup;
  c.pretrain_opts.clip = c.converter_opts.clip;
  c.converter_opts.seed = DeriveSeed(c.seed, 4);

  SynthConfig& sc = c.synth;
  sc.vocab = cs.vocab;
  sc.feat_dim = cs.feat_dim;
  sc.speaker_dim = cs.speaker_dim;
  sc.dim = r.GetInt("synth.dim", 64, 8, 1024);
  sc.enc_layers = r.GetInt("synth.enc_layers", 2, 1, 16);
  sc.dec_layers = r.GetInt("synth.dec_layers", 4, 1, 16);
  sc.heads = r.GetInt("synth.heads", 4, 1, 64);
  sc.ffn_mult = r.GetInt("synth.ffn_mult", 4, 1, 16);
  sc.time_dim = r.GetInt("synth.time_dim", 32, 2, 512);
  sc.cond_drop = r.GetDouble("synth.cond_drop", 0.2, 0.0, 0.999);
  sc.sigma_min = r.GetDouble("synth.sigma_min", 1e-4, 1e-12, 0.499);
  sc.dur_weight = r.GetDouble("synth.dur_weight", 1.0, 0.0, 100.0);
  sc.init_seed = DeriveSeed(c.seed, 5);
  CheckDivisible("synth.dim", sc.dim, "synth.heads", sc.heads);
  CheckEven("synth.time_dim", sc.time_dim);
  FillTrainOptions(&r, "synth", &c.synth_opts, 1200, 16, 1e-3, "synth");
  c.synth_opts.seed = DeriveSeed(c.seed, 6);
  c.synth_sampling_steps = r.GetInt("synth.sampling_steps", 32, 1, 10000);
  c.synth_cfg = r.GetDouble("synth.cfg_strength", 2.0, 0.0, 20.0);
  c.fidelity_cfg = r.GetDouble("synth.fidelity_cfg", 1.0, 0.0, 20.0);

  DurationFlowConfig& dc = c.durflow;
  dc.vocab = cs.vocab;
  dc.speaker_dim = cs.speaker_dim;
  dc.dim = r.GetInt("durflow.dim", 48, 8, 1024);
  dc.layers = r.GetInt("durflow.layers", 2, 1, 16);
  dc.heads = r.GetInt("durflow.heads", 4, 1, 64);
  dc.ffn_mult = r.GetInt("durflow.ffn_mult", 4, 1, 16);
  dc.time_dim = r.GetInt("durflow.time_dim", 16, 2, 512);
  dc.cond_drop = r.GetDouble("durflow.cond_drop", 0.2, 0.0, 0.999);
  dc.sigma_min = r.GetDouble("durflow.sigma_min", 1e-4, 1e-12, 0.499);
  dc.jitter_lo = r.GetDouble("durflow.jitter_lo", 0.85, 1e-3, 10.0);
  dc.jitter_hi = r.GetDouble("durflow.jitter_hi", 1.30, 1e-3, 10.0);
  dc.init_seed = DeriveSeed(c.seed, 7);
  CheckDivisible("durflow.dim", dc.dim, "durflow.heads", dc.heads);
  CheckEven("durflow.time_dim", dc.time_dim);
  if (dc.jitter_hi < dc.jitter_lo)
    throw ConfigError("durflow.jitter_hi must be >= durflow.jitter_lo");
  FillTrainOptions(&r, "durflow", &c.durflow_opts, 1500, 16, 1e-3, "durflow");
  c.durflow_opts.seed = DeriveSeed(c.seed, 8);
  c.durflow_sampling_steps = r.GetInt("durflow.sampling_steps", 32, 1, 10000);
  c.durflow_cfg = r.GetDouble("durflow.cfg_strength", 0.5, 0.0, 20.0);

  c.abl_accent_embeddings = r.GetBool("ablation.accent_embeddings", true);
  c.abl_phone_supervision = r.GetBool("ablation.phone_supervision", true);
  c.abl_pretraining = r.GetBool("ablation.pretraining", true);
  c.abl_extra_data = r.GetBool("ablation.extra_data", true);
  cc.use_accent_embedding = c.abl_accent_embeddings;
  cc.use_phone_supervision = c.abl_phone_supervision;

  c.fidelity_utts = r.GetInt("eval.fidelity_utts", 16, 1, 100000);
  c.synth_converted_utts =
      r.GetInt("eval.synth_converted_utts", 8, 0, 100000);
  c.kl_alpha = r.GetDouble("eval.kl_alpha", 0.5, 1e-9, 100.0);
  c.heatmaps = r.GetBool("eval.heatmaps", false);

  r.FailOnLeftovers();

  std::string canon = CanonicalConfigText(c);
  c.hash = HexDigest(Fnv1a64(canon.data(), canon.size()));
  return c;
}

ExperimentConfig LoadExperimentConfig(const std::string& path) {
  if (!FileExists(path))
    throw MissingInputError("config file not found: " + path);
  return ParseExperimentConfig(ReadFile(path));
}

std::string CanonicalConfigText(const ExperimentConfig& c) {
  std::vector<std::pair<std::string, std::string>> kv;
  auto put = [&kv](const std::string& k, const std::string& v) {
    kv.emplace_back(k, v);
  };
  auto puti = [&put](const std::string& k, long long v) {
    put(k, std::to_string(v));
  };
  auto putd = [&put](const std::string& k, double v) { put(k, FmtD(v)); };
  auto putb = [&put](const std::string& k, bool v) {
    put(k, v ? "true" : "false");
  };

  puti("seed", static_cast<long long>(c.seed));
  const CorpusSpec& cs = c.corpus;
  puti("corpus.n_phones", cs.n_phones);
  puti("corpus.vocab", cs.vocab);
  puti("corpus.feat_dim", cs.feat_dim);
  puti("corpus.speaker_dim", cs.speaker_dim);
  puti("corpus.n_accents", cs.n_accents);
  puti("corpus.speakers_per_accent", cs.speakers_per_accent);
  puti("corpus.native_speakers", cs.native_speakers);
  puti("corpus.train_per_accent", cs.train_per_accent);
  puti("corpus.valid_per_accent", cs.valid_per_accent);
  puti("corpus.test_per_accent", cs.test_per_accent);
  puti("corpus.native_train", cs.native_train);
  puti("corpus.native_valid", cs.native_valid);
  puti("corpus.min_phones", cs.min_phones);
  puti("corpus.max_phones", cs.max_phones);
  putd("corpus.frame_hop", cs.frame_hop);
  putd("corpus.noise_sigma", cs.noise_sigma);
  putd("corpus.emission_resample", cs.emission_resample);
  putd("noise.p_mask", c.noise.p_mask);
  putd("noise.p_insert", c.noise.p_insert);
  putd("noise.p_replace", c.noise.p_replace);
  const ConverterConfig& cc = c.converter;
  puti("converter.layers", cc.layers);
  puti("converter.dim", cc.dim);
  puti("converter.heads", cc.heads);
  puti("converter.ffn_mult", cc.ffn_mult);
  puti("converter.accent_dim", cc.accent_dim);
  putd("converter.ctc_weight", cc.ctc_weight);
  puti("converter.beam", c.converter_beam);
  putd("converter.aug_scale", c.converter_aug);
  puti("converter.pretrain_steps", c.pretrain_opts.steps);
  puti("converter.pretrain_batch", c.pretrain_opts.batch);
  putd("converter.pretrain_lr", c.pretrain_opts.lr);
  puti("converter.train_steps", c.converter_opts.steps);
  puti("converter.batch", c.converter_opts.batch);
  putd("converter.lr", c.converter_opts.lr);
  puti("converter.warmup", c.converter_opts.warmup);
  putd("converter.clip", c.converter_opts.clip);
  const SynthConfig& sc = c.synth;
  puti("synth.dim", sc.dim);
  puti("synth.enc_layers", sc.enc_layers);
  puti("synth.dec_layers", sc.dec_layers);
  puti("synth.heads", sc.heads);
  puti("synth.ffn_mult", sc.ffn_mult);
  puti("synth.time_dim", sc.time_dim);
  putd("synth.cond_drop", sc.cond_drop);
  putd("synth.sigma_min", sc.sigma_min);
  putd("synth.dur_weight", sc.dur_weight);
  puti("synth.train_steps", c.synth_opts.steps);
  puti("synth.batch", c.synth_opts.batch);
  putd("synth.lr", c.synth_opts.lr);
  puti("synth.warmup", c.synth_opts.warmup);
  putd("synth.clip", c.synth_opts.clip);
  puti("synth.sampling_steps", c.synth_sampling_steps);
  putd("synth.cfg_strength", c.synth_cfg);
  putd("synth.fidelity_cfg", c.fidelity_cfg);
  const DurationFlowConfig& dc = c.durflow;
  puti("durflow.dim", dc.dim);
  puti("durflow.layers", dc.layers);
  puti("durflow.heads", dc.heads);
  puti("durflow.ffn_mult", dc.ffn_mult);
  puti("durflow.time_dim", dc.time_dim);
  putd("durflow.cond_drop", dc.cond_drop);
  putd("durflow.sigma_min", dc.sigma_min);
  putd("durflow.jitter_lo", dc.jitter_lo);
  putd("durflow.jitter_hi", dc.jitter_hi);
  puti("durflow.train_steps", c.durflow_opts.steps);
  puti("durflow.batch", c.durflow_opts.batch);
  putd("durflow.lr", c.durflow_opts.lr);
  puti("durflow.warmup", c.durflow_opts.warmup);
  putd("durflow.clip", c.durflow_opts.clip);
  puti("durflow.sampling_steps", c.durflow_sampling_steps);
  putd("durflow.cfg_strength", c.durflow_cfg);
  putb("ablation.accent_embeddings", c.abl_accent_embeddings);
  putb("ablation.phone_supervision", c.abl_phone_supervision);
  putb("ablation.pretraining", c.abl_pretraining);
  putb("ablation.extra_data", c.abl_extra_data);
  puti("eval.fidelity_utts", c.fidelity_utts);
  puti("eval.synth_converted_utts", c.synth_converted_utts);
  putd("eval.kl_alpha", c.kl_alpha);
  putb("eval.heatmaps", c.heatmaps);

  std::sort(kv.begin(), kv.end());
  std::string out;
  for (const auto& p : kv) out += p.first + "=" + p.second + "\n";
  return out;
}

}  // namespace accnorm
