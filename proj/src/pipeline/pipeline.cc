// pipeline/pipeline.cc

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

#include "pipeline/pipeline.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "analysis/analysis.h"
#include "base/common.h"
#include "base/io.h"
#include "base/rng.h"
#include "json.hpp"
#include "token/codec.h"

namespace accnorm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Deterministic epoch-shuffled walk over an example pool.
class PoolSampler {
 public:
  PoolSampler(size_t n, uint64_t seed) : n_(n), seed_(seed) {
    ACN_CHECK(n > 0, "PoolSampler: empty pool");
  }

  size_t Index(int step, int batch, int lane) {
    size_t k = static_cast<size_t>(step) * batch + lane;
    size_t epoch = k / n_;
    if (perm_.empty() || epoch != epoch_) {
      Rng r(DeriveSeed(seed_, 0x9e37, epoch));
      perm_ = r.permutation(static_cast<int>(n_));
      epoch_ = epoch;
    }
    return static_cast<size_t>(perm_[k % n_]);
  }

 private:
  size_t n_;
  uint64_t seed_;
  size_t epoch_ = static_cast<size_t>(-1);
  std::vector<int> perm_;
};

Tensor CleanFromInfo(const GeneratorInfo& info,
                     const std::vector<int>& frame_tokens,
                     const std::vector<double>& speaker) {
  const int T = static_cast<int>(frame_tokens.size());
  const int F = info.spec.feat_dim;
  std::vector<double> offset(F, 0.0);
  for (int d = 0; d < info.spec.speaker_dim; ++d)
    for (int f = 0; f < F; ++f)
      offset[f] += speaker[d] * info.speaker_proj.at(d, f);
  Tensor out(T, F);
  for (int t = 0; t < T; ++t) {
    const double* emb = info.token_emb.row(frame_tokens[t]);
    for (int f = 0; f < F; ++f) out.at(t, f) = emb[f] + offset[f];
  }
  return out;
}

double PlanCv(const std::vector<int>& plan) {
  if (plan.size() < 2) return 0.0;
  double n = static_cast<double>(plan.size());
  double mean = 0.0;
  for (int d : plan) mean += d;
  mean /= n;
  double var = 0.0;
  for (int d : plan) var += (d - mean) * (d - mean);
  return std::sqrt(var / n) / mean;
}

std::string StageLabel(double wall_ms) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(1);
  os << wall_ms / 1000.0 << " s";
  return os.str();
}

void CheckSameConfig(const std::map<std::string, std::string>& have,
                     const std::map<std::string, std::string>& want,
                     const std::string& what) {
  if (have != want)
    throw ConfigError(what + ": checkpoint configuration does not match the "
                             "current experiment config");
}

}  // namespace

void AppendManifestEntry(const std::string& run_dir, const ManifestEntry& e) {
  json j;
  j["stage"] = e.stage;
  j["status"] = e.status;
  j["config_hash"] = e.config_hash;
  j["inputs"] = e.inputs;
  j["outputs"] = e.outputs;
  j["wall_ms"] = e.wall_ms;
  j["seed"] = e.seed;
  std::ofstream out(run_dir + "/run_manifest.jsonl",
                    std::ios::app | std::ios::binary);
  ACN_CHECK(out.good(), "cannot append to run manifest under " + run_dir);
  out << j.dump() << "\n";
}

std::vector<ManifestEntry> ReadManifest(const std::string& run_dir) {
  std::vector<ManifestEntry> entries;
  std::string path = run_dir + "/run_manifest.jsonl";
  if (!FileExists(path)) return entries;
  std::istringstream in(ReadFile(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    ManifestEntry e;
    e.stage = j.value("stage", "");
    e.status = j.value("status", "");
    e.config_hash = j.value("config_hash", "");
    if (j.contains("inputs"))
      e.inputs = j["inputs"].get<std::map<std::string, std::string>>();
    if (j.contains("outputs"))
      e.outputs = j["outputs"].get<std::map<std::string, std::string>>();
    e.wall_ms = j.value("wall_ms", 0.0);
    e.seed = j.value("seed", uint64_t{0});
    entries.push_back(std::move(e));
  }
  return entries;
}

std::string PathDigest(const std::string& run_dir, const std::string& rel) {
  std::string abs = run_dir + "/" + rel;
  if (fs::is_regular_file(abs)) return FileDigest(abs);
  if (fs::is_directory(abs)) {
    std::vector<std::string> names;
    for (const auto& entry : fs::recursive_directory_iterator(abs))
      if (entry.is_regular_file())
        names.push_back(fs::relative(entry.path(), abs).generic_string());
    std::sort(names.begin(), names.end());
    uint64_t h = Fnv1a64(nullptr, 0);
    for (const std::string& name : names) {
      h = Fnv1a64(name.data(), name.size(), h);
      std::string bytes = ReadFile(abs + "/" + name);
      h = Fnv1a64(bytes.data(), bytes.size(), h);
    }
    return HexDigest(h);
  }
  throw MissingInputError("missing input: " + rel + " (under " + run_dir +
                          ")");
}

void WriteConvertedFile(const std::string& path,
                        const std::vector<ConvertedUtterance>& records) {
  std::string out;
  for (const ConvertedUtterance& c : records) {
    json j;
    j["id"] = c.id;
    j["accent"] = c.accent_id;
    j["tokens"] = c.tokens;
    j["durs"] = c.durs;
    j["src_total"] = c.src_total;
    j["pre_total"] = c.pre_total;
    out += j.dump() + "\n";
  }
  WriteFile(path, out);
}

std::vector<ConvertedUtterance> ReadConvertedFile(const std::string& path) {
  if (!FileExists(path))
    throw MissingInputError("converted file not found: " + path);
  std::vector<ConvertedUtterance> records;
  std::istringstream in(ReadFile(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    ConvertedUtterance c;
    c.id = j.at("id").get<std::string>();
    c.accent_id = j.at("accent").get<int>();
    c.tokens = j.at("tokens").get<std::vector<int>>();
    c.durs = j.at("durs").get<std::vector<int>>();
    c.src_total = j.at("src_total").get<int>();
    c.pre_total = j.at("pre_total").get<int>();
    records.push_back(std::move(c));
  }
  return records;
}

Pipeline::Pipeline(const ExperimentConfig& cfg, const std::string& run_dir,
                   bool verbose)
    : cfg_(cfg), run_dir_(run_dir), verbose_(verbose) {
  ACN_CHECK(!run_dir_.empty(), "run directory not set");
  while (run_dir_.size() > 1 && run_dir_.back() == '/') run_dir_.pop_back();
}

std::string Pipeline::Abs(const std::string& rel) const {
  return run_dir_ + "/" + rel;
}

bool Pipeline::RunStage(const std::string& name, uint64_t seed,
                        const std::vector<std::string>& inputs,
                        const std::vector<std::string>& outputs,
                        const std::function<void()>& body) {
  EnsureDir(run_dir_);
  std::map<std::string, std::string> in_dig;
  for (const std::string& rel : inputs) {
    try {
      in_dig[rel] = PathDigest(run_dir_, rel);
    } catch (const MissingInputError&) {
      throw MissingInputError("stage " + name + " requires " + rel +
                              " under " + run_dir_);
    }
  }

  std::vector<ManifestEntry> entries = ReadManifest(run_dir_);
  const ManifestEntry* last = nullptr;
  for (auto it = entries.rbegin(); it != entries.rend(); ++it)
    if (it->stage == name && it->status == "run") {
      last = &*it;
      break;
    }
  if (last != nullptr && last->config_hash == cfg_.hash &&
      last->inputs == in_dig) {
    bool intact = true;
    for (const std::string& rel : outputs) {
      auto jt = last->outputs.find(rel);
      if (jt == last->outputs.end()) {
        intact = false;
        break;
      }
      try {
        if (PathDigest(run_dir_, rel) != jt->second) {
          intact = false;
          break;
        }
      } catch (const MissingInputError&) {
        intact = false;
        break;
      }
    }
    if (intact) {
      AppendManifestEntry(run_dir_, {name, "skipped", cfg_.hash, in_dig,
                                     last->outputs, 0.0, seed});
      std::cout << "[" << name << "] up to date, skipped\n";
      return false;
    }
  }

  auto t0 = std::chrono::steady_clock::now();
  body();
  auto t1 = std::chrono::steady_clock::now();
  double wall_ms =
      std::chrono::duration_cast<std::chrono::microseconds>(t1 - t0).count() /
      1000.0;

  std::map<std::string, std::string> out_dig;
  for (const std::string& rel : outputs) {
    try {
      out_dig[rel] = PathDigest(run_dir_, rel);
    } catch (const MissingInputError&) {
      throw std::runtime_error("stage " + name +
                               " did not produce declared output " + rel);
    }
  }
  AppendManifestEntry(
      run_dir_, {name, "run", cfg_.hash, in_dig, out_dig, wall_ms, seed});
  std::cout << "[" << name << "] ran (" << StageLabel(wall_ms) << ")\n";
  return true;
}

bool Pipeline::GenerateCorpus() {
  return RunStage(
      "generate-corpus", cfg_.corpus.seed, {},
      {"corpus/train.jsonl", "corpus/valid.jsonl", "corpus/test.jsonl",
       "corpus/native_train.jsonl", "corpus/native_valid.jsonl",
       "corpus/generator.json", "corpus/feats"},
      [this] { BuildCorpus(cfg_.corpus, Abs("corpus")); });
}

bool Pipeline::Pretrain() {
  if (!cfg_.abl_pretraining) {
    std::cout << "[pretrain] disabled by ablation.pretraining=false\n";
    return false;
  }
  return RunStage(
      "pretrain", cfg_.pretrain_opts.seed,
      {"corpus/native_train.jsonl", "corpus/native_valid.jsonl"},
      {"ckpt/pretrain.ckpt"}, [this] {
        std::vector<Utterance> train =
            ReadCorpusFile(Abs("corpus/native_train.jsonl"));
        std::vector<Utterance> validu =
            ReadCorpusFile(Abs("corpus/native_valid.jsonl"));
        TrainOptions opts = cfg_.pretrain_opts;
        opts.verbose = verbose_;

        auto denoised = [this](const Utterance& u, uint64_t noise_seed) {
          ConverterExample ex;
          DedupSequence d = Deduplicate(u.tokens);
          NoiseSpec noise = cfg_.noise;
          noise.rng_seed = noise_seed;
          ex.src = ApplyNoise(d.tokens, noise);
          ex.tgt = d.tokens;
          ex.phones = u.phones;
          ex.accent_id = 0;
          return ex;
        };

        std::vector<ConverterExample> valid;
        valid.reserve(validu.size());
        for (size_t i = 0; i < validu.size(); ++i)
          valid.push_back(
              denoised(validu[i], DeriveSeed(opts.seed, 0x7a11, i)));

        PoolSampler pool(train.size(), opts.seed);
        auto sampler = [&](int step, int lane) {
          const Utterance& u = train[pool.Index(step, opts.batch, lane)];
          return denoised(u, DeriveSeed(opts.seed, 0x6011, step, lane));
        };

        ConverterModel model(cfg_.converter);
        accnorm::TrainConverter(&model, sampler, valid, opts);
        EnsureDir(Abs("ckpt"));
        model.Save(Abs("ckpt/pretrain.ckpt"));
      });
}

bool Pipeline::TrainConverter() {
  std::vector<std::string> inputs = {"corpus/train.jsonl",
                                     "corpus/valid.jsonl",
                                     "corpus/native_train.jsonl"};
  if (cfg_.abl_pretraining) inputs.push_back("ckpt/pretrain.ckpt");
  return RunStage(
      "train-converter", cfg_.converter_opts.seed, inputs,
      {"ckpt/converter.ckpt"}, [this] {
        auto parallel = [](const Utterance& u, int accent_id) {
          ConverterExample ex;
          ex.src = Deduplicate(u.tokens).tokens;
          ex.tgt = u.native_tokens;
          ex.phones = u.phones;
          ex.accent_id = accent_id;
          return ex;
        };

        // The extra-data ablation halves the first accent's volume.
        std::vector<Utterance> raw =
            ReadCorpusFile(Abs("corpus/train.jsonl"));
        int a1_total = 0;
        for (const Utterance& u : raw) a1_total += u.accent_id == 1;
        const int a1_limit = cfg_.abl_extra_data ? a1_total : a1_total / 2;
        int a1_seen = 0;
        std::vector<ConverterExample> train;
        for (const Utterance& u : raw) {
          if (u.accent_id == 1 && ++a1_seen > a1_limit) continue;
          train.push_back(parallel(u, u.accent_id));
        }
        for (const Utterance& u :
             ReadCorpusFile(Abs("corpus/native_train.jsonl")))
          train.push_back(parallel(u, 0));
        std::vector<ConverterExample> valid;
        for (const Utterance& u : ReadCorpusFile(Abs("corpus/valid.jsonl")))
          valid.push_back(parallel(u, u.accent_id));

        TrainOptions opts = cfg_.converter_opts;
        opts.verbose = verbose_;
        std::unique_ptr<ConverterModel> model;
        if (cfg_.abl_pretraining) {
          model = ConverterModel::Load(Abs("ckpt/pretrain.ckpt"));
          CheckSameConfig(model->config().Echo(), cfg_.converter.Echo(),
                          "train-converter");
        } else {
          model = std::make_unique<ConverterModel>(cfg_.converter);
        }

        NoiseSpec aug = cfg_.noise;
        aug.p_mask *= cfg_.converter_aug;
        aug.p_insert *= cfg_.converter_aug;
        aug.p_replace *= cfg_.converter_aug;
        PoolSampler pool(train.size(), opts.seed);
        auto sampler = [&](int step, int lane) {
          ConverterExample ex = train[pool.Index(step, opts.batch, lane)];
          if (cfg_.converter_aug > 0.0) {
            aug.rng_seed = DeriveSeed(opts.seed, 0x4a96, step, lane);
            ex.src = ApplyNoise(ex.src, aug);
          }
          return ex;
        };
        accnorm::TrainConverter(model.get(), sampler, valid, opts);
        EnsureDir(Abs("ckpt"));
        model->Save(Abs("ckpt/converter.ckpt"));
      });
}

bool Pipeline::TrainSynthesizer() {
  return RunStage(
      "train-synthesizer", cfg_.synth_opts.seed,
      {"corpus/native_train.jsonl", "corpus/native_valid.jsonl",
       "corpus/feats"},
      {"ckpt/synth.ckpt"}, [this] {
        auto load = [this](const std::string& file) {
          std::vector<SynthExample> out;
          for (const Utterance& u : ReadCorpusFile(Abs(file))) {
            SynthExample ex;
            DedupSequence d = Deduplicate(u.tokens);
            ex.tokens = d.tokens;
            ex.durs = d.runs;
            ex.speaker = u.speaker;
            ex.features = ReadFeatures(Abs("corpus/" + u.feat_path));
            out.push_back(std::move(ex));
          }
          return out;
        };
        std::vector<SynthExample> train = load("corpus/native_train.jsonl");
        std::vector<SynthExample> valid = load("corpus/native_valid.jsonl");

        TrainOptions opts = cfg_.synth_opts;
        opts.verbose = verbose_;
        SynthModel model(cfg_.synth);
        PoolSampler pool(train.size(), opts.seed);
        auto sampler = [&](int step, int lane) {
          return train[pool.Index(step, opts.batch, lane)];
        };
        TrainSynth(&model, sampler, valid, opts);
        EnsureDir(Abs("ckpt"));
        model.Save(Abs("ckpt/synth.ckpt"));
      });
}

bool Pipeline::TrainDurationFlow() {
  return RunStage(
      "train-duration-flow", cfg_.durflow_opts.seed,
      {"corpus/native_train.jsonl", "corpus/native_valid.jsonl"},
      {"ckpt/durflow.ckpt"}, [this] {
        auto load = [this](const std::string& file) {
          std::vector<DurationExample> out;
          for (const Utterance& u : ReadCorpusFile(Abs(file))) {
            DurationExample ex;
            DedupSequence d = Deduplicate(u.tokens);
            ex.tokens = d.tokens;
            ex.durs = d.runs;
            ex.speaker = u.speaker;
            out.push_back(std::move(ex));
          }
          return out;
        };
        std::vector<DurationExample> train =
            load("corpus/native_train.jsonl");
        std::vector<DurationExample> valid =
            load("corpus/native_valid.jsonl");

        TrainOptions opts = cfg_.durflow_opts;
        opts.verbose = verbose_;
        DurationFlowModel model(cfg_.durflow);
        PoolSampler pool(train.size(), opts.seed);
        auto sampler = [&](int step, int lane) {
          return train[pool.Index(step, opts.batch, lane)];
        };
        accnorm::TrainDurationFlow(&model, sampler, valid, opts);
        EnsureDir(Abs("ckpt"));
        model.Save(Abs("ckpt/durflow.ckpt"));
      });
}

bool Pipeline::Convert(const std::string& mode) {
  if (mode != "free" && mode != "scaled" && mode != "controlled")
    throw ConfigError("unknown duration mode: " + mode);
  std::vector<std::string> inputs = {"ckpt/converter.ckpt",
                                     "corpus/test.jsonl"};
  if (mode != "controlled") inputs.push_back("ckpt/synth.ckpt");
  if (mode == "controlled") inputs.push_back("ckpt/durflow.ckpt");
  return RunStage(
      "convert-" + mode, DeriveSeed(cfg_.seed, 0xc077), inputs,
      {"converted/test_" + mode + ".jsonl"}, [this, mode] {
        std::unique_ptr<ConverterModel> conv =
            ConverterModel::Load(Abs("ckpt/converter.ckpt"));
        ConverterInference inference(*conv);
        std::unique_ptr<SynthModel> synth;
        std::unique_ptr<DurationFlowModel> durflow;
        if (mode != "controlled")
          synth = SynthModel::Load(Abs("ckpt/synth.ckpt"));
        else
          durflow = DurationFlowModel::Load(Abs("ckpt/durflow.ckpt"));

        std::vector<Utterance> test =
            ReadCorpusFile(Abs("corpus/test.jsonl"));
        std::vector<ConvertedUtterance> records;
        records.reserve(test.size());
        for (size_t i = 0; i < test.size(); ++i) {
          const Utterance& u = test[i];
          DedupSequence src = Deduplicate(u.tokens);
          DecodeResult dec =
              inference.Decode(src.tokens, u.accent_id, cfg_.converter_beam);
          ConvertedUtterance c;
          c.id = u.id;
          c.accent_id = u.accent_id;
          c.tokens = dec.tokens.empty() ? src.tokens : dec.tokens;
          c.src_total = static_cast<int>(u.tokens.size());
          int target =
              std::max(c.src_total, static_cast<int>(c.tokens.size()));
          if (mode == "controlled") {
            ControlledPlan plan = durflow->SampleControlled(
                c.tokens, u.speaker, target, cfg_.durflow_cfg,
                cfg_.durflow_sampling_steps, DeriveSeed(cfg_.seed, 0xc077, i));
            c.durs = plan.adjusted;
            c.pre_total = PlanTotal(plan.pre);
          } else {
            std::vector<int> plan = RoundDurations(
                synth->PredictDurations(c.tokens, u.speaker));
            c.pre_total = PlanTotal(plan);
            c.durs = mode == "free" ? plan : ScaleToTotal(plan, target);
          }
          records.push_back(std::move(c));
        }
        EnsureDir(Abs("converted"));
        WriteConvertedFile(Abs("converted/test_" + mode + ".jsonl"), records);
      });
}

bool Pipeline::Synthesize() {
  std::vector<std::string> inputs = {"ckpt/synth.ckpt",
                                     "corpus/native_train.jsonl"};
  std::vector<std::string> outputs = {"synth_out/index.jsonl",
                                      "synth_out/fidelity"};
  if (cfg_.synth_converted_utts > 0) {
    inputs.push_back("converted/test_controlled.jsonl");
    inputs.push_back("corpus/test.jsonl");
    outputs.push_back("synth_out/converted");
  }
  return RunStage(
      "synthesize", DeriveSeed(cfg_.seed, 0x541f), inputs, outputs, [this] {
        std::unique_ptr<SynthModel> synth =
            SynthModel::Load(Abs("ckpt/synth.ckpt"));
        EnsureDir(Abs("synth_out"));
        EnsureDir(Abs("synth_out/fidelity"));
        std::string index;

        std::vector<Utterance> natives =
            ReadCorpusFile(Abs("corpus/native_train.jsonl"));
        size_t n_fid = std::min<size_t>(cfg_.fidelity_utts, natives.size());
        for (size_t i = 0; i < n_fid; ++i) {
          const Utterance& u = natives[i];
          DedupSequence d = Deduplicate(u.tokens);
          Tensor gen = synth->SampleFeatures(
              d.tokens, d.runs, u.speaker, cfg_.fidelity_cfg,
              cfg_.synth_sampling_steps, DeriveSeed(cfg_.seed, 0xf1d, i));
          std::string rel = "synth_out/fidelity/" + u.id + ".bin";
          WriteFeatures(Abs(rel), gen);
          json row;
          row["id"] = u.id;
          row["kind"] = "fidelity";
          row["path"] = rel;
          index += row.dump() + "\n";
        }

        if (cfg_.synth_converted_utts > 0) {
          EnsureDir(Abs("synth_out/converted"));
          std::vector<ConvertedUtterance> converted =
              ReadConvertedFile(Abs("converted/test_controlled.jsonl"));
          std::map<std::string, const Utterance*> by_id;
          std::vector<Utterance> test =
              ReadCorpusFile(Abs("corpus/test.jsonl"));
          for (const Utterance& u : test) by_id[u.id] = &u;
          size_t n_conv =
              std::min<size_t>(cfg_.synth_converted_utts, converted.size());
          for (size_t i = 0; i < n_conv; ++i) {
            const ConvertedUtterance& c = converted[i];
            auto it = by_id.find(c.id);
            if (it == by_id.end())
              throw EvalError("converted id " + c.id +
                              " is not in the test set");
            Tensor gen = synth->SampleFeatures(
                c.tokens, c.durs, it->second->speaker, cfg_.synth_cfg,
                cfg_.synth_sampling_steps,
                DeriveSeed(cfg_.seed, 0xf1d, 0x10000 + i));
            std::string rel = "synth_out/converted/" + c.id + ".bin";
            WriteFeatures(Abs(rel), gen);
            json row;
            row["id"] = c.id;
            row["kind"] = "converted";
            row["path"] = rel;
            index += row.dump() + "\n";
          }
        }
        WriteFile(Abs("synth_out/index.jsonl"), index);
      });
}

bool Pipeline::AnalyzeTokens() {
  std::vector<std::string> outputs = {"report/kl_accented.csv",
                                      "report/kl_converted.csv",
                                      "report/kl_summary.json"};
  if (cfg_.heatmaps) {
    outputs.push_back("report/kl_accented.ppm");
    outputs.push_back("report/kl_converted.ppm");
  }
  return RunStage(
      "analyze-tokens", 0,
      {"corpus/native_train.jsonl", "corpus/test.jsonl",
       "corpus/generator.json", "converted/test_controlled.jsonl",
       "ckpt/converter.ckpt"},
      outputs, [this] {
        const int P = cfg_.corpus.n_phones;
        const int V = cfg_.corpus.vocab;
        const int A = cfg_.corpus.n_accents;
        GeneratorInfo info = ReadGeneratorInfo(Abs("corpus/generator.json"));

        std::vector<AlignedFrames> ref_frames;
        for (const Utterance& u :
             ReadCorpusFile(Abs("corpus/native_train.jsonl")))
          ref_frames.push_back({u.tokens, u.alignment});
        PhoneTokenDistribution ref =
            CollectDistributions(ref_frames, P, V, cfg_.kl_alpha);

        std::vector<AlignedFrames> acc_all;
        std::vector<std::vector<AlignedFrames>> acc_by(A + 1);
        for (const Utterance& u : ReadCorpusFile(Abs("corpus/test.jsonl"))) {
          AlignedFrames f{u.tokens, u.intended};
          acc_all.push_back(f);
          acc_by[u.accent_id].push_back(std::move(f));
        }

        // Phone labels for converted streams come from the converter's own
        // CTC head under the native condition, expanded by the duration
        // plan; blanks stay unlabeled.
        std::unique_ptr<ConverterModel> conv =
            ConverterModel::Load(Abs("ckpt/converter.ckpt"));
        std::vector<AlignedFrames> conv_all;
        std::vector<std::vector<AlignedFrames>> conv_by(A + 1);
        for (const ConvertedUtterance& c :
             ReadConvertedFile(Abs("converted/test_controlled.jsonl"))) {
          Graph g(&conv->params());
          Graph::Var mem = conv->Encode(&g, c.tokens, 0);
          const Tensor& logits = g.Value(conv->CtcLogits(&g, mem));
          AlignedFrames f;
          f.tokens = Expand({c.tokens, c.durs});
          f.phones.reserve(f.tokens.size());
          for (size_t i = 0; i < c.tokens.size(); ++i) {
            int best = 0;
            for (int p = 1; p < logits.cols; ++p)
              if (logits.at(static_cast<int>(i), p) >
                  logits.at(static_cast<int>(i), best))
                best = p;
            int label = best == P ? -1 : best;
            f.phones.insert(f.phones.end(), c.durs[i], label);
          }
          conv_all.push_back(f);
          conv_by[c.accent_id].push_back(std::move(f));
        }

        PhoneTokenDistribution acc =
            CollectDistributions(acc_all, P, V, cfg_.kl_alpha);
        PhoneTokenDistribution cnv =
            CollectDistributions(conv_all, P, V, cfg_.kl_alpha);
        Tensor kl_acc = KlMatrix(acc, ref);
        Tensor kl_cnv = KlMatrix(cnv, ref);
        EnsureDir(Abs("report"));
        WriteMatrixCsv(Abs("report/kl_accented.csv"), cfg_.hash, kl_acc);
        WriteMatrixCsv(Abs("report/kl_converted.csv"), cfg_.hash, kl_cnv);
        if (cfg_.heatmaps) {
          WriteHeatmapPpm(Abs("report/kl_accented.ppm"), kl_acc);
          WriteHeatmapPpm(Abs("report/kl_converted.ppm"), kl_cnv);
        }

        // Per-accent summary over phones observed on both sides, so sparse
        // coverage cannot pad the means with smoothing artifacts.
        auto mean_over = [](const std::vector<double>& diag,
                            const std::vector<int>& keep) {
          double s = 0.0;
          for (int p : keep) s += diag[p];
          return keep.empty() ? 0.0 : s / keep.size();
        };
        json summary;
        {
          std::vector<double> da = KlDiagonal(kl_acc);
          std::vector<double> dc = KlDiagonal(kl_cnv);
          std::vector<int> keep;
          for (int p = 0; p < P; ++p)
            if (!acc.empty_phone[p] && !cnv.empty_phone[p]) keep.push_back(p);
          summary["pooled"]["diag_accented"] = mean_over(da, keep);
          summary["pooled"]["diag_converted"] = mean_over(dc, keep);
          summary["pooled"]["n_phones_used"] = keep.size();
        }
        summary["accents"] = json::array();
        for (int a = 1; a <= A; ++a) {
          PhoneTokenDistribution pa =
              CollectDistributions(acc_by[a], P, V, cfg_.kl_alpha);
          PhoneTokenDistribution pc =
              CollectDistributions(conv_by[a], P, V, cfg_.kl_alpha);
          std::vector<double> da = KlDiagonal(KlMatrix(pa, ref));
          std::vector<double> dc = KlDiagonal(KlMatrix(pc, ref));
          std::vector<int> keep;
          for (int p = 0; p < P; ++p)
            if (!pa.empty_phone[p] && !pc.empty_phone[p]) keep.push_back(p);
          std::vector<int> targeted;
          for (const AccentRuleSet& rules : info.accents)
            if (rules.accent_id == a)
              for (const auto& kv : rules.substitutions)
                if (!pa.empty_phone[kv.first] && !pc.empty_phone[kv.first])
                  targeted.push_back(kv.first);
          json row;
          row["accent"] = a;
          row["diag_accented"] = mean_over(da, keep);
          row["diag_converted"] = mean_over(dc, keep);
          row["targeted_accented"] = mean_over(da, targeted);
          row["targeted_converted"] = mean_over(dc, targeted);
          row["n_phones_used"] = keep.size();
          row["targeted_phones"] = targeted;
          summary["accents"].push_back(row);
        }
        WriteFile(Abs("report/kl_summary.json"), summary.dump(1) + "\n");
      });
}

bool Pipeline::Evaluate() {
  std::vector<std::string> inputs = {
      "corpus/test.jsonl",          "corpus/native_train.jsonl",
      "corpus/generator.json",      "corpus/feats",
      "converted/test_free.jsonl",  "converted/test_scaled.jsonl",
      "converted/test_controlled.jsonl", "synth_out/fidelity",
      "synth_out/index.jsonl",      "report/kl_summary.json"};
  if (cfg_.synth_converted_utts > 0) inputs.push_back("synth_out/converted");
  return RunStage(
      "evaluate", DeriveSeed(cfg_.seed, 0xe4a1), inputs,
      {"report/metrics.csv", "report/durations.csv"}, [this] {
        GeneratorInfo info = ReadGeneratorInfo(Abs("corpus/generator.json"));
        std::vector<Utterance> test =
            ReadCorpusFile(Abs("corpus/test.jsonl"));
        auto free_c = ReadConvertedFile(Abs("converted/test_free.jsonl"));
        auto scaled_c = ReadConvertedFile(Abs("converted/test_scaled.jsonl"));
        auto ctrl_c =
            ReadConvertedFile(Abs("converted/test_controlled.jsonl"));
        if (free_c.size() != test.size() || scaled_c.size() != test.size() ||
            ctrl_c.size() != test.size())
          throw EvalError("converted outputs do not cover the test set");
        for (size_t i = 0; i < test.size(); ++i)
          if (free_c[i].id != test[i].id || scaled_c[i].id != test[i].id ||
              ctrl_c[i].id != test[i].id)
            throw EvalError("converted outputs are not aligned with the "
                            "test set at " +
                            test[i].id);

        std::vector<std::pair<std::string, double>> rows;

        // Token error rates against the canonical native rendition.
        const int A = cfg_.corpus.n_accents;
        TerAccumulator identity, converted;
        std::vector<TerAccumulator> identity_a(A + 1), converted_a(A + 1);
        for (size_t i = 0; i < test.size(); ++i) {
          const Utterance& u = test[i];
          std::vector<int> base = Deduplicate(u.tokens).tokens;
          identity.Add(base, u.native_tokens);
          converted.Add(free_c[i].tokens, u.native_tokens);
          identity_a[u.accent_id].Add(base, u.native_tokens);
          converted_a[u.accent_id].Add(free_c[i].tokens, u.native_tokens);
        }
        double ter_id = identity.Rate();
        double ter_cv = converted.Rate();
        rows.emplace_back("ter_identity", ter_id);
        rows.emplace_back("ter_converted", ter_cv);
        rows.emplace_back("ter_relative_reduction",
                          ter_id > 0.0 ? (ter_id - ter_cv) / ter_id : 0.0);
        for (int a = 1; a <= A; ++a) {
          rows.emplace_back("ter_identity_a" + std::to_string(a),
                            identity_a[a].Rate());
          rows.emplace_back("ter_converted_a" + std::to_string(a),
                            converted_a[a].Rate());
        }

        // Duration deviations per mode, before and after adjustment.
        auto totals = [](const std::vector<ConvertedUtterance>& cs,
                         bool pre) {
          std::vector<int> out;
          out.reserve(cs.size());
          for (const ConvertedUtterance& c : cs)
            out.push_back(pre ? c.pre_total : PlanTotal(c.durs));
          return out;
        };
        std::vector<int> src;
        src.reserve(test.size());
        for (const ConvertedUtterance& c : free_c) src.push_back(c.src_total);
        double hop = cfg_.corpus.frame_hop;
        DeviationStats free_pre =
            DurationDeviation(totals(free_c, true), src, hop);
        DeviationStats scaled_post =
            DurationDeviation(totals(scaled_c, false), src, hop);
        DeviationStats ctrl_pre =
            DurationDeviation(totals(ctrl_c, true), src, hop);
        DeviationStats ctrl_post =
            DurationDeviation(totals(ctrl_c, false), src, hop);
        rows.emplace_back("dur_free_mean_rel", free_pre.mean_rel);
        rows.emplace_back("dur_free_mean_abs_s", free_pre.mean_abs_seconds);
        rows.emplace_back("dur_scaled_post_mean_rel", scaled_post.mean_rel);
        rows.emplace_back("dur_controlled_pre_mean_rel", ctrl_pre.mean_rel);
        rows.emplace_back("dur_controlled_pre_mean_abs_s",
                          ctrl_pre.mean_abs_seconds);
        rows.emplace_back("dur_controlled_post_mean_rel",
                          ctrl_post.mean_rel);

        int cv_wins = 0;
        for (size_t i = 0; i < test.size(); ++i)
          if (PlanCv(ctrl_c[i].durs) > PlanCv(scaled_c[i].durs)) ++cv_wins;
        rows.emplace_back("cv_flow_gt_scaled_frac",
                          test.empty() ? 0.0
                                       : static_cast<double>(cv_wins) /
                                             test.size());

        // Synthesis fidelity on held-in utterances with gold durations,
        // against an empirical two-rendition noise floor.
        std::vector<Utterance> natives =
            ReadCorpusFile(Abs("corpus/native_train.jsonl"));
        size_t n_fid = std::min<size_t>(cfg_.fidelity_utts, natives.size());
        double dtw_sum = 0.0, floor_sum = 0.0, cos_sum = 0.0;
        for (size_t i = 0; i < n_fid; ++i) {
          const Utterance& u = natives[i];
          Tensor gen =
              ReadFeatures(Abs("synth_out/fidelity/" + u.id + ".bin"));
          Tensor gold = ReadFeatures(Abs("corpus/" + u.feat_path));
          dtw_sum += DtwDistance(gen, gold).mean;
          Tensor clean = CleanFromInfo(info, u.tokens, u.speaker);
          Tensor noisy[2];
          for (int d = 0; d < 2; ++d) {
            noisy[d] = clean;
            Rng r(DeriveSeed(cfg_.seed, 0xf100, i, d));
            for (double& x : noisy[d].data)
              x += info.spec.noise_sigma * r.gaussian();
          }
          floor_sum += DtwDistance(noisy[0], noisy[1]).mean;
          std::vector<double> rec = RecoverSpeaker(
              gen, u.tokens, info.token_emb, info.speaker_proj);
          cos_sum += Cosine(rec, u.speaker);
        }
        double dtw_mean = dtw_sum / n_fid;
        double floor_mean = floor_sum / n_fid;
        rows.emplace_back("dtw_fidelity_mean", dtw_mean);
        rows.emplace_back("dtw_floor_mean", floor_mean);
        rows.emplace_back("dtw_fidelity_ratio",
                          floor_mean > 0.0 ? dtw_mean / floor_mean : 0.0);
        rows.emplace_back("speaker_cos_mean", cos_sum / n_fid);

        // Feature distance of synthesized conversions to the clean canonical
        // rendition under the source speaker.
        if (cfg_.synth_converted_utts > 0) {
          std::map<std::string, const Utterance*> by_id;
          for (const Utterance& u : test) by_id[u.id] = &u;
          std::istringstream idx(ReadFile(Abs("synth_out/index.jsonl")));
          std::string line;
          double fd_sum = 0.0;
          int fd_n = 0;
          while (std::getline(idx, line)) {
            if (line.empty()) continue;
            json j = json::parse(line);
            if (j.at("kind").get<std::string>() != "converted") continue;
            const Utterance& u = *by_id.at(j.at("id").get<std::string>());
            Tensor gen = ReadFeatures(Abs(j.at("path").get<std::string>()));
            Tensor target = CleanFromInfo(
                info, Expand({u.native_tokens, u.native_durs}), u.speaker);
            fd_sum += DtwDistance(gen, target).mean;
            ++fd_n;
          }
          rows.emplace_back("fd_converted_mean",
                            fd_n > 0 ? fd_sum / fd_n : 0.0);
        }

        json kl = json::parse(ReadFile(Abs("report/kl_summary.json")));
        rows.emplace_back("kl_diag_accented",
                          kl.at("pooled").at("diag_accented").get<double>());
        rows.emplace_back("kl_diag_converted",
                          kl.at("pooled").at("diag_converted").get<double>());
        for (const json& row : kl.at("accents")) {
          std::string a = std::to_string(row.at("accent").get<int>());
          rows.emplace_back("kl_diag_accented_a" + a,
                            row.at("diag_accented").get<double>());
          rows.emplace_back("kl_diag_converted_a" + a,
                            row.at("diag_converted").get<double>());
          rows.emplace_back("kl_targeted_accented_a" + a,
                            row.at("targeted_accented").get<double>());
          rows.emplace_back("kl_targeted_converted_a" + a,
                            row.at("targeted_converted").get<double>());
        }

        for (const auto& kv : rows)
          if (!std::isfinite(kv.second))
            throw EvalError("metric " + kv.first + " is not finite");

        std::vector<DurationRow> dur_rows;
        auto add_rows = [&dur_rows](const std::vector<ConvertedUtterance>& cs,
                                    const std::string& mode) {
          for (const ConvertedUtterance& c : cs)
            dur_rows.push_back({c.id, mode, c.src_total, c.pre_total,
                                PlanTotal(c.durs)});
        };
        add_rows(free_c, "free");
        add_rows(scaled_c, "scaled");
        add_rows(ctrl_c, "controlled");

        EnsureDir(Abs("report"));
        WriteMetricsCsv(Abs("report/metrics.csv"), cfg_.hash, rows);
        WriteDurationsCsv(Abs("report/durations.csv"), cfg_.hash, dur_rows);
      });
}

void Pipeline::RunAll() {
  GenerateCorpus();
  Pretrain();
  TrainConverter();
  TrainSynthesizer();
  TrainDurationFlow();
  Convert("free");
  Convert("scaled");
  Convert("controlled");
  Synthesize();
  AnalyzeTokens();
  Evaluate();
}

}  // namespace accnorm
