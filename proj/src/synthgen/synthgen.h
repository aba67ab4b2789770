// synthgen/synthgen.h

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

#ifndef ACCNORM_SYNTHGEN_SYNTHGEN_H_
#define ACCNORM_SYNTHGEN_SYNTHGEN_H_

#include <map>
#include <string>
#include <vector>

#include "base/rng.h"
#include "kernels/tensor.h"

namespace accnorm {

// Phone classes used by accent duration rules.
enum PhoneClass { kVowel = 0, kPlosive = 1, kFricative = 2, kOther = 3 };

// The ground-truth language: per-phone token emission distributions and
// duration statistics. Every phone owns a distinct primary token (the peak
// of its emission distribution), which doubles as its canonical rendition.
struct PhoneInventory {
  int vocab = 64;
  int n_phones = 24;
  std::vector<int> phone_class;
  std::vector<std::vector<double>> tokens_per_phone;  // P x V, rows sum to 1
  std::vector<int> primary_token;
  std::vector<double> dur_mean;  // frames
  std::vector<double> dur_dev;
};

PhoneInventory MakeInventory(int n_phones, int vocab, uint64_t seed);

// Phone-level corruption rules defining one synthetic accent.
struct AccentRuleSet {
  int accent_id = 0;
  std::map<int, std::pair<int, double>> substitutions;  // phone -> (repl, p)
  std::map<int, double> deletions;                      // phone -> p
  std::map<int, std::pair<int, double>> insertions;     // phone -> (ins, p)
  std::map<int, double> duration_scale;                 // class -> multiplier
};

// Rule sets for accents 1..n_accents (0 is reserved for native: no rules).
std::vector<AccentRuleSet> DefaultAccents(const PhoneInventory& inv,
                                          int n_accents, uint64_t seed);

struct Utterance {
  std::string id;
  int accent_id = 0;
  int speaker_id = 0;  // global speaker index within its pool
  std::vector<int> phones;     // realized phone per segment
  std::vector<int> alignment;  // per-frame realized phone
  std::vector<int> intended;   // per-frame intended native phone, -1 if none
  std::vector<int> tokens;     // per-frame token id
  std::vector<double> speaker;  // unit-norm, D_s
  Tensor features;              // T x F, frames as rows (may be empty)
  // Paired canonical native rendition (the synthesis-target analog).
  std::vector<int> native_phones;
  std::vector<int> native_tokens;  // deduplicated, one per native phone
  std::vector<int> native_durs;    // canonical frames per native token
  double frame_hop = 0.02;
  std::string feat_path;  // relative to the corpus directory
};

struct CorpusSpec {
  int n_phones = 24;
  int vocab = 64;
  int feat_dim = 20;
  int speaker_dim = 16;
  int n_accents = 6;
  int speakers_per_accent = 4;
  int native_speakers = 24;
  int train_per_accent = 320;
  int valid_per_accent = 50;
  int test_per_accent = 80;
  int native_train = 700;
  int native_valid = 50;
  int min_phones = 8;
  int max_phones = 14;
  double frame_hop = 0.02;
  double noise_sigma = 0.05;
  // Within a phone segment, each frame keeps the segment's sampled token
  // except for occasional independent re-draws from the phone's emission
  // distribution. The per-frame marginal is exactly tokens_per_phone.
  double emission_resample = 0.15;
  uint64_t seed = 1234;
};

// Deterministic corpus generator. Features are a fixed random linear
// embedding of the frame token plus a speaker offset plus Gaussian noise.
class Generator {
 public:
  explicit Generator(const CorpusSpec& spec);

  const CorpusSpec& spec() const { return spec_; }
  const PhoneInventory& inventory() const { return inv_; }
  const std::vector<AccentRuleSet>& accents() const { return accents_; }
  const Tensor& token_emb() const { return token_emb_; }      // V x F
  const Tensor& speaker_proj() const { return speaker_proj_; }  // D_s x F

  const std::vector<double>& native_speaker(int i) const;
  const std::vector<double>& accent_speaker(int accent, int i) const;

  // Content only (phones, durations, tokens, alignments); features not
  // filled. length_phones >= 1.
  Utterance SampleNative(int length_phones, uint64_t seed) const;

  // Accent corruption of a native utterance; the native pairing fields are
  // preserved. Throws when every phone is deleted.
  Utterance ApplyAccent(const Utterance& native, const AccentRuleSet& rules,
                        uint64_t seed) const;

  // Fills features from tokens + speaker + seeded noise.
  void EmitFeatures(Utterance* u, uint64_t seed) const;

  // Noise-free feature frame for a token under a speaker (test oracle and
  // noise-floor computation).
  Tensor CleanFeatures(const std::vector<int>& frame_tokens,
                       const std::vector<double>& speaker) const;

 private:
  CorpusSpec spec_;
  PhoneInventory inv_;
  std::vector<AccentRuleSet> accents_;
  Tensor token_emb_;
  Tensor speaker_proj_;
  std::vector<std::vector<double>> native_speakers_;
  std::vector<std::vector<double>> accent_speakers_;  // accent-major
};

// Feature file round trip ("ACNF", uint32 channels, uint32 frames, uint32
// reserved, then channel-major doubles). In memory features are frames x
// channels.
void WriteFeatures(const std::string& path, const Tensor& frames_by_channels);
Tensor ReadFeatures(const std::string& path);

// Corpus records as one JSON object per line. Features are written next to
// the records under feats/ and referenced by relative path.
void WriteCorpusFile(const std::string& path,
                     const std::vector<Utterance>& records);
std::vector<Utterance> ReadCorpusFile(const std::string& path);

// Inventory + rules + embedding matrices, everything evaluation needs to
// act as an oracle.
void WriteGeneratorInfo(const std::string& path, const Generator& gen);
struct GeneratorInfo {
  CorpusSpec spec;
  PhoneInventory inv;
  std::vector<AccentRuleSet> accents;
  Tensor token_emb;
  Tensor speaker_proj;
};
GeneratorInfo ReadGeneratorInfo(const std::string& path);

// Full corpus build: train/valid/test per accent (test holds out the last
// speaker of each accent), native_train/native_valid over the native pool.
// Writes train.jsonl, valid.jsonl, test.jsonl, native_train.jsonl,
// native_valid.jsonl, generator.json and feats/*.bin under out_dir.
void BuildCorpus(const CorpusSpec& spec, const std::string& out_dir);

}  // namespace accnorm

#endif  // ACCNORM_SYNTHGEN_SYNTHGEN_H_
