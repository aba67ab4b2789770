// synthgen/synthgen.cc

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

#include "synthgen/synthgen.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "base/io.h"
#include "json.hpp"

namespace accnorm {

namespace {

int ClampedRound(double x) {
  long r = std::lround(x);
  return r < 1 ? 1 : static_cast<int>(r);
}

std::vector<double> UnitGaussian(int dim, Rng* rng) {
  std::vector<double> v(dim);
  double norm = 0.0;
  for (auto& x : v) {
    x = rng->gaussian();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

nlohmann::json TensorToJson(const Tensor& t) {
  return {{"rows", t.rows}, {"cols", t.cols}, {"data", t.data}};
}

Tensor TensorFromJson(const nlohmann::json& j) {
  Tensor t(j.at("rows").get<int>(), j.at("cols").get<int>());
  const auto& d = j.at("data");
  ACN_CHECK(d.size() == t.size(), "TensorFromJson: size mismatch");
  for (size_t i = 0; i < t.size(); ++i) t.data[i] = d[i].get<double>();
  return t;
}

}  // namespace

PhoneInventory MakeInventory(int n_phones, int vocab, uint64_t seed) {
  ACN_CHECK(n_phones >= 4 && n_phones <= vocab,
            "MakeInventory: need 4 <= phones <= vocab");
  Rng rng(seed);
  PhoneInventory inv;
  inv.vocab = vocab;
  inv.n_phones = n_phones;
  inv.phone_class.resize(n_phones);
  for (int p = 0; p < n_phones; ++p) {
    double frac = static_cast<double>(p) / n_phones;
    if (frac < 0.33)
      inv.phone_class[p] = kVowel;
    else if (frac < 0.58)
      inv.phone_class[p] = kPlosive;
    else if (frac < 0.83)
      inv.phone_class[p] = kFricative;
    else
      inv.phone_class[p] = kOther;
  }
  // Distinct primary token per phone plus one minor alternative, also
  // distinct across phones when the vocabulary allows it. Keeping the token
  // sets disjoint makes the emission channel invertible, so accent rules are
  // the only irreducible corruption.
  std::vector<int> perm = rng.permutation(vocab);
  inv.primary_token.resize(n_phones);
  inv.tokens_per_phone.assign(n_phones, std::vector<double>(vocab, 0.0));
  const int pool = vocab - n_phones;
  for (int p = 0; p < n_phones; ++p) {
    inv.primary_token[p] = perm[p];
    inv.tokens_per_phone[p][perm[p]] += 0.90;
    if (pool >= n_phones) {
      inv.tokens_per_phone[p][perm[n_phones + p]] += 0.10;
    } else if (pool >= 1) {
      inv.tokens_per_phone[p][perm[n_phones + p % pool]] += 0.10;
    } else {
      inv.tokens_per_phone[p][perm[p]] += 0.10;
    }
  }
  inv.dur_mean.resize(n_phones);
  inv.dur_dev.resize(n_phones);
  for (int p = 0; p < n_phones; ++p) {
    switch (inv.phone_class[p]) {
      case kVowel:
        inv.dur_mean[p] = rng.uniform(5.0, 8.0);
        inv.dur_dev[p] = 1.4;
        break;
      case kPlosive:
        inv.dur_mean[p] = rng.uniform(3.0, 5.0);
        inv.dur_dev[p] = 1.0;
        break;
      case kFricative:
        inv.dur_mean[p] = rng.uniform(4.0, 6.0);
        inv.dur_dev[p] = 1.0;
        break;
      default:
        inv.dur_mean[p] = rng.uniform(4.0, 7.0);
        inv.dur_dev[p] = 1.0;
        break;
    }
  }
  return inv;
}

std::vector<AccentRuleSet> DefaultAccents(const PhoneInventory& inv,
                                          int n_accents, uint64_t seed) {
  ACN_CHECK(inv.n_phones >= 8, "DefaultAccents: need at least 8 phones");
  Rng rng(seed);
  std::vector<int> vowels, plosives;
  for (int p = 0; p < inv.n_phones; ++p) {
    if (inv.phone_class[p] == kVowel) vowels.push_back(p);
    if (inv.phone_class[p] == kPlosive) plosives.push_back(p);
  }
  ACN_CHECK(!vowels.empty() && !plosives.empty(),
            "DefaultAccents: class inventory too small");
  std::vector<AccentRuleSet> accents;
  for (int a = 1; a <= n_accents; ++a) {
    AccentRuleSet rules;
    rules.accent_id = a;
    std::vector<int> order = rng.permutation(inv.n_phones);
    // Three substituted phones per accent.
    for (int k = 0; k < 3; ++k) {
      int src = order[k];
      int repl = order[inv.n_phones - 1 - k];
      rules.substitutions[src] = {repl, 0.7};
    }
    // One deletion-prone phone.
    rules.deletions[order[4]] = 0.2;
    // Epenthetic vowel after one plosive.
    int plo = plosives[rng.uniform_int(plosives.size())];
    int vow = vowels[rng.uniform_int(vowels.size())];
    rules.insertions[plo] = {vow, 0.5};
    // Rhythm: vowels stretched or compressed, one other class mildly off.
    rules.duration_scale[kVowel] =
        (a % 2 == 1) ? rng.uniform(1.15, 1.35) : rng.uniform(0.70, 0.85);
    int other_class = 1 + static_cast<int>(rng.uniform_int(3));
    rules.duration_scale[other_class] = rng.uniform(0.85, 1.2);
    accents.push_back(rules);
  }
  return accents;
}

Generator::Generator(const CorpusSpec& spec) : spec_(spec) {
  inv_ = MakeInventory(spec.n_phones, spec.vocab, DeriveSeed(spec.seed, 1));
  accents_ = DefaultAccents(inv_, spec.n_accents, DeriveSeed(spec.seed, 2));
  {
    Rng rng(DeriveSeed(spec.seed, 3));
    token_emb_ = Tensor::Gaussian(spec.vocab, spec.feat_dim, rng, 1.0);
  }
  {
    Rng rng(DeriveSeed(spec.seed, 4));
    speaker_proj_ = Tensor::Gaussian(spec.speaker_dim, spec.feat_dim, rng, 1.0);
  }
  for (int i = 0; i < spec.native_speakers; ++i) {
    Rng rng(DeriveSeed(spec.seed, 5, i));
    native_speakers_.push_back(UnitGaussian(spec.speaker_dim, &rng));
  }
  for (int a = 1; a <= spec.n_accents; ++a) {
    for (int i = 0; i < spec.speakers_per_accent; ++i) {
      Rng rng(DeriveSeed(spec.seed, 6, a, i));
      accent_speakers_.push_back(UnitGaussian(spec.speaker_dim, &rng));
    }
  }
}

const std::vector<double>& Generator::native_speaker(int i) const {
  return native_speakers_.at(i);
}

const std::vector<double>& Generator::accent_speaker(int accent, int i) const {
  return accent_speakers_.at((accent - 1) * spec_.speakers_per_accent + i);
}

Utterance Generator::SampleNative(int length_phones, uint64_t seed) const {
  ACN_CHECK(length_phones >= 1, "SampleNative: length_phones < 1");
  Rng rng(seed);
  Utterance u;
  u.frame_hop = spec_.frame_hop;
  const int P = inv_.n_phones;
  int prev = -1;
  for (int i = 0; i < length_phones; ++i) {
    int p;
    if (prev < 0) {
      p = static_cast<int>(rng.uniform_int(P));
    } else {
      int q = static_cast<int>(rng.uniform_int(P - 1));
      p = q + (q >= prev ? 1 : 0);
    }
    u.phones.push_back(p);
    prev = p;
  }
  for (int p : u.phones) {
    int dur = ClampedRound(inv_.dur_mean[p] + inv_.dur_dev[p] * rng.gaussian());
    int seg_token = rng.categorical(inv_.tokens_per_phone[p]);
    for (int f = 0; f < dur; ++f) {
      int tok = seg_token;
      if (rng.uniform() < spec_.emission_resample)
        tok = rng.categorical(inv_.tokens_per_phone[p]);
      u.tokens.push_back(tok);
      u.alignment.push_back(p);
      u.intended.push_back(p);
    }
  }
  u.native_phones = u.phones;
  for (int p : u.phones) {
    u.native_tokens.push_back(inv_.primary_token[p]);
    u.native_durs.push_back(ClampedRound(inv_.dur_mean[p]));
  }
  return u;
}

Utterance Generator::ApplyAccent(const Utterance& native,
                                 const AccentRuleSet& rules,
                                 uint64_t seed) const {
  ACN_CHECK(native.accent_id == 0, "ApplyAccent: input must be native");
  Rng rng(seed);
  // Recover native segment durations from the frame alignment.
  std::vector<int> seg_dur;
  {
    size_t f = 0;
    for (int p : native.phones) {
      int d = 0;
      while (f < native.alignment.size() && native.alignment[f] == p) {
        ++d;
        ++f;
      }
      ACN_CHECK(d > 0, "ApplyAccent: alignment does not match phones");
      seg_dur.push_back(d);
    }
    ACN_CHECK(f == native.alignment.size(), "ApplyAccent: alignment tail");
  }

  auto scale_of = [&](int phone) {
    auto it = rules.duration_scale.find(inv_.phone_class[phone]);
    return it == rules.duration_scale.end() ? 1.0 : it->second;
  };

  Utterance u;
  u.accent_id = rules.accent_id;
  u.frame_hop = native.frame_hop;
  u.native_phones = native.native_phones;
  u.native_tokens = native.native_tokens;
  u.native_durs = native.native_durs;

  std::vector<int> out_phones, out_durs, out_intended;
  for (size_t i = 0; i < native.phones.size(); ++i) {
    const int p = native.phones[i];
    auto del = rules.deletions.find(p);
    if (del != rules.deletions.end() && rng.uniform() < del->second) continue;
    int realized = p;
    auto sub = rules.substitutions.find(p);
    if (sub != rules.substitutions.end() && rng.uniform() < sub->second.second)
      realized = sub->second.first;
    out_phones.push_back(realized);
    out_durs.push_back(ClampedRound(seg_dur[i] * scale_of(realized)));
    out_intended.push_back(p);
    auto ins = rules.insertions.find(p);
    if (ins != rules.insertions.end() && rng.uniform() < ins->second.second) {
      const int q = ins->second.first;
      out_phones.push_back(q);
      out_durs.push_back(ClampedRound(
          (inv_.dur_mean[q] + inv_.dur_dev[q] * rng.gaussian()) * scale_of(q)));
      out_intended.push_back(-1);
    }
  }
  ACN_CHECK(!out_phones.empty(), "ApplyAccent: corrupted phone string empty");

  u.phones = out_phones;
  for (size_t i = 0; i < out_phones.size(); ++i) {
    const int p = out_phones[i];
    int seg_token = rng.categorical(inv_.tokens_per_phone[p]);
    for (int f = 0; f < out_durs[i]; ++f) {
      int tok = seg_token;
      if (rng.uniform() < spec_.emission_resample)
        tok = rng.categorical(inv_.tokens_per_phone[p]);
      u.tokens.push_back(tok);
      u.alignment.push_back(p);
      u.intended.push_back(out_intended[i]);
    }
  }
  return u;
}

void Generator::EmitFeatures(Utterance* u, uint64_t seed) const {
  ACN_CHECK(static_cast<int>(u->speaker.size()) == spec_.speaker_dim,
            "EmitFeatures: speaker vector missing");
  Rng rng(seed);
  Tensor clean = CleanFeatures(u->tokens, u->speaker);
  for (auto& x : clean.data) x += spec_.noise_sigma * rng.gaussian();
  u->features = std::move(clean);
}

Tensor Generator::CleanFeatures(const std::vector<int>& frame_tokens,
                                const std::vector<double>& speaker) const {
  const int T = static_cast<int>(frame_tokens.size());
  const int F = spec_.feat_dim;
  std::vector<double> offset(F, 0.0);
  for (int d = 0; d < spec_.speaker_dim; ++d)
    for (int f = 0; f < F; ++f) offset[f] += speaker[d] * speaker_proj_.at(d, f);
  Tensor out(T, F);
  for (int t = 0; t < T; ++t) {
    const double* emb = token_emb_.row(frame_tokens[t]);
    for (int f = 0; f < F; ++f) out.at(t, f) = emb[f] + offset[f];
  }
  return out;
}

void WriteFeatures(const std::string& path, const Tensor& frames) {
  const uint32_t f_dim = static_cast<uint32_t>(frames.cols);
  const uint32_t t_dim = static_cast<uint32_t>(frames.rows);
  std::string out;
  out.reserve(16 + frames.size() * sizeof(double));
  out.append("ACNF", 4);
  const uint32_t reserved = 0;
  out.append(reinterpret_cast<const char*>(&f_dim), 4);
  out.append(reinterpret_cast<const char*>(&t_dim), 4);
  out.append(reinterpret_cast<const char*>(&reserved), 4);
  // Channel-major payload.
  std::vector<double> payload(frames.size());
  for (uint32_t f = 0; f < f_dim; ++f)
    for (uint32_t t = 0; t < t_dim; ++t)
      payload[static_cast<size_t>(f) * t_dim + t] = frames.at(t, f);
  out.append(reinterpret_cast<const char*>(payload.data()),
             payload.size() * sizeof(double));
  WriteFile(path, out);
}

Tensor ReadFeatures(const std::string& path) {
  if (!FileExists(path)) throw MissingInputError("features not found: " + path);
  const std::string raw = ReadFile(path);
  ACN_CHECK(raw.size() >= 16 && std::memcmp(raw.data(), "ACNF", 4) == 0,
            "ReadFeatures: bad header in " << path);
  uint32_t f_dim, t_dim;
  std::memcpy(&f_dim, raw.data() + 4, 4);
  std::memcpy(&t_dim, raw.data() + 8, 4);
  ACN_CHECK(raw.size() == 16 + static_cast<size_t>(f_dim) * t_dim * 8,
            "ReadFeatures: size mismatch in " << path);
  Tensor out(t_dim, f_dim);
  const double* p = reinterpret_cast<const double*>(raw.data() + 16);
  for (uint32_t f = 0; f < f_dim; ++f)
    for (uint32_t t = 0; t < t_dim; ++t)
      out.at(t, f) = p[static_cast<size_t>(f) * t_dim + t];
  return out;
}

namespace {

nlohmann::json UtteranceToJson(const Utterance& u) {
  nlohmann::json j;
  j["id"] = u.id;
  j["accent"] = u.accent_id;
  j["speaker_id"] = u.speaker_id;
  j["speaker"] = u.speaker;
  j["phones"] = u.phones;
  j["align"] = u.alignment;
  j["intended"] = u.intended;
  j["tokens"] = u.tokens;
  j["native_phones"] = u.native_phones;
  j["native_tokens"] = u.native_tokens;
  j["native_durs"] = u.native_durs;
  j["frame_hop"] = u.frame_hop;
  j["feat"] = u.feat_path;
  return j;
}

Utterance UtteranceFromJson(const nlohmann::json& j) {
  Utterance u;
  u.id = j.at("id").get<std::string>();
  u.accent_id = j.at("accent").get<int>();
  u.speaker_id = j.at("speaker_id").get<int>();
  u.speaker = j.at("speaker").get<std::vector<double>>();
  u.phones = j.at("phones").get<std::vector<int>>();
  u.alignment = j.at("align").get<std::vector<int>>();
  u.intended = j.at("intended").get<std::vector<int>>();
  u.tokens = j.at("tokens").get<std::vector<int>>();
  u.native_phones = j.at("native_phones").get<std::vector<int>>();
  u.native_tokens = j.at("native_tokens").get<std::vector<int>>();
  u.native_durs = j.at("native_durs").get<std::vector<int>>();
  u.frame_hop = j.at("frame_hop").get<double>();
  u.feat_path = j.at("feat").get<std::string>();
  return u;
}

}  // namespace

void WriteCorpusFile(const std::string& path,
                     const std::vector<Utterance>& records) {
  std::ostringstream os;
  for (const auto& u : records) os << UtteranceToJson(u).dump() << "\n";
  WriteFile(path, os.str());
}

std::vector<Utterance> ReadCorpusFile(const std::string& path) {
  if (!FileExists(path)) throw MissingInputError("corpus not found: " + path);
  std::istringstream is(ReadFile(path));
  std::vector<Utterance> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    out.push_back(UtteranceFromJson(nlohmann::json::parse(line)));
  }
  return out;
}

namespace {

nlohmann::json SpecToJson(const CorpusSpec& s) {
  nlohmann::json j;
  j["n_phones"] = s.n_phones;
  j["vocab"] = s.vocab;
  j["feat_dim"] = s.feat_dim;
  j["speaker_dim"] = s.speaker_dim;
  j["n_accents"] = s.n_accents;
  j["speakers_per_accent"] = s.speakers_per_accent;
  j["native_speakers"] = s.native_speakers;
  j["train_per_accent"] = s.train_per_accent;
  j["valid_per_accent"] = s.valid_per_accent;
  j["test_per_accent"] = s.test_per_accent;
  j["native_train"] = s.native_train;
  j["native_valid"] = s.native_valid;
  j["min_phones"] = s.min_phones;
  j["max_phones"] = s.max_phones;
  j["frame_hop"] = s.frame_hop;
  j["noise_sigma"] = s.noise_sigma;
  j["emission_resample"] = s.emission_resample;
  j["seed"] = s.seed;
  return j;
}

CorpusSpec SpecFromJson(const nlohmann::json& j) {
  CorpusSpec s;
  s.n_phones = j.at("n_phones").get<int>();
  s.vocab = j.at("vocab").get<int>();
  s.feat_dim = j.at("feat_dim").get<int>();
  s.speaker_dim = j.at("speaker_dim").get<int>();
  s.n_accents = j.at("n_accents").get<int>();
  s.speakers_per_accent = j.at("speakers_per_accent").get<int>();
  s.native_speakers = j.at("native_speakers").get<int>();
  s.train_per_accent = j.at("train_per_accent").get<int>();
  s.valid_per_accent = j.at("valid_per_accent").get<int>();
  s.test_per_accent = j.at("test_per_accent").get<int>();
  s.native_train = j.at("native_train").get<int>();
  s.native_valid = j.at("native_valid").get<int>();
  s.min_phones = j.at("min_phones").get<int>();
  s.max_phones = j.at("max_phones").get<int>();
  s.frame_hop = j.at("frame_hop").get<double>();
  s.noise_sigma = j.at("noise_sigma").get<double>();
  s.emission_resample = j.at("emission_resample").get<double>();
  s.seed = j.at("seed").get<uint64_t>();
  return s;
}

nlohmann::json RulesToJson(const AccentRuleSet& r) {
  nlohmann::json j;
  j["accent_id"] = r.accent_id;
  nlohmann::json subs = nlohmann::json::array();
  for (const auto& [p, v] : r.substitutions)
    subs.push_back({p, v.first, v.second});
  j["substitutions"] = subs;
  nlohmann::json dels = nlohmann::json::array();
  for (const auto& [p, v] : r.deletions) dels.push_back({p, v});
  j["deletions"] = dels;
  nlohmann::json inss = nlohmann::json::array();
  for (const auto& [p, v] : r.insertions) inss.push_back({p, v.first, v.second});
  j["insertions"] = inss;
  nlohmann::json scales = nlohmann::json::array();
  for (const auto& [c, v] : r.duration_scale) scales.push_back({c, v});
  j["duration_scale"] = scales;
  return j;
}

AccentRuleSet RulesFromJson(const nlohmann::json& j) {
  AccentRuleSet r;
  r.accent_id = j.at("accent_id").get<int>();
  for (const auto& e : j.at("substitutions"))
    r.substitutions[e[0].get<int>()] = {e[1].get<int>(), e[2].get<double>()};
  for (const auto& e : j.at("deletions"))
    r.deletions[e[0].get<int>()] = e[1].get<double>();
  for (const auto& e : j.at("insertions"))
    r.insertions[e[0].get<int>()] = {e[1].get<int>(), e[2].get<double>()};
  for (const auto& e : j.at("duration_scale"))
    r.duration_scale[e[0].get<int>()] = e[1].get<double>();
  return r;
}

}  // namespace

void WriteGeneratorInfo(const std::string& path, const Generator& gen) {
  nlohmann::json j;
  j["spec"] = SpecToJson(gen.spec());
  const PhoneInventory& inv = gen.inventory();
  j["inventory"] = {{"vocab", inv.vocab},
                    {"n_phones", inv.n_phones},
                    {"phone_class", inv.phone_class},
                    {"tokens_per_phone", inv.tokens_per_phone},
                    {"primary_token", inv.primary_token},
                    {"dur_mean", inv.dur_mean},
                    {"dur_dev", inv.dur_dev}};
  nlohmann::json accents = nlohmann::json::array();
  for (const auto& r : gen.accents()) accents.push_back(RulesToJson(r));
  j["accents"] = accents;
  j["token_emb"] = TensorToJson(gen.token_emb());
  j["speaker_proj"] = TensorToJson(gen.speaker_proj());
  WriteFile(path, j.dump());
}

GeneratorInfo ReadGeneratorInfo(const std::string& path) {
  if (!FileExists(path))
    throw MissingInputError("generator info not found: " + path);
  nlohmann::json j = nlohmann::json::parse(ReadFile(path));
  GeneratorInfo info;
  info.spec = SpecFromJson(j.at("spec"));
  const auto& ji = j.at("inventory");
  info.inv.vocab = ji.at("vocab").get<int>();
  info.inv.n_phones = ji.at("n_phones").get<int>();
  info.inv.phone_class = ji.at("phone_class").get<std::vector<int>>();
  info.inv.tokens_per_phone =
      ji.at("tokens_per_phone").get<std::vector<std::vector<double>>>();
  info.inv.primary_token = ji.at("primary_token").get<std::vector<int>>();
  info.inv.dur_mean = ji.at("dur_mean").get<std::vector<double>>();
  info.inv.dur_dev = ji.at("dur_dev").get<std::vector<double>>();
  for (const auto& r : j.at("accents")) info.accents.push_back(RulesFromJson(r));
  info.token_emb = TensorFromJson(j.at("token_emb"));
  info.speaker_proj = TensorFromJson(j.at("speaker_proj"));
  return info;
}

namespace {

// One accented record with retry on full deletion.
Utterance MakeAccentedRecord(const Generator& gen, int accent, int spk_local,
                             uint64_t item_seed, const std::string& id) {
  const CorpusSpec& spec = gen.spec();
  Rng meta(item_seed);
  const int len =
      spec.min_phones +
      static_cast<int>(meta.uniform_int(spec.max_phones - spec.min_phones + 1));
  for (uint64_t attempt = 0;; ++attempt) {
    Utterance native = gen.SampleNative(len, DeriveSeed(item_seed, 1, attempt));
    try {
      Utterance u = gen.ApplyAccent(native, gen.accents()[accent - 1],
                                    DeriveSeed(item_seed, 2, attempt));
      u.id = id;
      u.speaker_id = spk_local;
      u.speaker = gen.accent_speaker(accent, spk_local);
      gen.EmitFeatures(&u, DeriveSeed(item_seed, 3, attempt));
      return u;
    } catch (const std::invalid_argument&) {
      ACN_CHECK(attempt < 16, "MakeAccentedRecord: too many retries");
    }
  }
}

Utterance MakeNativeRecord(const Generator& gen, int spk, uint64_t item_seed,
                           const std::string& id) {
  const CorpusSpec& spec = gen.spec();
  Rng meta(item_seed);
  const int len =
      spec.min_phones +
      static_cast<int>(meta.uniform_int(spec.max_phones - spec.min_phones + 1));
  Utterance u = gen.SampleNative(len, DeriveSeed(item_seed, 1));
  u.id = id;
  u.speaker_id = spk;
  u.speaker = gen.native_speaker(spk);
  gen.EmitFeatures(&u, DeriveSeed(item_seed, 3));
  return u;
}

void FinishRecord(Utterance* u, const std::string& dir) {
  u->feat_path = "feats/" + u->id + ".bin";
  WriteFeatures(dir + "/" + u->feat_path, u->features);
  u->features = Tensor();  // records on disk do not keep features in memory
}

}  // namespace

void BuildCorpus(const CorpusSpec& spec, const std::string& out_dir) {
  ACN_CHECK(spec.speakers_per_accent >= 2,
            "BuildCorpus: need at least 2 speakers per accent for holdout");
  Generator gen(spec);
  EnsureDir(out_dir);
  EnsureDir(out_dir + "/feats");

  std::vector<Utterance> train, valid, test;
  const int train_spk = spec.speakers_per_accent - 1;  // last one held out
  for (int a = 1; a <= spec.n_accents; ++a) {
    for (int i = 0; i < spec.train_per_accent; ++i) {
      uint64_t s = DeriveSeed(spec.seed, 100 + a, i);
      Rng pick(DeriveSeed(s, 9));
      int spk = static_cast<int>(pick.uniform_int(train_spk));
      train.push_back(MakeAccentedRecord(
          gen, a, spk, s,
          "acc" + std::to_string(a) + "_tr" + std::to_string(i)));
    }
    for (int i = 0; i < spec.valid_per_accent; ++i) {
      uint64_t s = DeriveSeed(spec.seed, 200 + a, i);
      Rng pick(DeriveSeed(s, 9));
      int spk = static_cast<int>(pick.uniform_int(train_spk));
      valid.push_back(MakeAccentedRecord(
          gen, a, spk, s,
          "acc" + std::to_string(a) + "_va" + std::to_string(i)));
    }
    for (int i = 0; i < spec.test_per_accent; ++i) {
      uint64_t s = DeriveSeed(spec.seed, 300 + a, i);
      test.push_back(MakeAccentedRecord(
          gen, a, train_spk, s,
          "acc" + std::to_string(a) + "_te" + std::to_string(i)));
    }
  }
  std::vector<Utterance> native_train, native_valid;
  for (int i = 0; i < spec.native_train; ++i) {
    uint64_t s = DeriveSeed(spec.seed, 400, i);
    Rng pick(DeriveSeed(s, 9));
    int spk = static_cast<int>(pick.uniform_int(spec.native_speakers));
    native_train.push_back(
        MakeNativeRecord(gen, spk, s, "nat_tr" + std::to_string(i)));
  }
  for (int i = 0; i < spec.native_valid; ++i) {
    uint64_t s = DeriveSeed(spec.seed, 500, i);
    Rng pick(DeriveSeed(s, 9));
    int spk = static_cast<int>(pick.uniform_int(spec.native_speakers));
    native_valid.push_back(
        MakeNativeRecord(gen, spk, s, "nat_va" + std::to_string(i)));
  }

  for (auto* split : {&train, &valid, &test, &native_train, &native_valid})
    for (auto& u : *split) FinishRecord(&u, out_dir);

  WriteCorpusFile(out_dir + "/train.jsonl", train);
  WriteCorpusFile(out_dir + "/valid.jsonl", valid);
  WriteCorpusFile(out_dir + "/test.jsonl", test);
  WriteCorpusFile(out_dir + "/native_train.jsonl", native_train);
  WriteCorpusFile(out_dir + "/native_valid.jsonl", native_valid);
  WriteGeneratorInfo(out_dir + "/generator.json", gen);
}

}  // namespace accnorm
