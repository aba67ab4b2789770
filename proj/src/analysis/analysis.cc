// analysis/analysis.cc

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

#include "analysis/analysis.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "base/common.h"
#include "base/io.h"
#include "token/codec.h"

namespace accnorm {

PhoneTokenDistribution CollectDistributions(
    const std::vector<AlignedFrames>& frames, int n_phones, int vocab,
    double alpha) {
  ACN_CHECK(n_phones >= 1 && vocab >= 1, "CollectDistributions: bad shape");
  ACN_CHECK(alpha >= 0.0, "CollectDistributions: negative alpha");
  PhoneTokenDistribution dist;
  dist.alpha = alpha;
  dist.counts = Tensor(n_phones, vocab);
  dist.probs = Tensor(n_phones, vocab);
  dist.empty_phone.assign(n_phones, 0);
  for (const AlignedFrames& af : frames) {
    ACN_CHECK(af.tokens.size() == af.phones.size(),
              "CollectDistributions: tokens vs phones length");
    for (size_t k = 0; k < af.tokens.size(); ++k) {
      const int p = af.phones[k];
      if (p < 0) continue;
      ACN_CHECK(p < n_phones, "CollectDistributions: phone " << p);
      const int t = af.tokens[k];
      ACN_CHECK(t >= 0 && t < vocab, "CollectDistributions: token " << t);
      dist.counts.at(p, t) += 1.0;
    }
  }
  for (int p = 0; p < n_phones; ++p) {
    double total = 0.0;
    for (int t = 0; t < vocab; ++t) total += dist.counts.at(p, t);
    if (total == 0.0) {
      dist.empty_phone[p] = 1;
      for (int t = 0; t < vocab; ++t) dist.probs.at(p, t) = 1.0 / vocab;
      continue;
    }
    const double denom = total + alpha * vocab;
    for (int t = 0; t < vocab; ++t)
      dist.probs.at(p, t) = (dist.counts.at(p, t) + alpha) / denom;
  }
  return dist;
}

Tensor KlMatrix(const PhoneTokenDistribution& eval,
                const PhoneTokenDistribution& ref) {
  ACN_CHECK(eval.probs.rows == ref.probs.rows &&
                eval.probs.cols == ref.probs.cols,
            "KlMatrix: distribution shape mismatch");
  const int n_phones = eval.probs.rows;
  const int vocab = eval.probs.cols;
  Tensor kl(n_phones, n_phones);
  for (int i = 0; i < n_phones; ++i)
    for (int j = 0; j < n_phones; ++j) {
      double sum = 0.0;
      for (int t = 0; t < vocab; ++t) {
        const double e = eval.probs.at(i, t);
        if (e > 0.0) sum += e * std::log(e / ref.probs.at(j, t));
      }
      kl.at(i, j) = sum;
    }
  return kl;
}

std::vector<double> KlDiagonal(const Tensor& kl) {
  ACN_CHECK(kl.rows == kl.cols, "KlDiagonal: matrix not square");
  std::vector<double> d(kl.rows);
  for (int i = 0; i < kl.rows; ++i) d[i] = kl.at(i, i);
  return d;
}

double TokenErrorRate(const std::vector<int>& hyp,
                      const std::vector<int>& ref) {
  ACN_CHECK(!ref.empty(), "TokenErrorRate: empty reference");
  return static_cast<double>(EditDistance(ref, hyp).distance) / ref.size();
}

void TerAccumulator::Add(const std::vector<int>& hyp,
                         const std::vector<int>& ref) {
  ACN_CHECK(!ref.empty(), "TerAccumulator: empty reference");
  distance_ += EditDistance(ref, hyp).distance;
  length_ += static_cast<long long>(ref.size());
  ++pairs_;
}

double TerAccumulator::Rate() const {
  ACN_CHECK(pairs_ > 0, "TerAccumulator: no pairs");
  return static_cast<double>(distance_) / static_cast<double>(length_);
}

DtwResult DtwDistance(const Tensor& gen, const Tensor& ref) {
  ACN_CHECK(gen.rows >= 1 && ref.rows >= 1, "DtwDistance: empty matrix");
  ACN_CHECK(gen.cols == ref.cols, "DtwDistance: channel mismatch");
  const int n = gen.rows, m = ref.rows;
  auto local = [&](int i, int j) {
    double s = 0.0;
    for (int c = 0; c < gen.cols; ++c) {
      const double d = gen.at(i, c) - ref.at(j, c);
      s += d * d;
    }
    return std::sqrt(s);
  };
  Tensor acc(n, m);
  std::vector<signed char> from(static_cast<size_t>(n) * m, -1);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      const double d = local(i, j);
      if (i == 0 && j == 0) {
        acc.at(0, 0) = d;
        continue;
      }
      // Candidates in tie-break order: diagonal, gen step, ref step.
      double best = 0.0;
      signed char arg = -1;
      if (i > 0 && j > 0) {
        best = acc.at(i - 1, j - 1);
        arg = 0;
      }
      if (i > 0 && (arg < 0 || acc.at(i - 1, j) < best)) {
        best = acc.at(i - 1, j);
        arg = 1;
      }
      if (j > 0 && (arg < 0 || acc.at(i, j - 1) < best)) {
        best = acc.at(i, j - 1);
        arg = 2;
      }
      acc.at(i, j) = d + best;
      from[static_cast<size_t>(i) * m + j] = arg;
    }
  DtwResult r;
  r.total = acc.at(n - 1, m - 1);
  int i = n - 1, j = m - 1;
  r.path_len = 1;
  while (i != 0 || j != 0) {
    const signed char arg = from[static_cast<size_t>(i) * m + j];
    if (arg == 0) {
      --i;
      --j;
    } else if (arg == 1) {
      --i;
    } else {
      --j;
    }
    ++r.path_len;
  }
  r.mean = r.total / r.path_len;
  return r;
}

double Cosine(const std::vector<double>& a, const std::vector<double>& b) {
  ACN_CHECK(a.size() == b.size() && !a.empty(), "Cosine: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  ACN_CHECK(na > 0.0 && nb > 0.0, "Cosine: zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<double> RecoverSpeaker(const Tensor& features,
                                   const std::vector<int>& frame_tokens,
                                   const Tensor& token_emb,
                                   const Tensor& speaker_proj) {
  const int T = features.rows;
  const int F = features.cols;
  const int ds = speaker_proj.rows;
  ACN_CHECK(T >= 1, "RecoverSpeaker: no frames");
  ACN_CHECK(static_cast<int>(frame_tokens.size()) == T,
            "RecoverSpeaker: tokens vs frames");
  ACN_CHECK(token_emb.cols == F && speaker_proj.cols == F,
            "RecoverSpeaker: embedding shape mismatch");
  std::vector<double> resid(F, 0.0);
  for (int t = 0; t < T; ++t) {
    const int tok = frame_tokens[t];
    ACN_CHECK(tok >= 0 && tok < token_emb.rows,
              "RecoverSpeaker: bad token " << tok);
    for (int c = 0; c < F; ++c)
      resid[c] += features.at(t, c) - token_emb.at(tok, c);
  }
  for (double& v : resid) v /= T;

  // Normal equations (U U^T) s = U r, solved by Cholesky.
  Tensor a(ds, ds);
  std::vector<double> b(ds, 0.0);
  for (int i = 0; i < ds; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = 0.0;
      for (int c = 0; c < F; ++c)
        s += speaker_proj.at(i, c) * speaker_proj.at(j, c);
      a.at(i, j) = s;
      a.at(j, i) = s;
    }
    for (int c = 0; c < F; ++c) b[i] += speaker_proj.at(i, c) * resid[c];
  }
  Tensor l(ds, ds);
  for (int i = 0; i < ds; ++i)
    for (int j = 0; j <= i; ++j) {
      double s = a.at(i, j);
      for (int k = 0; k < j; ++k) s -= l.at(i, k) * l.at(j, k);
      if (i == j) {
        ACN_CHECK(s > 0.0, "RecoverSpeaker: projection not full rank");
        l.at(i, i) = std::sqrt(s);
      } else {
        l.at(i, j) = s / l.at(j, j);
      }
    }
  std::vector<double> y(ds), s_hat(ds);
  for (int i = 0; i < ds; ++i) {
    double v = b[i];
    for (int k = 0; k < i; ++k) v -= l.at(i, k) * y[k];
    y[i] = v / l.at(i, i);
  }
  for (int i = ds - 1; i >= 0; --i) {
    double v = y[i];
    for (int k = i + 1; k < ds; ++k) v -= l.at(k, i) * s_hat[k];
    s_hat[i] = v / l.at(i, i);
  }
  return s_hat;
}

namespace {

std::string FmtG(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

void WriteMetricsCsv(const std::string& path, const std::string& config_hash,
                     const std::vector<std::pair<std::string, double>>& rows) {
  std::ostringstream os;
  os << "# config_hash=" << config_hash << "\n";
  os << "metric,value\n";
  for (const auto& kv : rows) os << kv.first << "," << FmtG(kv.second) << "\n";
  WriteFile(path, os.str());
}

void WriteMatrixCsv(const std::string& path, const std::string& config_hash,
                    const Tensor& m) {
  std::ostringstream os;
  os << "# config_hash=" << config_hash << "\n";
  for (int i = 0; i < m.rows; ++i) {
    for (int j = 0; j < m.cols; ++j) {
      if (j) os << ",";
      os << FmtG(m.at(i, j));
    }
    os << "\n";
  }
  WriteFile(path, os.str());
}

void WriteDurationsCsv(const std::string& path, const std::string& config_hash,
                       const std::vector<DurationRow>& rows) {
  std::ostringstream os;
  os << "# config_hash=" << config_hash << "\n";
  os << "id,mode,source_total,pre_total,post_total\n";
  for (const DurationRow& r : rows)
    os << r.id << "," << r.mode << "," << r.source_total << "," << r.pre_total
       << "," << r.post_total << "\n";
  WriteFile(path, os.str());
}

void WriteHeatmapPpm(const std::string& path, const Tensor& m) {
  ACN_CHECK(m.rows >= 1 && m.cols >= 1, "WriteHeatmapPpm: empty matrix");
  const int cell = 12;
  double mx = 0.0;
  for (double v : m.data) mx = std::max(mx, v);
  if (mx <= 0.0) mx = 1.0;
  const int w = m.cols * cell, h = m.rows * cell;
  std::ostringstream os;
  os << "P6\n" << w << " " << h << "\n255\n";
  std::string body;
  body.reserve(static_cast<size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double t = std::clamp(m.at(y / cell, x / cell) / mx, 0.0, 1.0);
      const double r = std::min(1.0, 3.0 * t);
      const double g = std::clamp(3.0 * t - 1.0, 0.0, 1.0);
      const double b = std::clamp(3.0 * t - 2.0, 0.0, 1.0);
      body.push_back(static_cast<char>(std::lround(255.0 * r)));
      body.push_back(static_cast<char>(std::lround(255.0 * g)));
      body.push_back(static_cast<char>(std::lround(255.0 * b)));
    }
  WriteFile(path, os.str() + body);
}

}  // namespace accnorm
