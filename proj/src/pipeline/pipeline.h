// pipeline/pipeline.h

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

#ifndef ACCNORM_PIPELINE_PIPELINE_H_
#define ACCNORM_PIPELINE_PIPELINE_H_

#include <map>
#include <string>
#include <vector>

#include "pipeline/config.h"

namespace accnorm {

// One line of run_manifest.jsonl. Paths are relative to the run directory;
// directories carry a digest over their sorted (name, content) entries.
struct ManifestEntry {
  std::string stage;
  std::string status;  // "run" or "skipped"
  std::string config_hash;
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
  double wall_ms = 0.0;
  uint64_t seed = 0;
};

void AppendManifestEntry(const std::string& run_dir, const ManifestEntry& e);
std::vector<ManifestEntry> ReadManifest(const std::string& run_dir);

// Digest of a file, or of a directory tree (sorted relative names chained
// with per-file digests). Missing paths throw MissingInputError.
std::string PathDigest(const std::string& run_dir, const std::string& rel);

// One converted test utterance. durs is the plan actually handed to the
// synthesizer; pre_total records the plan total before any exact-total
// adjustment (equal to the plan total in free mode).
struct ConvertedUtterance {
  std::string id;
  int accent_id = 0;
  std::vector<int> tokens;
  std::vector<int> durs;
  int src_total = 0;
  int pre_total = 0;
};

void WriteConvertedFile(const std::string& path,
                        const std::vector<ConvertedUtterance>& records);
std::vector<ConvertedUtterance> ReadConvertedFile(const std::string& path);

// Stage orchestration over a run directory. Every stage declares its inputs
// and outputs, appends a manifest entry, and is skipped when a previous run
// with the same config hash, input digests and output digests is still
// intact.
class Pipeline {
 public:
  Pipeline(const ExperimentConfig& cfg, const std::string& run_dir,
           bool verbose = false);

  // Each stage returns true when it actually ran, false when skipped as
  // up to date.
  bool GenerateCorpus();
  bool Pretrain();  // no-op (returns false) when pretraining is ablated
  bool TrainConverter();
  bool TrainSynthesizer();
  bool TrainDurationFlow();
  bool Convert(const std::string& mode);  // "free", "scaled", "controlled"
  bool Synthesize();
  bool AnalyzeTokens();
  bool Evaluate();
  void RunAll();

  const ExperimentConfig& config() const { return cfg_; }
  const std::string& run_dir() const { return run_dir_; }

 private:
  bool RunStage(const std::string& name, uint64_t seed,
                const std::vector<std::string>& inputs,
                const std::vector<std::string>& outputs,
                const std::function<void()>& body);
  std::string Abs(const std::string& rel) const;

  ExperimentConfig cfg_;
  std::string run_dir_;
  bool verbose_ = false;
};

}  // namespace accnorm

#endif  // ACCNORM_PIPELINE_PIPELINE_H_
