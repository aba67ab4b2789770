// pipeline/config.h

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

#ifndef ACCNORM_PIPELINE_CONFIG_H_
#define ACCNORM_PIPELINE_CONFIG_H_

#include <map>
#include <string>

#include "converter/converter.h"
#include "duration/duration.h"
#include "nn/trainutil.h"
#include "synth/synth.h"
#include "synthgen/synthgen.h"
#include "token/codec.h"

namespace accnorm {

// Resolved experiment configuration. Loaded from a key = value text file
// ('#' starts a comment); unknown or duplicate keys are rejected. The hash
// covers every resolved key in sorted order, so it ignores comments, key
// order and whether a default was spelled out.
struct ExperimentConfig {
  uint64_t seed = 1;

  CorpusSpec corpus;
  NoiseSpec noise;

  ConverterConfig converter;
  int converter_beam = 10;
  double converter_aug = 0.25;
  TrainOptions pretrain_opts;
  TrainOptions converter_opts;

  SynthConfig synth;
  TrainOptions synth_opts;
  int synth_sampling_steps = 32;
  double synth_cfg = 2.0;
  double fidelity_cfg = 1.0;

  DurationFlowConfig durflow;
  TrainOptions durflow_opts;
  int durflow_sampling_steps = 32;
  double durflow_cfg = 0.5;

  bool abl_accent_embeddings = true;
  bool abl_phone_supervision = true;
  bool abl_pretraining = true;
  bool abl_extra_data = true;

  int fidelity_utts = 16;
  int synth_converted_utts = 8;
  double kl_alpha = 0.5;
  bool heatmaps = false;

  std::string hash;  // 16 hex digits over the canonical serialization
};

ExperimentConfig ParseExperimentConfig(const std::string& text);
ExperimentConfig LoadExperimentConfig(const std::string& path);

// The canonical serialization the hash is computed over.
std::string CanonicalConfigText(const ExperimentConfig& cfg);

}  // namespace accnorm

#endif  // ACCNORM_PIPELINE_CONFIG_H_
