// pipeline/cli.cc

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

#include "pipeline/cli.h"

#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "base/common.h"
#include "kernels/kernels.h"
#include "pipeline/pipeline.h"

namespace accnorm {

namespace {

std::string ResolveRunDir(const std::string& flag) {
  if (!flag.empty()) return flag;
  const char* env = std::getenv("ACCNORM_RUN_DIR");
  if (env != nullptr && env[0] != '\0') return env;
  throw ConfigError(
      "run directory not set (pass --run-dir or set ACCNORM_RUN_DIR)");
}

}  // namespace

int RunCli(int argc, const char* const* argv) {
  CLI::App app{"accnorm: accent normalization over discrete speech tokens"};
  app.require_subcommand(1);

  std::string config_path;
  std::string run_dir_flag;
  std::string duration_mode = "free";
  int threads = 0;
  bool serial = false;
  bool verbose = false;
  app.add_option("--config", config_path, "experiment config file")
      ->required();
  app.add_option("--run-dir", run_dir_flag,
                 "run directory (default: $ACCNORM_RUN_DIR)");
  app.add_option("--threads", threads, "kernel thread count (0 = library default)");
  app.add_flag("--serial", serial, "use the serial reference kernels");
  app.add_flag("--verbose", verbose, "print training progress");

  CLI::App* generate = app.add_subcommand("generate-corpus",
                                          "build the synthetic corpus");
  CLI::App* pretrain =
      app.add_subcommand("pretrain", "denoising pretraining of the converter");
  CLI::App* train_conv = app.add_subcommand(
      "train-converter", "fine-tune the converter on parallel pairs");
  CLI::App* train_synth =
      app.add_subcommand("train-synthesizer", "train the feature synthesizer");
  CLI::App* train_flow = app.add_subcommand("train-duration-flow",
                                            "train the duration flow model");
  CLI::App* convert =
      app.add_subcommand("convert", "convert the accented test set");
  convert->add_option("--duration-mode", duration_mode,
                      "free, scaled or controlled");
  CLI::App* synthesize = app.add_subcommand(
      "synthesize", "synthesize fidelity and converted features");
  CLI::App* analyze = app.add_subcommand(
      "analyze-tokens", "per-phone token distribution study");
  CLI::App* evaluate =
      app.add_subcommand("evaluate", "write metrics and duration reports");
  CLI::App* run_all =
      app.add_subcommand("run-all", "run every stage in dependency order");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    ExperimentConfig cfg = LoadExperimentConfig(config_path);
    std::string run_dir = ResolveRunDir(run_dir_flag);
    if (serial) SetKernelMode(KernelMode::kSerial);
    if (threads > 0) SetKernelThreads(threads);

    Pipeline pipeline(cfg, run_dir, verbose);
    if (generate->parsed()) pipeline.GenerateCorpus();
    if (pretrain->parsed()) pipeline.Pretrain();
    if (train_conv->parsed()) pipeline.TrainConverter();
    if (train_synth->parsed()) pipeline.TrainSynthesizer();
    if (train_flow->parsed()) pipeline.TrainDurationFlow();
    if (convert->parsed()) pipeline.Convert(duration_mode);
    if (synthesize->parsed()) pipeline.Synthesize();
    if (analyze->parsed()) pipeline.AnalyzeTokens();
    if (evaluate->parsed()) pipeline.Evaluate();
    if (run_all->parsed()) pipeline.RunAll();
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const MissingInputError& e) {
    std::cerr << "missing input: " << e.what() << "\n";
    return 3;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return 4;
  } catch (const EvalError& e) {
    std::cerr << "evaluation failed: " << e.what() << "\n";
    return 5;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace accnorm
