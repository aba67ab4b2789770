// tests/pipeline_test.cc

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "base/io.h"
#include "converter/converter.h"
#include "doctest.h"
#include "duration/duration.h"
#include "pipeline/cli.h"
#include "pipeline/config.h"
#include "pipeline/pipeline.h"
#include "test_util.h"

using namespace accnorm;

namespace {

const char* kTinyConfig = R"(
# tiny end-to-end configuration
seed = 7
corpus.n_phones = 10
corpus.vocab = 24
corpus.feat_dim = 8
corpus.speaker_dim = 6
corpus.n_accents = 2
corpus.speakers_per_accent = 2
corpus.native_speakers = 4
corpus.train_per_accent = 24
corpus.valid_per_accent = 6
corpus.test_per_accent = 8
corpus.native_train = 30
corpus.native_valid = 6
corpus.min_phones = 3
corpus.max_phones = 6
converter.layers = 1
converter.dim = 32
converter.heads = 2
converter.accent_dim = 8
converter.pretrain_steps = 30
converter.train_steps = 40
converter.batch = 8
synth.dim = 32
synth.enc_layers = 1
synth.dec_layers = 1
synth.heads = 2
synth.time_dim = 8
synth.train_steps = 40
synth.batch = 8
synth.sampling_steps = 8
durflow.dim = 16
durflow.layers = 1
durflow.heads = 2
durflow.time_dim = 4
durflow.train_steps = 40
durflow.batch = 8
durflow.sampling_steps = 8
eval.fidelity_utts = 3
eval.synth_converted_utts = 2
)";

int Cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("accnorm");
  for (const std::string& a : args) argv.push_back(a.c_str());
  return RunCli(static_cast<int>(argv.size()), argv.data());
}

int CountStatus(const std::string& run_dir, const std::string& status) {
  int n = 0;
  for (const ManifestEntry& e : ReadManifest(run_dir))
    if (e.status == status) ++n;
  return n;
}

}  // namespace

TEST_CASE("config parsing, defaults and validation") {
  ExperimentConfig def = ParseExperimentConfig("");
  CHECK(def.corpus.vocab == 64);
  CHECK(def.corpus.n_accents == 6);
  CHECK(def.converter.dim == 64);
  CHECK(def.converter_beam == 10);
  CHECK(def.synth_cfg == doctest::Approx(2.0));
  CHECK(def.durflow_cfg == doctest::Approx(0.5));
  CHECK(def.abl_pretraining);
  CHECK(def.noise.mask_id == def.corpus.vocab);
  CHECK(def.hash.size() == 16);

  ExperimentConfig c = ParseExperimentConfig(
      "corpus.vocab = 48\nconverter.dim=32\nconverter.heads = 2\n"
      "ablation.pretraining = false\ndurflow.cfg_strength = 0.75\n");
  CHECK(c.corpus.vocab == 48);
  CHECK(c.noise.vocab == 48);
  CHECK(c.converter.vocab == 48);
  CHECK(c.synth.vocab == 48);
  CHECK(c.durflow.vocab == 48);
  CHECK(c.converter.dim == 32);
  CHECK_FALSE(c.abl_pretraining);
  CHECK(c.durflow_cfg == doctest::Approx(0.75));

  CHECK_THROWS_AS(ParseExperimentConfig("corpus.bogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(ParseExperimentConfig("seed = 1\nseed = 2\n"), ConfigError);
  CHECK_THROWS_AS(ParseExperimentConfig("corpus.vocab = twelve\n"),
                  ConfigError);
  CHECK_THROWS_AS(ParseExperimentConfig("corpus.vocab = 4\n"), ConfigError);
  CHECK_THROWS_AS(ParseExperimentConfig("synth.cond_drop = 1.5\n"),
                  ConfigError);
  CHECK_THROWS_AS(ParseExperimentConfig("just a line\n"), ConfigError);
  CHECK_THROWS_AS(
      ParseExperimentConfig("corpus.min_phones = 9\ncorpus.max_phones = 4\n"),
      ConfigError);
  CHECK_THROWS_AS(ParseExperimentConfig(
                      "durflow.jitter_lo = 1.2\ndurflow.jitter_hi = 0.9\n"),
                  ConfigError);
  CHECK_THROWS_AS(
      ParseExperimentConfig("converter.dim = 30\nconverter.heads = 4\n"),
      ConfigError);
  CHECK_THROWS_AS(ParseExperimentConfig("synth.time_dim = 7\n"), ConfigError);
  CHECK_THROWS_AS(ParseExperimentConfig("eval.heatmaps = maybe\n"),
                  ConfigError);
}

TEST_CASE("config hash ignores comments, ordering and spelled defaults") {
  std::string a =
      "corpus.vocab = 48\n"
      "converter.dim = 32\n"
      "converter.heads = 2\n";
  std::string b =
      "# reordered with comments\n"
      "converter.heads = 2   # two heads\n"
      "\n"
      "converter.dim = 32\n"
      "corpus.vocab = 48\n";
  std::string c = a + "synth.cfg_strength = 2.0\n";  // spelled-out default
  std::string d = a + "synth.cfg_strength = 1.5\n";

  ExperimentConfig ca = ParseExperimentConfig(a);
  ExperimentConfig cb = ParseExperimentConfig(b);
  ExperimentConfig cc = ParseExperimentConfig(c);
  ExperimentConfig cd = ParseExperimentConfig(d);
  CHECK(ca.hash == cb.hash);
  CHECK(ca.hash == cc.hash);
  CHECK(ca.hash != cd.hash);
  CHECK(CanonicalConfigText(ca) == CanonicalConfigText(cb));

  CHECK_THROWS_AS(LoadExperimentConfig("no/such/config.cfg"),
                  MissingInputError);
}

TEST_CASE("manifest entries round trip") {
  std::string dir = test::ScratchDir("pipeline_manifest");
  CHECK(ReadManifest(dir).empty());
  ManifestEntry e1{"stage-a", "run", "1234", {{"in.txt", "aa"}},
                   {{"out.txt", "bb"}}, 12.5, 42};
  ManifestEntry e2{"stage-b", "skipped", "1234", {}, {}, 0.0, 7};
  AppendManifestEntry(dir, e1);
  AppendManifestEntry(dir, e2);
  std::vector<ManifestEntry> got = ReadManifest(dir);
  REQUIRE(got.size() == 2);
  CHECK(got[0].stage == "stage-a");
  CHECK(got[0].status == "run");
  CHECK(got[0].config_hash == "1234");
  CHECK(got[0].inputs.at("in.txt") == "aa");
  CHECK(got[0].outputs.at("out.txt") == "bb");
  CHECK(got[0].wall_ms == doctest::Approx(12.5));
  CHECK(got[0].seed == 42);
  CHECK(got[1].stage == "stage-b");
  CHECK(got[1].status == "skipped");
}

TEST_CASE("path digests cover files and directory trees") {
  std::string dir = test::ScratchDir("pipeline_digest");
  WriteFile(dir + "/a.txt", "hello");
  EnsureDir(dir + "/tree/sub");
  WriteFile(dir + "/tree/x.bin", "xx");
  WriteFile(dir + "/tree/sub/y.bin", "yy");

  CHECK(PathDigest(dir, "a.txt") == FileDigest(dir + "/a.txt"));
  std::string t1 = PathDigest(dir, "tree");
  CHECK(t1 == PathDigest(dir, "tree"));
  WriteFile(dir + "/tree/x.bin", "xz");
  std::string t2 = PathDigest(dir, "tree");
  CHECK(t1 != t2);
  WriteFile(dir + "/tree/z.bin", "zz");
  CHECK(PathDigest(dir, "tree") != t2);
  CHECK_THROWS_AS(PathDigest(dir, "absent.txt"), MissingInputError);
}

TEST_CASE("converted records round trip") {
  std::string dir = test::ScratchDir("pipeline_converted");
  std::vector<ConvertedUtterance> recs;
  recs.push_back({"utt0", 1, {3, 1, 4}, {2, 5, 3}, 12, 9});
  recs.push_back({"utt1", 2, {7}, {6}, 6, 6});
  WriteConvertedFile(dir + "/c.jsonl", recs);
  std::vector<ConvertedUtterance> got = ReadConvertedFile(dir + "/c.jsonl");
  REQUIRE(got.size() == 2);
  CHECK(got[0].id == "utt0");
  CHECK(got[0].accent_id == 1);
  CHECK(got[0].tokens == std::vector<int>{3, 1, 4});
  CHECK(got[0].durs == std::vector<int>{2, 5, 3});
  CHECK(got[0].src_total == 12);
  CHECK(got[0].pre_total == 9);
  CHECK(got[1].id == "utt1");
  CHECK_THROWS_AS(ReadConvertedFile(dir + "/missing.jsonl"),
                  MissingInputError);
}

TEST_CASE("checkpoint robustness: byte identity, truncation, wrong model") {
  std::string dir = test::ScratchDir("pipeline_ckpt");
  ConverterConfig cfg;
  cfg.vocab = 12;
  cfg.phones = 5;
  cfg.accents = 2;
  cfg.layers = 1;
  cfg.dim = 16;
  cfg.heads = 2;
  cfg.accent_dim = 4;
  cfg.init_seed = 9;
  ConverterModel model(cfg);
  std::string p1 = dir + "/conv.ckpt";
  model.Save(p1);

  // Save, load, save again: byte identical.
  std::unique_ptr<ConverterModel> loaded = ConverterModel::Load(p1);
  std::string p2 = dir + "/conv2.ckpt";
  loaded->Save(p2);
  CHECK(ReadFile(p1) == ReadFile(p2));

  // Truncation is caught by the payload digest, not a crash.
  std::string bytes = ReadFile(p1);
  WriteFile(dir + "/trunc.ckpt", bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(ConverterModel::Load(dir + "/trunc.ckpt"), ConfigError);
  CHECK_THROWS_WITH_AS(ConverterModel::Load(dir + "/missing.ckpt"),
                       doctest::Contains("not found"), MissingInputError);

  // A checkpoint of a different model family is rejected explicitly.
  DurationFlowConfig dcfg;
  dcfg.vocab = 12;
  dcfg.speaker_dim = 4;
  dcfg.dim = 16;
  dcfg.layers = 1;
  dcfg.heads = 2;
  dcfg.time_dim = 4;
  DurationFlowModel dmodel(dcfg);
  dmodel.Save(dir + "/flow.ckpt");
  CHECK_THROWS_AS(ConverterModel::Load(dir + "/flow.ckpt"), ConfigError);
}

TEST_CASE("incompatible pretrained checkpoint is rejected") {
  std::string dir = test::ScratchDir("pipeline_mismatch");
  ExperimentConfig cfg = ParseExperimentConfig(kTinyConfig);
  Pipeline pipeline(cfg, dir);
  pipeline.GenerateCorpus();

  ConverterConfig other = cfg.converter;
  other.dim = 16;
  other.heads = 2;
  ConverterModel wrong(other);
  EnsureDir(dir + "/ckpt");
  wrong.Save(dir + "/ckpt/pretrain.ckpt");
  CHECK_THROWS_AS(pipeline.TrainConverter(), ConfigError);
}

TEST_CASE("cli runs stages, caches by digest and maps exit codes") {
  std::string base = test::ScratchDir("pipeline_cli");
  std::string cfg_path = base + "/exp.cfg";
  WriteFile(cfg_path, kTinyConfig);
  std::string run1 = base + "/run1";
  std::string run2 = base + "/run2";

  CHECK(Cli({"--config", cfg_path, "--run-dir", run1, "run-all"}) == 0);
  CHECK(CountStatus(run1, "run") == 11);
  CHECK(CountStatus(run1, "skipped") == 0);
  CHECK(FileExists(run1 + "/report/metrics.csv"));
  CHECK(FileExists(run1 + "/report/durations.csv"));
  CHECK(FileExists(run1 + "/report/kl_accented.csv"));
  CHECK(FileExists(run1 + "/report/kl_converted.csv"));

  ExperimentConfig cfg = ParseExperimentConfig(kTinyConfig);
  std::string metrics = ReadFile(run1 + "/report/metrics.csv");
  CHECK(metrics.rfind("# config_hash=" + cfg.hash, 0) == 0);

  // Second invocation skips every stage and leaves the report untouched.
  CHECK(Cli({"--config", cfg_path, "--run-dir", run1, "run-all"}) == 0);
  CHECK(CountStatus(run1, "run") == 11);
  CHECK(CountStatus(run1, "skipped") == 11);
  CHECK(ReadFile(run1 + "/report/metrics.csv") == metrics);

  // A fresh run directory reproduces the report byte for byte.
  CHECK(Cli({"--config", cfg_path, "--run-dir", run2, "run-all"}) == 0);
  CHECK(ReadFile(run2 + "/report/metrics.csv") == metrics);
  CHECK(ReadFile(run2 + "/report/durations.csv") ==
        ReadFile(run1 + "/report/durations.csv"));

  // A config change invalidates the cache.
  WriteFile(cfg_path, std::string(kTinyConfig) + "durflow.cfg_strength = 0.6\n");
  CHECK(Cli({"--config", cfg_path, "--run-dir", run1, "run-all"}) == 0);
  CHECK(CountStatus(run1, "run") > 11);

  // Config errors exit 2 and write nothing.
  std::string bad_cfg = base + "/bad.cfg";
  WriteFile(bad_cfg, "corpus.not_a_key = 3\n");
  std::string bad_run = base + "/bad_run";
  CHECK(Cli({"--config", bad_cfg, "--run-dir", bad_run, "run-all"}) == 2);
  CHECK_FALSE(std::filesystem::exists(bad_run));
  CHECK(Cli({"--config", cfg_path, "--run-dir", run1, "convert",
             "--duration-mode", "sideways"}) == 2);

  // Missing inputs exit 3.
  std::string empty_run = base + "/empty_run";
  CHECK(Cli({"--config", cfg_path, "--run-dir", empty_run, "evaluate"}) == 3);

  // The run directory can come from the environment.
  setenv("ACCNORM_RUN_DIR", run2.c_str(), 1);
  CHECK(Cli({"--config", cfg_path, "evaluate"}) == 0);
  unsetenv("ACCNORM_RUN_DIR");
  CHECK(Cli({"--config", cfg_path, "run-all"}) == 2);
}
