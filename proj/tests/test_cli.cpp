// Copyright (C) 2026 The se3flow authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end tests of the installed CLI binary: the exit-code contract
// (0 success, 1 usage, 2 config/input, 3 numeric, 4 partial eval) and
// byte-level reproducibility of seeded commands across process boundaries.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "se3flow/checkpoint.hpp"
#include "se3flow/experiment.hpp"

using namespace se3flow;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* name) {
  const fs::path dir = fs::temp_directory_path() / "se3flow_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(bool(in));
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

// Runs the binary with `args`, captures stdout+stderr into `*output`,
// and returns the process exit code.
int run_cli(const std::string& args, std::string* output = nullptr) {
  static int counter = 0;
  const fs::path log =
      fs::temp_directory_path() /
      ("se3flow_cli_out_" + std::to_string(counter++) + ".txt");
  const std::string cmd = std::string(SE3FLOW_CLI_PATH) + " " + args + " > " +
                          log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  if (output != nullptr) *output = slurp(log);
  fs::remove(log);
  REQUIRE(WIFEXITED(rc));
  return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("usage surface: help, version, and argument errors") {
  std::string out;
  CHECK(run_cli("--help", &out) == kExitSuccess);
  CHECK(out.find("Usage:") != std::string::npos);
  CHECK(out.find("generate") != std::string::npos);

  CHECK(run_cli("eval --help", &out) == kExitSuccess);
  CHECK(out.find("--checkpoint") != std::string::npos);

  CHECK(run_cli("--version", &out) == kExitSuccess);
  CHECK(out.find("se3flow") != std::string::npos);

  CHECK(run_cli("", &out) == kExitUsage);              // no subcommand
  CHECK(run_cli("generate --bogus", &out) == kExitUsage);
  CHECK(run_cli("train", &out) == kExitUsage);          // --stage is required
  CHECK(run_cli("eval", &out) == kExitUsage);           // --checkpoint missing
}

TEST_CASE("configuration errors exit with code 2") {
  const fs::path dir = temp_dir("cfg_errors");
  std::string out;

  CHECK(run_cli("generate --task juggling --out " + dir.string(), &out) ==
        kExitConfig);

  CHECK(run_cli("train --stage 1 --config " + (dir / "nope.ini").string(),
                &out) == kExitConfig);
  CHECK(out.find("cannot open config file") != std::string::npos);

  CHECK(run_cli("train --stage 1 --set flow1.epochs", &out) == kExitConfig);
  CHECK(out.find("section.key=value") != std::string::npos);

  CHECK(run_cli("train --stage 1 --set solver.kind=warp", &out) ==
        kExitConfig);

  CHECK(run_cli("eval --checkpoint " + (dir / "nope.ckpt").string() +
                    " --steps 0",
                &out) == kExitConfig);
  CHECK(out.find("positive integers") != std::string::npos);

  CHECK(run_cli("import-external --results " + (dir / "nope.csv").string(),
                &out) == kExitConfig);
}

TEST_CASE("the full pipeline is reproducible across processes") {
  const fs::path a = temp_dir("pipe_a");
  const fs::path b = temp_dir("pipe_b");
  std::string out;

  for (const fs::path& dir : {a, b}) {
    const std::string base = " --task rotating_triangle --out " + dir.string();
    REQUIRE(run_cli("generate --n 3 --seed 21" + base, &out) == kExitSuccess);

    const std::string train_ds =
        " --train-dataset " + (dir / "rotating_triangle_train.bin").string();
    const std::string test_ds =
        " --test-dataset " + (dir / "rotating_triangle_test.bin").string();
    REQUIRE(run_cli("train --stage 1 --epochs 2" + base + train_ds +
                        " --set flow1.batch_size=8",
                    &out) == kExitSuccess);

    const std::string warm =
        " --flow1-checkpoint " + (dir / "flow1.ckpt").string();
    REQUIRE(run_cli("synthesize-reflow --count 4" + base + train_ds + warm +
                        " --set flow2.rectified_step_budget=10",
                    &out) == kExitSuccess);

    REQUIRE(run_cli("train --stage 2 --epochs 2" + base + train_ds + warm +
                        " --reflow-pairs " +
                        (dir / "reflow_pairs.bin").string() +
                        " --set flow2.batch_size=8",
                    &out) == kExitSuccess);

    REQUIRE(run_cli("eval --checkpoint " + (dir / "flow2.ckpt").string() +
                        " --steps 1,5 --seeds 3407,3408" + base + test_ds,
                    &out) == kExitSuccess);
  }

  for (const char* name :
       {"rotating_triangle_train.bin", "rotating_triangle_test.bin",
        "flow1.ckpt", "reflow_pairs.bin", "flow2.ckpt", "flow1_loss.csv",
        "flow2_loss.csv", "eval_per_action.csv", "eval_aggregate.csv"}) {
    CAPTURE(name);
    CHECK(slurp(a / name) == slurp(b / name));
  }

  // The evaluation covered both requested budgets for the stage-2 model.
  const std::string agg = slurp(a / "eval_aggregate.csv");
  CHECK(agg.find("rotating_triangle,flow2,1,") != std::string::npos);
  CHECK(agg.find("rotating_triangle,flow2,5,") != std::string::npos);
}

TEST_CASE("a partially failed evaluation exits with code 4") {
  const fs::path dir = temp_dir("partial");
  std::string out;
  const std::string base = " --task rotating_triangle --out " + dir.string();
  REQUIRE(run_cli("generate --n 2 --seed 3" + base, &out) == kExitSuccess);
  REQUIRE(run_cli("train --stage 1 --epochs 0" + base + " --train-dataset " +
                      (dir / "rotating_triangle_train.bin").string(),
                  &out) == kExitSuccess);

  // Rewrite the checkpoint with a violently curved drift field so a
  // single-step adaptive solve cannot meet tolerance.
  Checkpoint ckpt = load_checkpoint((dir / "flow1.ckpt").string());
  ckpt.model.weights.back() *= 1e4;
  save_checkpoint((dir / "wild.ckpt").string(), ckpt);

  CHECK(run_cli("eval --checkpoint " + (dir / "wild.ckpt").string() + base +
                    " --test-dataset " +
                    (dir / "rotating_triangle_test.bin").string() +
                    " --seeds 3407 --set solver.kind=rk45" +
                    " --set solver.max_steps=1",
                &out) == kExitPartialEval);
  CHECK(out.find("failed, excluded") != std::string::npos);
}

TEST_CASE("config file plus --set overrides drive training") {
  const fs::path dir = temp_dir("cfg_flow");
  std::string out;
  REQUIRE(run_cli("generate --task rotating_triangle --n 2 --seed 9 --out " +
                      dir.string(),
                  &out) == kExitSuccess);

  ExperimentConfig cfg = default_experiment_config();
  cfg.task = Task::rotating_triangle;
  cfg.train_dataset = (dir / "rotating_triangle_train.bin").string();
  cfg.output_dir = dir.string();
  cfg.flow1.epochs = 1;
  cfg.flow1.batch_size = 4;
  const fs::path ini = dir / "exp.ini";
  std::ofstream(ini) << serialize_experiment_config(cfg);

  REQUIRE(run_cli("train --stage 1 --config " + ini.string() +
                      " --set flow1.epochs=2 --set flow1.seed=77",
                  &out) == kExitSuccess);
  const Checkpoint ckpt = load_checkpoint((dir / "flow1.ckpt").string());
  CHECK(ckpt.config.epochs == 2);  // --set wins over the file
  CHECK(ckpt.config.seed == 77);
  CHECK(ckpt.config.batch_size == 4);  // untouched keys come from the file

  // The sidecar records the merged configuration.
  const ExperimentConfig echoed =
      parse_experiment_config((dir / "effective_config.ini").string());
  CHECK(echoed.flow1.epochs == 2);
  CHECK(echoed.flow1.seed == 77);
  CHECK(echoed.flow1.batch_size == 4);
}
