// tests/test_cli.cpp

// Copyright 2026  fusebench contributors
//
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

// Exercises the built binary end to end via the FUSEBENCH_CLI environment
// variable set by ctest.

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "fusebench/io.hpp"
#include "oracles.hpp"

using namespace fusebench;

namespace {

std::string cli_path() {
  const char* env = std::getenv("FUSEBENCH_CLI");
  REQUIRE(env != nullptr);
  return env;
}

int run(const std::string& args) {
  std::string cmd = cli_path() + " " + args;
  int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

}  // namespace

TEST_CASE("eval reports zero errors on perfectly separated scores") {
  oracle::TempDir dir("cli_eval");
  write_file(dir / "s.tsv",
             "e1\tt1\tface\t9.0\ne1\tt2\tface\t-9.0\ne2\tt1\tface\t-8.0\n"
             "e2\tt2\tface\t8.5\n");
  write_file(dir / "k.tsv",
             "e1\tt1\ttarget\ne1\tt2\tnontarget\ne2\tt1\tnontarget\n"
             "e2\tt2\ttarget\n");
  std::string out = (dir / "out.txt").string();
  int code = run("eval --scores " + (dir / "s.tsv").string() + " --key " +
                 (dir / "k.tsv").string() + " --p-tar 0.05 > " + out);
  CHECK(code == 0);
  std::string text = read_file(out);
  CHECK(text.find("face\t0\t0\t") != std::string::npos);
}

TEST_CASE("unknown subcommands and missing flags exit with code 2") {
  oracle::TempDir dir("cli_usage");
  std::string sink = " > /dev/null 2>&1";
  CHECK(run("frobnicate" + sink) == 2);
  CHECK(run("eval" + sink) == 2);                  // missing required flags
  CHECK(run("eval --scores x" + sink) == 2);       // still missing --key
  CHECK(run(sink) == 2);                           // no subcommand at all
}

TEST_CASE("data errors exit with code 1 and name the line") {
  oracle::TempDir dir("cli_data_err");
  write_file(dir / "s.tsv", "e1\tt1\tface\tnot_a_number\n");
  write_file(dir / "k.tsv", "e1\tt1\ttarget\n");
  std::string err = (dir / "err.txt").string();
  int code = run("eval --scores " + (dir / "s.tsv").string() + " --key " +
                 (dir / "k.tsv").string() + " 2> " + err + " > /dev/null");
  CHECK(code == 1);
  CHECK(read_file(err).find(":1:") != std::string::npos);
}

TEST_CASE("det writes the sweep as CSV") {
  oracle::TempDir dir("cli_det");
  write_file(dir / "s.tsv", "e1\tt1\tface\t1.0\ne1\tt2\tface\t0.0\n");
  write_file(dir / "k.tsv", "e1\tt1\ttarget\ne1\tt2\tnontarget\n");
  std::string out = (dir / "det.csv").string();
  int code = run("det --scores " + (dir / "s.tsv").string() + " --key " +
                 (dir / "k.tsv").string() + " --out " + out +
                 " 2> /dev/null");
  CHECK(code == 0);
  std::string text = read_file(out);
  CHECK(text.rfind("threshold,p_fn,p_fp,cost\n", 0) == 0);
  CHECK(text.find("\n-1,0,1,19\n") != std::string::npos);
  CHECK(text.find("\n0.5,0,0,0\n") != std::string::npos);
  CHECK(text.find("\n2,1,0,1\n") != std::string::npos);
}

TEST_CASE("bench runs are byte-identical under a fixed seed") {
  oracle::TempDir dir("cli_bench");
  write_file(dir / "cfg",
             "n_identities = 40\nsamples_per_identity = 12\ntrials = 500\n"
             "qnet_epochs = 15\ndim_speaker = 32\ndim_face = 32\n");
  std::string base = "bench --config " + (dir / "cfg").string() +
                     " --seed 7 2> /dev/null > /dev/null";
  CHECK(run(base + " --out-dir " + (dir / "a").string()) == 0);
  CHECK(run(base + " --out-dir " + (dir / "b").string()) == 0);
  CHECK(read_file(dir / "a" / "report.tsv") ==
        read_file(dir / "b" / "report.tsv"));
  CHECK(read_file(dir / "a" / "summary.json") ==
        read_file(dir / "b" / "summary.json"));
  CHECK(read_file(dir / "a" / "report.tsv")
            .starts_with("#variant\tdev_eer"));
}

TEST_CASE("the full pipeline composes through files") {
  oracle::TempDir dir("cli_pipeline");
  std::string d = dir.path().string();
  std::string q = " 2> /dev/null";

  CHECK(run("synth --n-identities 40 --samples-per-identity 12 "
            "--dim-speaker 32 --dim-face 32 --trials 400 --seed 3 "
            "--out-dir " + d + q) == 0);

  CHECK(run("train-quality --embeddings " + d + "/train_speaker.tsv "
            "--epochs 15 --seed 1 --out " + d + "/qnet_speaker.tsv" + q) ==
        0);

  CHECK(run("predict-quality --params " + d + "/qnet_speaker.tsv "
            "--embeddings " + d + "/train_speaker.tsv --out " + d +
            "/q.tsv" + q) == 0);
  {
    std::ifstream in(dir / "q.tsv");
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 16 * 12);  // qtrain pool: 40% of 40 identities
  }

  CHECK(run("score --enroll " + d + "/dev/enroll_speaker.tsv --test " + d +
            "/dev/test_speaker.tsv --trials " + d + "/dev/trials.tsv "
            "--use-quality " + d + "/qnet_speaker.tsv --out " + d +
            "/dev_scores.tsv" + q) == 0);

  CHECK(run("norm --scores " + d + "/dev_scores.tsv --enroll " + d +
            "/dev/enroll_speaker.tsv --test " + d + "/dev/test_speaker.tsv "
            "--cohort " + d + "/cohort_speaker.tsv --top-k 50 --out " + d +
            "/dev_normed.tsv" + q) == 0);

  CHECK(run("calibrate --scores " + d + "/dev_normed.tsv --key " + d +
            "/dev/key.tsv --out-params " + d + "/cal.tsv --apply " + d +
            "/dev_cal.tsv" + q) == 0);

  CHECK(run("fuse --scores " + d + "/dev_cal.tsv --key " + d +
            "/dev/key.tsv --rule sum --out " + d + "/dev_sum.tsv" + q) == 0);

  CHECK(run("fuse --scores " + d + "/dev_cal.tsv --key " + d +
            "/dev/key.tsv --use-q all --out-params " + d +
            "/fusion.tsv --out " + d + "/dev_fused.tsv" + q) == 0);

  CHECK(run("eval --scores " + d + "/dev_fused.tsv --key " + d +
            "/dev/key.tsv > " + d + "/metrics.tsv" + q) == 0);
  std::string metrics = read_file(dir / "metrics.tsv");
  CHECK(metrics.find("fused\t") != std::string::npos);

  // Applying saved fusion params reproduces the fused scores.
  CHECK(run("fuse --scores " + d + "/dev_cal.tsv --params " + d +
            "/fusion.tsv --out " + d + "/dev_fused2.tsv" + q) == 0);
  CHECK(read_file(dir / "dev_fused.tsv") == read_file(dir / "dev_fused2.tsv"));
}

TEST_CASE("trial scoring is independent of the thread count") {
  oracle::TempDir dir("cli_threads");
  std::string d = dir.path().string();
  std::string q = " 2> /dev/null";
  CHECK(run("synth --n-identities 40 --samples-per-identity 12 "
            "--dim-speaker 32 --dim-face 32 --trials 400 --seed 5 "
            "--out-dir " + d + q) == 0);
  std::string common = "score --enroll " + d + "/dev/enroll_face.tsv "
                       "--test " + d + "/dev/test_face.tsv --trials " + d +
                       "/dev/trials.tsv";
  CHECK(run(common + " --threads 1 --out " + d + "/t1.tsv" + q) == 0);
  CHECK(run(common + " --threads 8 --out " + d + "/t8.tsv" + q) == 0);
  CHECK(read_file(dir / "t1.tsv") == read_file(dir / "t8.tsv"));
}

TEST_CASE("FUSEBENCH_SEED is the fallback seed") {
  oracle::TempDir dir("cli_env_seed");
  std::string d = dir.path().string();
  std::string q = " 2> /dev/null > /dev/null";
  std::string cfg_args = " --n-identities 20 --samples-per-identity 8 "
                         "--dim-speaker 8 --dim-face 8 --trials 50";
  CHECK(run("synth" + cfg_args + " --out-dir " + d + "/env_a" +
            " --seed 42" + q) == 0);
  int code = std::system(("FUSEBENCH_SEED=42 " + cli_path() + " synth" +
                          cfg_args + " --out-dir " + d + "/env_b" + q)
                             .c_str());
  CHECK(WEXITSTATUS(code) == 0);
  CHECK(read_file(dir / "env_a" / "train_speaker.tsv") ==
        read_file(dir / "env_b" / "train_speaker.tsv"));
}
