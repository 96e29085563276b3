// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

// Runs the command-line tool as a subprocess.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("skd_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "tiny.conf")
        << "data.labeled=4\ndata.unlabeled=3\ndata.dev=2\ntask.feature_dim=8\n"
           "task.max_words=2\nmodel.layers=2\nmodel.dim=8\nmodel.ffn=16\n"
           "mask.chunk_frames=4\nmask.future_frames=2\ntrain.batch=2\nlm.corpus=10\n";
  }
  void TearDown() override { fs::remove_all(dir_); }

  Result Run(const std::string& args) {
    const fs::path err = dir_ / "stderr.txt";
    const std::string cmd = "STREAMKD_CONFIG_DIR= " STREAMKD_CLI_PATH " " + args + " 2>" +
                            err.string();
    Result r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    size_t n;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = Slurp(err);
    return r;
  }

  std::string P(const std::string& name) const { return (dir_ / name).string(); }
  std::string Tiny() const { return " --config " + P("tiny.conf"); }

  fs::path dir_;
};

TEST_F(CliTest, LatencyBlock) {
  const Result r = Run("latency --variant block --chunk-ms 240 --future-ms 360 --layers 4 --out " +
                       P("lat.tsv"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("EIL 480 ms"), std::string::npos) << r.out;
  EXPECT_EQ(Slurp(dir_ / "lat.tsv"), "block\t240\t360\t0\t4\t480\n");
  EXPECT_NE(r.err.find("config digest"), std::string::npos);
}

TEST_F(CliTest, LatencyOtherVariants) {
  Result r = Run("latency --variant time_restricted --right-frames 2 --layers 12");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("EIL 480 ms"), std::string::npos) << r.out;
  r = Run("latency --variant chunk --chunk-ms 960 --layers 4");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("EIL 480 ms"), std::string::npos) << r.out;
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(Run("latency --no-such-flag").code, 1);
  EXPECT_EQ(Run("latency --variant chunk --chunk-ms 0").code, 1);
  EXPECT_EQ(Run("latency --set bogus.key=1").code, 1);
  const Result io = Run("decode --model " + P("missing.ckpt") + " --data " + P("missing.skd"));
  EXPECT_EQ(io.code, 2);
  EXPECT_FALSE(io.err.empty());
  const Result stage = Run("pipeline" + Tiny() + " --out " + P("empty") + " --stage KD");
  EXPECT_EQ(stage.code, 2);
  EXPECT_NE(stage.err.find("missing"), std::string::npos) << stage.err;
}

TEST_F(CliTest, MaskDump) {
  const Result r = Run("mask-dump --variant chunk --chunk-frames 2 --frames 3");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("xx.\nxx.\nxxx\n"), std::string::npos) << r.out;
}

TEST_F(CliTest, TrainDecodeScore) {
  ASSERT_EQ(Run("gen-data" + Tiny() + " --out " + P("d.skd")).code, 0);
  const Result ft = Run("finetune" + Tiny() + " --data " + P("d.skd") + " --updates 3 --out " +
                        P("s.ckpt") + " --report " + P("s.json"));
  ASSERT_EQ(ft.code, 0) << ft.err;
  EXPECT_NE(ft.out.find("digest"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "s.json"));

  const std::string base = "decode" + Tiny() + " --model " + P("s.ckpt") + " --data " + P("d.skd");
  ASSERT_EQ(Run(base + " --beam 1 --out " + P("beam.tsv")).code, 0);
  ASSERT_EQ(Run(base + " --greedy --out " + P("greedy.tsv")).code, 0);
  EXPECT_EQ(Slurp(dir_ / "beam.tsv"), Slurp(dir_ / "greedy.tsv"));
  EXPECT_FALSE(Slurp(dir_ / "beam.tsv").empty());

  std::ofstream(dir_ / "ref.txt") << "u1\tthe cat\nu2\tthe dog\n";
  std::ofstream(dir_ / "hyp.txt") << "u2\tthe dog\nu1\tthe hat\n";
  const Result sc = Run("score --ref " + P("ref.txt") + " --hyp " + P("hyp.txt") + " --out " +
                        P("score.json"));
  ASSERT_EQ(sc.code, 0) << sc.err;
  EXPECT_NE(Slurp(dir_ / "score.json").find("\"wer\""), std::string::npos);
  EXPECT_NE(sc.out.find("25"), std::string::npos) << sc.out;

  const Result post = Run("posteriors" + Tiny() + " --model " + P("s.ckpt") + " --data " +
                          P("d.skd") + " --id D-00000 --out " + P("post.csv"));
  ASSERT_EQ(post.code, 0) << post.err;
  EXPECT_EQ(Slurp(dir_ / "post.csv").rfind("frame,", 0), 0u);
}

TEST_F(CliTest, SeedFlagChangesDigest) {
  const Result a = Run("latency" + Tiny());
  const Result b = Run("latency" + Tiny() + " --seed 9");
  ASSERT_EQ(a.code, 0);
  ASSERT_EQ(b.code, 0);
  EXPECT_NE(a.err, b.err);
}

TEST_F(CliTest, Selfcheck) {
  const Result r = Run("selfcheck");
  EXPECT_EQ(r.code, 0) << r.out << r.err;
}

}  // namespace
