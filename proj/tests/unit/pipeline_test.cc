// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "core/checkpoint.h"
#include "core/config.h"
#include "core/dataset.h"
#include "core/error.h"
#include "core/metrics.h"
#include "core/pipeline.h"
#include "core/trainer.h"

namespace streamkd {
namespace {

namespace fs = std::filesystem;

SyntheticTask CleanTask() {
  SyntheticTask t;
  t.lexicon = SyntheticTask::DefaultLexicon();
  t.feature_dim = 8;
  t.seed = 3;
  return t;
}

TEST(Dataset, NoiseFreeFramesAreTemplateRows) {
  SyntheticTask t = CleanTask();
  t.min_frames_per_token = t.max_frames_per_token = 1;
  const DataSplit d = GenerateDataset(t, {5, 2, 2});
  const Array tpl = TaskTemplates(t, DefaultVocabulary());
  for (const Utterance& u : d.labeled) {
    const std::vector<int> tokens = DefaultVocabulary().Encode(u.label);
    size_t f = 0;
    for (size_t i = 0; i < tokens.size(); ++i) {
      if (i > 0 && tokens[i] == tokens[i - 1]) {
        for (size_t j = 0; j < 8; ++j) EXPECT_EQ(u.features(f, j), 0.0);
        ++f;
      }
      for (size_t j = 0; j < 8; ++j) EXPECT_EQ(u.features(f, j), tpl(tokens[i], j));
      ++f;
    }
    EXPECT_EQ(f, u.features.rows());
  }
}

TEST(Dataset, LengthFollowsGenerationTrace) {
  SyntheticTask t = CleanTask();
  t.noise = 0.5;
  t.edge_silence = 2;
  t.max_frames_per_token = 4;
  const DataSplit d = GenerateDataset(t, {6, 6, 6});
  for (const Utterance& u : Flatten(d)) {
    size_t sum = u.silence_frames;
    for (size_t r : u.repeats) sum += r;
    EXPECT_EQ(sum, u.features.rows());
  }
}

TEST(Dataset, SeededAndDisjoint) {
  SyntheticTask t = CleanTask();
  t.noise = 1.0;
  const DataSplit a = GenerateDataset(t, {4, 4, 4}), b = GenerateDataset(t, {4, 4, 4});
  EXPECT_EQ(SerializeDataset(Flatten(a)), SerializeDataset(Flatten(b)));
  std::set<std::string> ids;
  for (const Utterance& u : Flatten(a)) EXPECT_TRUE(ids.insert(u.id).second);
  for (const Utterance& u : a.unlabeled) {
    EXPECT_FALSE(u.has_label);
    EXPECT_TRUE(u.has_reference);
  }
}

TEST(Dataset, ContainerRoundTripAndIndex) {
  SyntheticTask t = CleanTask();
  t.noise = 0.3;
  const DataSplit d = GenerateDataset(t, {3, 2, 2});
  const std::string bytes = SerializeDataset(Flatten(d));
  EXPECT_EQ(ValidateDatasetIndex(bytes), 7u);
  const std::vector<Utterance> back = DeserializeDataset(bytes);
  ASSERT_EQ(back.size(), 7u);
  EXPECT_EQ(back[0].features, d.labeled[0].features);
  EXPECT_EQ(back[3].has_label, false);
  EXPECT_EQ(SerializeDataset(back), bytes);

  EXPECT_THROW(ValidateDatasetIndex(bytes.substr(0, bytes.size() - 1)), Error);
  std::string bad = bytes;
  bad[20] ^= 0x40;  // first index offset
  EXPECT_THROW(ValidateDatasetIndex(bad), Error);
  std::vector<Utterance> dup = Flatten(d);
  dup[1].id = dup[0].id;
  EXPECT_THROW(ValidateDatasetIndex(SerializeDataset(dup)), Error);
}

TEST(Config, RegistryMergeAndDigest) {
  Config c;
  const std::string d0 = c.Digest();
  EXPECT_EQ(c.Get("mask.variant"), "block");
  EXPECT_THROW(c.Set("no.such.key", "1"), Error);
  c.Merge("# comment\nseed = 7\n\nmodel.layers=2\n", "test.conf");
  EXPECT_EQ(c.GetInt("seed"), 7);
  EXPECT_EQ(c.GetSize("model.layers"), 2u);
  EXPECT_NE(c.Digest(), d0);
  try {
    c.Merge("seed=1\nbogus\n", "x.conf");
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("x.conf:2"), std::string::npos) << e.what();
  }
}

TEST(Config, StreamingDefaultIsTableRow) {
  const MaskSpec s = MaskFromConfig(Config());
  EXPECT_EQ(s, MaskSpec::Block(12, 18));
  EXPECT_EQ(Eil(s, 4), 480.0);
  EXPECT_EQ(DistillSpec::Default(EncoderFromConfig(Config()).layers).layers,
            (std::vector<size_t>{2, 3, 4}));
}

// Shared tiny setup for trainer tests.
struct Tiny {
  EncoderConfig enc;
  DataSplit data;
  TrainConfig train;
  Tiny() {
    enc.input_dim = 8;
    enc.layers = 2;
    enc.model_dim = 8;
    enc.heads = 2;
    enc.ffn_dim = 16;
    SyntheticTask t = CleanTask();
    t.noise = 0.3;
    t.min_words = 1;
    t.max_words = 2;
    data = GenerateDataset(t, {4, 4, 3});
    train.updates = 12;
    train.batch_size = 2;
    train.seed = 5;
  }
};

TEST(Trainer, ZeroUpdatesReturnsInit) {
  Tiny s;
  s.train.updates = 0;
  const ModelParams init = InitParams(s.enc, 1);
  const ModelParams out = FinetuneCtc(init, MaskSpec::Chunk(4), s.data.labeled, s.train).model;
  EXPECT_EQ(out.weights, init.weights);
  EXPECT_EQ(out.mask, MaskSpec::Chunk(4));
}

TEST(Trainer, LossDecreasesAndIsDeterministic) {
  Tiny s;
  s.train.updates = 60;
  const ModelParams init = InitParams(s.enc, 1);
  const StageOutcome a = FinetuneCtc(init, MaskSpec::Chunk(4), s.data.labeled, s.train, 1);
  const StageOutcome b = FinetuneCtc(init, MaskSpec::Chunk(4), s.data.labeled, s.train, 2);
  ASSERT_EQ(a.losses.size(), 60u);
  EXPECT_LT(a.losses.back(), a.losses.front());
  EXPECT_EQ(CheckpointDigest(a.model), CheckpointDigest(b.model));
  EXPECT_EQ(a.model.mask, MaskSpec::Chunk(4));
}

TEST(Trainer, UnsatisfiableTargetsAreSkipped) {
  Tiny s;
  std::vector<Utterance> data = s.data.labeled;
  data[0].label = std::string(200, 'a');
  const StageOutcome o = FinetuneCtc(InitParams(s.enc, 1), MaskSpec::Chunk(4), data, s.train);
  EXPECT_EQ(o.skipped, 1u);
  for (Utterance& u : data) u.label = std::string(200, 'b');
  try {
    FinetuneCtc(InitParams(s.enc, 1), MaskSpec::Chunk(4), data, s.train);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnsatisfiable);
  }
}

TEST(Trainer, GuidedTeacherWithZeroAlphaIsPlainFinetune) {
  Tiny s;
  const ModelParams p = InitParams(s.enc, 1);
  const ModelParams streaming =
      FinetuneCtc(p, MaskSpec::Block(3, 1), s.data.labeled, s.train).model;
  const StageOutcome t = TrainGuidedTeacher(p, streaming, s.data.labeled, 0.0, s.train);
  const StageOutcome n = FinetuneCtc(p, MaskSpec::Bidirectional(), s.data.labeled, s.train);
  EXPECT_EQ(CheckpointDigest(t.model), CheckpointDigest(n.model));
  const StageOutcome g = TrainGuidedTeacher(p, streaming, s.data.labeled, 0.01, s.train);
  EXPECT_NE(CheckpointDigest(g.model), CheckpointDigest(n.model));
}

TEST(Trainer, DistillStartsAtZeroForIdenticalModels) {
  Tiny s;
  const ModelParams p = InitParams(s.enc, 1);
  s.train.updates = 1;
  const StageOutcome o = Distill(p, p, p, MaskSpec::Bidirectional(), s.data.labeled,
                                 DistillSpec::Default(2), s.train);
  EXPECT_EQ(o.losses.at(0), 0.0);
}

TEST(Trainer, DistillCopiesHeadAndReducesLoss) {
  Tiny s;
  s.train.updates = 40;
  const ModelParams p = InitParams(s.enc, 1);
  const ModelParams teacher =
      FinetuneCtc(p, MaskSpec::Bidirectional(), s.data.labeled, s.train).model;
  const ModelParams head = InitParams(s.enc, 9);
  const StageOutcome o = Distill(p, teacher, head, MaskSpec::Block(3, 1),
                                 Flatten(s.data), DistillSpec::Default(2), s.train);
  EXPECT_LT(o.losses.back(), o.losses.front());
  for (const std::string& n : HeadParamNames()) EXPECT_EQ(o.model.weights.at(n), head.weights.at(n));
  EXPECT_EQ(o.model.mask, MaskSpec::Block(3, 1));
}

TEST(Trainer, PseudoLabelConservation) {
  Tiny s;
  const ModelParams p = InitParams(s.enc, 1);
  DecodeConfig d;
  d.beam_size = 4;
  EXPECT_TRUE(PseudoLabel(p, nullptr, {}, d).labeled.empty());
  const PseudoLabelOutcome o = PseudoLabel(p, nullptr, s.data.unlabeled, d);
  EXPECT_EQ(o.labeled.size() + o.dropped, s.data.unlabeled.size());
  for (const Utterance& u : o.labeled) EXPECT_TRUE(u.has_label);
}

// Pseudo-labels from a model trained on noise-free data are mostly right,
// and far better than those of the untrained model.
TEST(Trainer, PseudoLabelsTrackReferencesOnCleanData) {
  SyntheticTask t = CleanTask();
  t.min_words = 1;
  t.max_words = 2;
  const DataSplit d = GenerateDataset(t, {48, 16, 4});
  EncoderConfig enc;
  enc.input_dim = 8;
  enc.layers = 2;
  enc.model_dim = 16;
  enc.heads = 2;
  enc.ffn_dim = 32;
  TrainConfig train;
  train.updates = 1500;
  train.batch_size = 8;
  train.peak_lr = 5e-3;
  const ModelParams init = InitParams(enc, 2);
  const ModelParams n = FinetuneCtc(init, MaskSpec::Bidirectional(), d.labeled, train).model;
  DecodeConfig dc;
  dc.beam_size = 4;
  auto rate = [&](const ModelParams& m) {
    const PseudoLabelOutcome o = PseudoLabel(m, nullptr, d.unlabeled, dc);
    ErrorRate er;
    for (const Utterance& u : o.labeled) {
      const std::vector<int> ref = DefaultVocabulary().Encode(u.reference);
      const std::vector<int> hyp = DefaultVocabulary().Encode(u.label);
      er.AddTokens(ref, hyp);
    }
    return o.labeled.size() == d.unlabeled.size() ? er.Rate() : 1.0;
  };
  const double trained = rate(n);
  EXPECT_LT(trained, 0.2);
  EXPECT_LT(trained, 0.5 * rate(init));
}

Config TinyPipelineConfig() {
  Config c;
  c.Merge(
      "data.labeled=4\ndata.unlabeled=4\ndata.dev=3\ntask.feature_dim=8\n"
      "task.max_words=2\nmodel.layers=2\nmodel.dim=8\nmodel.ffn=16\n"
      "mask.chunk_frames=4\nmask.future_frames=2\ntrain.batch=2\n"
      "S.updates=4\nT.updates=4\nKD.updates=4\nN.updates=4\nST.updates=4\n"
      "lm.corpus=20\ndecode.beam=2\n",
      "tiny");
  return c;
}

class PipelineTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("skd_pipe_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST_F(PipelineTest, DryRunListsSixStages) {
  PipelineOptions o;
  o.dry_run = true;
  const PipelineResult r = RunTwoStage(TinyPipelineConfig(), dir_.string(), o);
  EXPECT_EQ(r.plan.size(), 6u);
  EXPECT_TRUE(r.reports.empty());
  EXPECT_FALSE(fs::exists(dir_ / "S.ckpt"));
}

TEST_F(PipelineTest, RunResumeAndMissingStage) {
  const Config c = TinyPipelineConfig();
  const PipelineResult first = RunTwoStage(c, dir_.string());
  ASSERT_EQ(first.reports.size(), 6u);
  const std::vector<std::string> names = {"S", "T", "KD", "N", "U'", "ST"};
  for (size_t i = 0; i < 6; ++i) EXPECT_EQ(first.reports[i].stage, names[i]);
  EXPECT_EQ(first.reports[0].table_model, "S4");
  EXPECT_EQ(first.reports[5].table_model, "S7");
  for (const char* f : {"summary.json", "S.report.json", "ST.loss.csv", "U_prime.skd", "lm.txt"})
    EXPECT_TRUE(fs::exists(dir_ / f)) << f;

  fs::remove(dir_ / "KD.ckpt");
  PipelineOptions resume;
  resume.resume = true;
  const PipelineResult second = RunTwoStage(c, dir_.string(), resume);
  EXPECT_EQ(second.rerun, (std::vector<std::string>{"KD", "N", "LM", "U'", "ST"}));
  for (size_t i = 0; i < 6; ++i) EXPECT_EQ(second.reports[i].digest, first.reports[i].digest);
  EXPECT_TRUE(second.reports[0].resumed);
  EXPECT_FALSE(second.reports[2].resumed);

  const StageReport kd = RunSingleStage(c, dir_.string(), Stage::kKD);
  EXPECT_EQ(kd.digest, first.reports[2].digest);

  fs::remove(dir_ / "T.ckpt");
  try {
    RunSingleStage(c, dir_.string(), Stage::kKD);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingStage);
    EXPECT_NE(std::string(e.what()).find("T"), std::string::npos);
  }
}

TEST(StageReport, JsonRoundTrip) {
  StageReport r;
  r.stage = "KD";
  r.table_model = "S5";
  r.dev_ter = 0.25;
  r.losses = {1.5, 0.75};
  r.lrs = {1e-3, 2e-3};
  r.metrics["frame_agreement_with_T"] = 0.5;
  const StageReport back = StageReport::FromJson(r.ToJson());
  EXPECT_EQ(back.ToJson(), r.ToJson());
  EXPECT_EQ(r.LossCsv().substr(0, 15), "update,lr,loss\n");
}

}  // namespace
}  // namespace streamkd
