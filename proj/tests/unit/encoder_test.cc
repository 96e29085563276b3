// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "core/checkpoint.h"
#include "core/encoder.h"
#include "core/error.h"
#include "core/gradcheck.h"
#include "core/ops.h"
#include "support.h"

namespace streamkd {
namespace {

EncoderConfig Toy(size_t layers = 2, size_t dim = 8) {
  EncoderConfig c;
  c.input_dim = 4;
  c.layers = layers;
  c.model_dim = dim;
  c.heads = 2;
  c.ffn_dim = 2 * dim;
  c.vocab_size = 5;
  return c;
}

TEST(Encoder, RejectsEmptyInputAndBadShape) {
  const ModelParams p = InitParams(Toy(), 1);
  EXPECT_THROW(Forward(p, Array::Matrix(0, 4), MaskSpec::Bidirectional()), Error);
  EXPECT_THROW(Forward(p, Array::Matrix(3, 5), MaskSpec::Bidirectional()), Error);
  EncoderConfig bad = Toy();
  bad.heads = 3;
  EXPECT_THROW(bad.Validate(), Error);
}

TEST(Encoder, PosteriorRowsLogNormalize) {
  Rng rng(2);
  const ModelParams p = InitParams(Toy(), 2);
  const ForwardTrace tr = Forward(p, testing::RandomMatrix(rng, 9, 4), MaskSpec::Bidirectional());
  for (size_t t = 0; t < 9; ++t) {
    double s = 0.0;
    for (size_t c = 0; c < 5; ++c) s += std::exp(tr.log_probs(t, c));
    EXPECT_NEAR(std::log(s), 0.0, 1e-9);
  }
  ASSERT_EQ(tr.hidden.size(), 2u);
  for (const Array& h : tr.hidden) EXPECT_EQ(h.shape(), (std::vector<size_t>{9, 8}));
}

TEST(Encoder, HiddenShapesIndependentOfVariant) {
  Rng rng(3);
  const ModelParams p = InitParams(Toy(3), 3);
  const Array x = testing::RandomMatrix(rng, 10, 4);
  for (const MaskSpec& s : {MaskSpec::Block(3, 2), MaskSpec::Chunk(4), MaskSpec::TimeRestricted(1)}) {
    const ForwardTrace tr = Forward(p, x, s);
    ASSERT_EQ(tr.hidden.size(), 3u);
    for (const Array& h : tr.hidden) EXPECT_EQ(h.shape(), (std::vector<size_t>{10, 8}));
  }
}

TEST(Encoder, DegenerateStreamingEqualsBidirectional) {
  Rng rng(4);
  for (FrontendNorm norm : {FrontendNorm::kGroup, FrontendNorm::kBatch}) {
    EncoderConfig c = Toy(3);
    c.norm = norm;
    const ModelParams p = InitParams(c, 4);
    const Array x = testing::RandomMatrix(rng, 7, 4);
    const Array full = Forward(p, x, MaskSpec::Bidirectional()).log_probs;
    EXPECT_EQ(Forward(p, x, MaskSpec::Chunk(7)).log_probs, full);
    EXPECT_EQ(Forward(p, x, MaskSpec::Chunk(20)).log_probs, full);
    EXPECT_EQ(Forward(p, x, MaskSpec::Block(7, 0)).log_probs, full);
    EXPECT_EQ(Forward(p, x, MaskSpec::Block(9, 0)).log_probs, full);
  }
}

TEST(Encoder, SingleFrameAttentionIgnoresKeys) {
  const ModelParams p = InitParams(Toy(1), 5);
  Rng rng(5);
  const Array x = testing::RandomMatrix(rng, 1, 4);
  EXPECT_EQ(Forward(p, x, MaskSpec::Bidirectional()).log_probs,
            Forward(p, x, MaskSpec::Chunk(1)).log_probs);
}

TEST(Encoder, BlockPerturbationBoundary) {
  Rng rng(6);
  const ModelParams p = InitParams(Toy(3), 6);
  const MaskSpec s = MaskSpec::Block(4, 2);
  const Array x = testing::RandomMatrix(rng, 14, 4);
  const Array base = Forward(p, x, s).log_probs;
  for (size_t t = 0; t < 8; ++t) {
    const size_t end = (t / 4 + 1) * 4 - 1;
    Array far = x, edge = x;
    far(end + 3, 1) += 1.0;
    edge(end + 2, 1) += 1.0;
    const Array a = Forward(p, far, s).log_probs, b = Forward(p, edge, s).log_probs;
    bool same_far = true, same_edge = true;
    for (size_t c = 0; c < 5; ++c) {
      same_far = same_far && a(t, c) == base(t, c);
      same_edge = same_edge && b(t, c) == base(t, c);
    }
    EXPECT_TRUE(same_far) << t;
    EXPECT_FALSE(same_edge) << t;
  }
}

TEST(Encoder, SymmetricFrontendAddsLookahead) {
  EncoderConfig c = Toy(2);
  c.conv = ConvMode::kSymmetric;
  c.kernel = 5;
  EXPECT_EQ(FrontendLookahead(c), 2u);
  c.kernel = 4;
  EXPECT_EQ(FrontendLookahead(c), 1u);
  c.conv = ConvMode::kCausal;
  EXPECT_EQ(FrontendLookahead(c), 0u);

  c.conv = ConvMode::kSymmetric;
  c.kernel = 3;
  const auto rf = EncoderReceptionField(c, MaskSpec::Chunk(3), 9);
  EXPECT_EQ(rf[0].latest, 3u);
  EXPECT_EQ(rf[8].latest, 8u);
}

TEST(Encoder, InitIsSeeded) {
  const EncoderConfig c = Toy();
  EXPECT_TRUE(InitParams(c, 7) == InitParams(c, 7));
  EXPECT_FALSE(InitParams(c, 7) == InitParams(c, 8));
}

// Full-model gradient of a CTC-style loss on a 2-layer, dim-16 model.
TEST(Encoder, GradientMatchesFiniteDifferences) {
  for (FrontendNorm norm : {FrontendNorm::kGroup, FrontendNorm::kBatch}) {
    EncoderConfig c = Toy(2, 16);
    c.norm = norm;
    const ModelParams base = InitParams(c, 9);
    Rng rng(9);
    const Array x = testing::RandomMatrix(rng, 6, 4);
    const Array w = testing::RandomMatrix(rng, 6, 5);
    const Array hw = testing::RandomMatrix(rng, 6, 16);
    std::vector<std::string> names;
    std::vector<Array> inputs{x};
    for (const auto& [n, a] : base.weights) {
      names.push_back(n);
      inputs.push_back(a);
    }
    ScalarFn fn = [&](const std::vector<Array>& in, std::vector<Array>* grads) {
      ModelParams p = base;
      for (size_t i = 0; i < names.size(); ++i) p.weights[names[i]] = in[i + 1];
      ForwardCache cache;
      const ForwardTrace tr = Forward(p, in[0], MaskSpec::Block(2, 1), {true, 0, {}}, &cache);
      double loss = 0.0;
      for (size_t i = 0; i < w.size(); ++i) loss += w[i] * tr.log_probs[i];
      for (size_t i = 0; i < hw.size(); ++i) loss += hw[i] * tr.hidden[0][i];
      if (grads) {
        ParamMap g = ZeroLike(p);
        std::vector<Array> dh = {hw, Array()};
        Array dx;
        Backward(p, cache, OutputGrads{&w, &dh}, g, &dx);
        grads->assign(1, dx);
        for (const std::string& n : names) grads->push_back(g.at(n));
      }
      return loss;
    };
    GradCheckOptions opt;
    opt.max_entries_per_input = 8;
    opt.seed = 3;
    EXPECT_LE(CheckGradient(fn, inputs, opt).max_rel_error, 1e-5);
  }
}

TEST(Checkpoint, RoundTripAndErrors) {
  EncoderConfig c = Toy();
  c.norm = FrontendNorm::kBatch;
  ModelParams p = InitParams(c, 10);
  p.mask = MaskSpec::Block(3, 1);
  const std::string bytes = SerializeCheckpoint(p);
  EXPECT_TRUE(DeserializeCheckpoint(bytes) == p);

  const auto path = std::filesystem::temp_directory_path() / "skd_ckpt_test.ckpt";
  SaveCheckpoint(p, path.string());
  EXPECT_TRUE(LoadCheckpoint(path.string()) == p);
  EXPECT_EQ(CheckpointDigest(LoadCheckpoint(path.string())), CheckpointDigest(p));
  std::filesystem::remove(path);

  EncoderConfig other = c;
  other.vocab_size = 7;
  try {
    DeserializeCheckpoint(bytes, &other);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfigMismatch);
  }
  try {
    DeserializeCheckpoint(bytes.substr(0, bytes.size() - 3));
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFormat);
  }
  std::string flipped = bytes;
  flipped[3] = 'X';
  EXPECT_THROW(DeserializeCheckpoint(flipped), Error);
}

}  // namespace
}  // namespace streamkd
