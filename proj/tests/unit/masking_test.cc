// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "core/error.h"
#include "core/masking.h"

namespace streamkd {
namespace {

// allowed(t, j) from the variant definitions, over source frames.
bool OracleAllowed(const MaskSpec& s, size_t t, size_t j) {
  switch (s.variant) {
    case Variant::kBidirectional:
      return true;
    case Variant::kTimeRestricted: {
      const bool left = s.left_limit < 0 || j + s.left_limit >= t;
      return left && j <= t + s.right_frames;
    }
    case Variant::kChunk: {
      const size_t c = s.chunk_frames;
      const bool left = s.left_limit < 0 || j / c + s.left_limit >= t / c;
      return left && j / c <= t / c;
    }
    default:
      return false;
  }
}

// latest(t) by composing the one-layer relation `layers` times.
std::vector<size_t> OracleLatest(const MaskSpec& s, size_t layers, size_t n) {
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n));
  for (size_t t = 0; t < n; ++t) reach[t][t] = true;
  for (size_t l = 0; l < layers; ++l) {
    std::vector<std::vector<bool>> next(n, std::vector<bool>(n));
    for (size_t t = 0; t < n; ++t)
      for (size_t m = 0; m < n; ++m)
        if (OracleAllowed(s, t, m))
          for (size_t j = 0; j < n; ++j) next[t][j] = next[t][j] || reach[m][j];
    reach = next;
  }
  std::vector<size_t> latest(n);
  for (size_t t = 0; t < n; ++t)
    for (size_t j = 0; j < n; ++j)
      if (reach[t][j]) latest[t] = j;
  return latest;
}

TEST(BuildMask, TimeRestrictedFigureExample) {
  const MaskSpec s = MaskSpec::TimeRestricted(1);
  const AttentionMask m = BuildMask(s, 6);
  // x3 (index 2) sees up to x4 (index 3), never beyond.
  EXPECT_TRUE(m(2, 0));
  EXPECT_TRUE(m(2, 3));
  EXPECT_FALSE(m(2, 4));
  EXPECT_EQ(ReceptionField(s, 2, 6)[2].latest, 4u);
}

TEST(BuildMask, DegenerateChunkIsFull) {
  const AttentionMask m = BuildMask(MaskSpec::Chunk(8), 6);
  EXPECT_EQ(m, AttentionMask::Full(6));
}

TEST(BuildMask, BlockFigureExample) {
  const MaskSpec s = MaskSpec::Block(2, 1);
  const HardCopyPlan plan = LayoutFor(s, 6);
  const AttentionMask m = BuildMask(s, 6);
  ASSERT_EQ(m.queries, plan.augmented_frames);
  const size_t q = plan.output_positions[2];
  bool sees_own_next = false, sees_copy_of_4 = false;
  for (size_t j = 0; j < m.keys; ++j) {
    if (!m(q, j)) continue;
    const size_t src = plan.index_map[j];
    EXPECT_NE(src, 5u);
    if (src == 3 && !plan.is_copy[j]) sees_own_next = true;
    if (src == 4) {
      EXPECT_TRUE(plan.is_copy[j]);
      sees_copy_of_4 = true;
    }
  }
  EXPECT_TRUE(sees_own_next);
  EXPECT_TRUE(sees_copy_of_4);
}

TEST(BuildMask, EveryRowNonEmpty) {
  for (const MaskSpec& s : {MaskSpec::TimeRestricted(0), MaskSpec::Chunk(3),
                            MaskSpec::Block(3, 2), MaskSpec::Bidirectional()}) {
    for (size_t n : {1u, 2u, 7u}) {
      const AttentionMask m = BuildMask(s, n);
      for (size_t t = 0; t < m.queries; ++t) {
        bool any = false;
        for (size_t j = 0; j < m.keys; ++j) any = any || m(t, j);
        EXPECT_TRUE(any);
      }
    }
  }
}

TEST(BuildMask, MatchesDefinitionWithLeftLimit) {
  for (MaskSpec s : {MaskSpec::TimeRestricted(2), MaskSpec::Chunk(3)}) {
    for (int left : {-1, 0, 1, 2}) {
      s.left_limit = left;
      const AttentionMask m = BuildMask(s, 9);
      for (size_t t = 0; t < 9; ++t)
        for (size_t j = 0; j < 9; ++j) EXPECT_EQ(m(t, j), OracleAllowed(s, t, j));
    }
  }
}

TEST(BuildMask, RejectsIrrelevantFields) {
  MaskSpec s = MaskSpec::Chunk(4);
  s.right_frames = 2;
  EXPECT_THROW(BuildMask(s, 5), Error);
  s = MaskSpec::TimeRestricted(1);
  s.future_frames = 1;
  EXPECT_THROW(s.Validate(), Error);
  EXPECT_THROW(MaskSpec::Chunk(0).Validate(), Error);
}

TEST(PlanHardCopy, NoFutureDegenerates) {
  const HardCopyPlan p = PlanHardCopy(7, 3, 0);
  EXPECT_EQ(p.augmented_frames, 7u);
  for (size_t i = 0; i < 7; ++i) {
    EXPECT_EQ(p.index_map[i], i);
    EXPECT_FALSE(p.is_copy[i]);
    EXPECT_EQ(p.output_positions[i], i);
  }
}

TEST(PlanHardCopy, SixFramesChunkTwoFutureOne) {
  const HardCopyPlan p = PlanHardCopy(6, 2, 1);
  EXPECT_EQ(p.augmented_frames, 8u);
  EXPECT_EQ(p.index_map, (std::vector<size_t>{0, 1, 2, 2, 3, 4, 4, 5}));
  EXPECT_EQ(p.is_copy, (std::vector<uint8_t>{0, 0, 1, 0, 0, 1, 0, 0}));
  EXPECT_EQ(p.output_positions, (std::vector<size_t>{0, 1, 3, 4, 6, 7}));
}

TEST(PlanHardCopy, TruncatedAtSequenceEnd) {
  // Chunks {0,1} {2,3} {4}: chunk 0 copies 2..4, chunk 1 copies only 4.
  const HardCopyPlan p = PlanHardCopy(5, 2, 3);
  EXPECT_EQ(p.augmented_frames, 5u + 3u + 1u);
  EXPECT_EQ(p.index_map, (std::vector<size_t>{0, 1, 2, 3, 4, 2, 3, 4, 4}));
  for (size_t i = 0; i < p.augmented_frames; ++i) {
    if (p.is_copy[i]) {
      const size_t chunk_end = (p.chunk_id[i] + 1) * 2 - 1;
      EXPECT_GT(p.index_map[i], chunk_end);
      EXPECT_LE(p.index_map[i], chunk_end + 3);
    }
  }
}

TEST(ReceptionField, TimeRestrictedTwelveLayers) {
  const auto rf = ReceptionField(MaskSpec::TimeRestricted(2), 12, 40);
  for (size_t t = 0; t < 40; ++t) EXPECT_EQ(rf[t].latest, std::min<size_t>(t + 24, 39));
}

TEST(ReceptionField, MatchesBooleanComposition) {
  for (const MaskSpec& s : {MaskSpec::TimeRestricted(1), MaskSpec::TimeRestricted(3),
                            MaskSpec::Chunk(1), MaskSpec::Chunk(4)}) {
    for (size_t layers = 1; layers <= 4; ++layers) {
      const auto rf = ReceptionField(s, layers, 11);
      const auto want = OracleLatest(s, layers, 11);
      for (size_t t = 0; t < 11; ++t) EXPECT_EQ(rf[t].latest, want[t]);
    }
  }
}

TEST(ReceptionField, BlockIsLayerIndependent) {
  for (int c : {1, 2, 4}) {
    for (int f : {0, 1, 3}) {
      for (size_t layers : {1u, 3u, 6u}) {
        const auto rf = ReceptionField(MaskSpec::Block(c, f), layers, 13);
        for (size_t t = 0; t < 13; ++t) {
          const size_t end = (t / c + 1) * c - 1;
          EXPECT_EQ(rf[t].latest, std::min<size_t>(end + f, 12)) << c << " " << f;
          EXPECT_EQ(rf[t].earliest, 0u);
        }
      }
    }
  }
}

TEST(Eil, TableConfigurations) {
  EXPECT_EQ(Eil(MaskSpec::TimeRestricted(2), 12), 480.0);
  EXPECT_EQ(Eil(MaskSpec::Chunk(48), 12), 480.0);
  EXPECT_EQ(Eil(MaskSpec::Block(24, 12), 12), 480.0);
  EXPECT_EQ(Eil(MaskSpec::Block(12, 18), 12), 480.0);
  EXPECT_EQ(Eil(MaskSpec::TimeRestricted(0), 12), 0.0);
  EXPECT_TRUE(std::isinf(Eil(MaskSpec::Bidirectional(), 4)));
}

TEST(Eil, ReportConsistentWithReceptionField) {
  const LatencyReport r = AnalyzeLatency(MaskSpec::Block(12, 18), 4);
  EXPECT_EQ(r.eil_ms, 480.0);
  EXPECT_EQ(r.max_lookahead, 29u);
  EXPECT_DOUBLE_EQ(r.per_frame_lookahead, 5.5 + 18);
  ASSERT_EQ(r.per_layer_lookahead.size(), 4u);
  EXPECT_NE(FormatLatencyTable(r).find("EIL 480 ms"), std::string::npos);
  EXPECT_EQ(FormatLatencyLine(r), "block\t240\t360\t0\t4\t480\n");
}

TEST(MaskSpecText, RoundTrip) {
  MaskSpec s = MaskSpec::Chunk(5);
  s.left_limit = 2;
  s.frame_ms = 10;
  EXPECT_EQ(ParseMaskSpec(FormatMaskSpec(s)), s);
  EXPECT_EQ(ParseVariant("time_restricted"), Variant::kTimeRestricted);
  EXPECT_THROW(ParseVariant("sliding"), Error);
}

TEST(RenderMask, Grid) {
  EXPECT_EQ(RenderMask(BuildMask(MaskSpec::Chunk(2), 3)), "xx.\nxx.\nxxx\n");
}

}  // namespace
}  // namespace streamkd
