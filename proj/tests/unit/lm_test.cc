// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "core/error.h"
#include "core/ngram.h"
#include "core/rng.h"

namespace streamkd {
namespace {

using Corpus = std::vector<std::vector<std::string>>;

Corpus RandomCorpus(Rng& rng, size_t n, const std::vector<std::string>& symbols) {
  Corpus c(n);
  for (auto& s : c)
    for (int k = rng.Int(0, 8); k > 0; --k) s.push_back(symbols[rng.Int(0, symbols.size() - 1)]);
  return c;
}

TEST(Ngram, AddOneUnigram) {
  NgramOptions o;
  o.order = 1;
  o.smoothing = 1.0;
  o.boundaries = false;
  const NgramModel m = NgramModel::Train({{"a", "a"}}, {"a", "b"}, o);
  EXPECT_DOUBLE_EQ(std::exp(m.LogProb({}, m.Index("a"))), 0.75);
  EXPECT_DOUBLE_EQ(std::exp(m.LogProb({}, m.Index("b"))), 0.25);
  const std::vector<std::string> aa = {"a", "a"};
  EXPECT_EQ(m.Score(aa), 2 * std::log(0.75));
  EXPECT_THROW(m.Index("c"), Error);
}

TEST(Ngram, UnseenContextBacksOff) {
  NgramOptions o;
  o.order = 2;
  o.boundaries = false;
  const NgramModel m = NgramModel::Train({{"a", "a", "b"}}, {"<unk>", "a", "b", "c"}, o);
  const std::vector<int> seen = {m.Index("a")}, unseen = {m.Index("c")};
  EXPECT_NE(m.LogProb(seen, m.Index("b")), m.LogProb({}, m.Index("b")));
  for (int t = 0; t < 4; ++t) EXPECT_EQ(m.LogProb(unseen, t), m.LogProb({}, t));
}

TEST(Ngram, EveryContextNormalizes) {
  Rng rng(3);
  const std::vector<std::string> v = {"<unk>", "a", "b", "c", "|"};
  for (int order = 1; order <= 4; ++order) {
    for (bool boundaries : {false, true}) {
      NgramOptions o{order, 0.3, boundaries};
      const NgramModel m = NgramModel::Train(RandomCorpus(rng, 30, {"a", "b", "c", "|"}), v, o);
      for (int n = 1; n <= order; ++n) {
        for (const auto& [ctx, lp] : m.Table(n)) {
          double s = 0.0;
          for (double x : lp) s += std::exp(x);
          EXPECT_NEAR(s, 1.0, 1e-9);
        }
      }
    }
  }
}

TEST(Ngram, ScoreIsChainRulePlusEnd) {
  Rng rng(4);
  const NgramModel m =
      NgramModel::Train(RandomCorpus(rng, 40, {"a", "b", "c"}), {"<unk>", "a", "b", "c"}, {});
  EXPECT_EQ(m.Score(std::vector<std::string>{}), m.EndLogProb({}));
  const std::vector<std::string> s = {"b", "a", "c", "c", "a"};
  double want = 0.0;
  std::vector<int> h;
  for (const std::string& x : s) {
    want += m.LogProb(h, m.Index(x));
    h.push_back(m.Index(x));
  }
  EXPECT_EQ(m.Score(s), want + m.EndLogProb(h));
}

TEST(Ngram, OrderOneScoreIsSumOfUnigrams) {
  Rng rng(5);
  NgramOptions o{1, 0.5, true};
  const NgramModel m = NgramModel::Train(RandomCorpus(rng, 20, {"a", "b"}), {"<unk>", "a", "b"}, o);
  const std::vector<std::string> s = {"a", "b", "b"};
  const auto& uni = m.Table(1).at({});
  EXPECT_EQ(m.Score(s), uni[m.Index("a")] + uni[m.Index("b")] + uni[m.Index("b")] +
                            uni[m.end_index()]);
}

TEST(Ngram, OutOfVocabularyMapsToUnknown) {
  const NgramModel m = NgramModel::Train({{"a", "z"}}, {"<unk>", "a"}, {});
  EXPECT_EQ(m.Index("z"), m.Index("<unk>"));
  EXPECT_EQ(m.Index("</s>"), m.Index("<unk>"));
}

TEST(Ngram, TrainingErrors) {
  EXPECT_THROW(NgramModel::Train({}, {"<unk>"}, {}), Error);
  EXPECT_THROW(NgramModel::Train({{"a"}}, {"<unk>", "a"}, {2, 0.0, true}), Error);
  EXPECT_THROW(NgramModel::Train({{"a"}}, {"<unk>", "a"}, {0, 1.0, true}), Error);
}

TEST(Ngram, TextRoundTripIsBitExact) {
  Rng rng(6);
  const std::vector<std::string> syms = {"a", "b", "c", "|"};
  const NgramModel m =
      NgramModel::Train(RandomCorpus(rng, 50, syms), {"<unk>", "a", "b", "c", "|"}, {3, 0.1, true});
  const auto path = std::filesystem::temp_directory_path() / "skd_lm_test.txt";
  m.Save(path.string());
  const NgramModel back = NgramModel::Load(path.string());
  std::filesystem::remove(path);
  EXPECT_EQ(back.Serialize(), m.Serialize());
  for (const auto& s : RandomCorpus(rng, 100, syms)) EXPECT_EQ(back.Score(s), m.Score(s));
}

TEST(Ngram, MalformedFiles) {
  const NgramModel m = NgramModel::Train({{"a", "b"}}, {"<unk>", "a", "b"}, {2, 1.0, true});
  const std::string text = m.Serialize();
  try {
    NgramModel::Parse(text.substr(0, text.size() / 2));
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFormat);
    EXPECT_NE(std::string(e.what()).find("line"), std::string::npos);
  }
  std::string bumped = text;
  bumped.replace(bumped.find(" 1\n"), 3, " 9\n");
  EXPECT_THROW(NgramModel::Parse(bumped), Error);
  EXPECT_THROW(NgramModel::Parse("garbage\n"), Error);
}

}  // namespace
}  // namespace streamkd
