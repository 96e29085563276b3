// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

// CTC prefix beam search with character LM shallow fusion.
//
// The beam holds (prefix, ends-in-blank) states rather than merged prefixes,
// so a beam of one follows the per-frame argmax path exactly. Prefix
// probabilities are merged only when final hypotheses are formed.

#ifndef STREAMKD_CORE_BEAM_SEARCH_H_
#define STREAMKD_CORE_BEAM_SEARCH_H_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "core/array.h"
#include "core/ngram.h"
#include "core/tokens.h"

namespace streamkd {

// Language model over acoustic token ids (blank excluded).
class TokenLm {
 public:
  virtual ~TokenLm() = default;
  // Number of trailing history tokens the model looks at.
  virtual size_t ContextSize() const = 0;
  virtual double LogProb(std::span<const int> history, int token) const = 0;
  virtual double EndLogProb(std::span<const int> history) const = 0;
};

// Adapts a character n-gram model to acoustic ids by symbol name.
class NgramTokenLm : public TokenLm {
 public:
  NgramTokenLm(const NgramModel& model, const Vocabulary& vocab);
  size_t ContextSize() const override;
  double LogProb(std::span<const int> history, int token) const override;
  double EndLogProb(std::span<const int> history) const override;

 private:
  std::vector<int> Map(std::span<const int> history) const;

  const NgramModel& model_;
  std::vector<int> to_lm_;
};

struct DecodeConfig {
  size_t beam_size = 500;
  double lm_weight = 0.0;
  double word_insertion_penalty = 0.0;
  int blank = Vocabulary::kBlank;
  int delimiter = Vocabulary::kDelimiter;
  size_t nbest = 1;

  void Validate() const;
  // Scores are natural-log; the line says so.
  std::string Serialize() const;
};

struct Hypothesis {
  std::vector<int> tokens;
  double acoustic = 0.0;
  double lm = 0.0;
  double combined = 0.0;
  size_t words = 0;
};

// Words counted for the insertion penalty: one per delimiter plus one for a
// trailing word not closed by a delimiter.
size_t CountWords(std::span<const int> tokens, int delimiter);

// Ranked best-first; `lm` may be null.
std::vector<Hypothesis> PrefixBeamSearch(const Array& log_probs,
                                         const DecodeConfig& config,
                                         const TokenLm* lm = nullptr);

// "rank<TAB>combined<TAB>acoustic<TAB>lm<TAB>text" lines, rank from 1.
std::string FormatHypotheses(const std::vector<Hypothesis>& hyps,
                             const Vocabulary& vocab);

// Header "frame,<symbol>,...", then one row of log-probs per frame.
std::string PosteriorgramCsv(const Array& log_probs, const Vocabulary& vocab);

}  // namespace streamkd

#endif  // STREAMKD_CORE_BEAM_SEARCH_H_
