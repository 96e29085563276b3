// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

// Character-level n-gram language model with additive-k smoothing. A context
// never seen in training falls back to the longest seen suffix (down to the
// unigram distribution), so every lookup returns a normalized distribution.

#ifndef STREAMKD_CORE_NGRAM_H_
#define STREAMKD_CORE_NGRAM_H_

#include <map>
#include <span>
#include <string>
#include <vector>

namespace streamkd {

inline constexpr char kSentenceStart[] = "<s>";
inline constexpr char kSentenceEnd[] = "</s>";
inline constexpr int kNgramFormatVersion = 1;

struct NgramOptions {
  int order = 4;
  double smoothing = 1.0;
  // Pad with <s> and predict </s>. Without boundaries contexts are simply
  // truncated at the sentence start and nothing marks the end.
  bool boundaries = true;
};

class NgramModel {
 public:
  // `vocab` lists the predictable symbols. When it contains "<unk>", that
  // symbol absorbs out-of-vocabulary input; otherwise such input is an error.
  // </s> is appended when boundaries are on.
  static NgramModel Train(const std::vector<std::vector<std::string>>& corpus,
                          const std::vector<std::string>& vocab,
                          const NgramOptions& options);

  int order() const { return options_.order; }
  double smoothing() const { return options_.smoothing; }
  bool boundaries() const { return options_.boundaries; }
  // Predicted symbols (index space for LogProb).
  const std::vector<std::string>& vocab() const { return vocab_; }
  int Index(const std::string& symbol) const;
  int end_index() const { return end_; }

  // log p(token | history); history holds indices into vocab().
  double LogProb(std::span<const int> history, int token) const;
  double EndLogProb(std::span<const int> history) const;
  // Sum of conditional log-probs, plus the end term when boundaries are on.
  double Score(std::span<const std::string> sequence) const;

  // Seen contexts at a given order (1..order), context -> log-probs over
  // vocab(). Context entries equal to vocab().size() stand for <s>.
  const std::map<std::vector<int>, std::vector<double>>& Table(int n) const {
    return tables_.at(n - 1);
  }

  std::string Serialize() const;
  static NgramModel Parse(const std::string& text);
  void Save(const std::string& path) const;
  static NgramModel Load(const std::string& path);

 private:
  std::vector<double> const* Lookup(std::span<const int> history) const;

  NgramOptions options_;
  std::vector<std::string> vocab_;
  std::map<std::string, int> index_;
  int unk_ = -1;
  int end_ = -1;
  int start_ = -1;
  std::vector<std::map<std::vector<int>, std::vector<double>>> tables_;
};

}  // namespace streamkd

#endif  // STREAMKD_CORE_NGRAM_H_
