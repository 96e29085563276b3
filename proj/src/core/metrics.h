// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef STREAMKD_CORE_METRICS_H_
#define STREAMKD_CORE_METRICS_H_

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace streamkd {

// Levenshtein distance with unit costs.
template <typename T>
size_t EditDistance(std::span<const T> ref, std::span<const T> hyp) {
  std::vector<size_t> prev(hyp.size() + 1), cur(hyp.size() + 1);
  for (size_t j = 0; j <= hyp.size(); ++j) prev[j] = j;
  for (size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= hyp.size(); ++j) {
      const size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[hyp.size()];
}

// Edit distance divided by the reference length; throws on an empty ref.
double EditDistanceRate(std::span<const std::string> ref,
                        std::span<const std::string> hyp);
double EditDistanceRate(std::span<const int> ref, std::span<const int> hyp);

// Splits token ids into words on `delimiter`; empty words are dropped.
std::vector<std::vector<int>> SplitWords(std::span<const int> tokens,
                                         int delimiter);

// Whitespace split for text, or per-character (spaces skipped) when
// `characters` is set.
std::vector<std::string> SplitText(const std::string& text, bool characters);

// Corpus-level error rate accumulator: total edits / total reference units.
class ErrorRate {
 public:
  void AddTokens(std::span<const int> ref, std::span<const int> hyp);
  void AddWords(std::span<const int> ref, std::span<const int> hyp,
                int delimiter);
  double Rate() const;
  size_t edits() const { return edits_; }
  size_t reference_units() const { return ref_units_; }

 private:
  size_t edits_ = 0;
  size_t ref_units_ = 0;
};

}  // namespace streamkd

#endif  // STREAMKD_CORE_METRICS_H_
