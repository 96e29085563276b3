// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "core/metrics.h"

#include <sstream>

#include "core/error.h"

namespace streamkd {

double EditDistanceRate(std::span<const std::string> ref,
                        std::span<const std::string> hyp) {
  Require(!ref.empty(), "edit distance rate: empty reference");
  return static_cast<double>(EditDistance(ref, hyp)) /
         static_cast<double>(ref.size());
}

double EditDistanceRate(std::span<const int> ref, std::span<const int> hyp) {
  Require(!ref.empty(), "edit distance rate: empty reference");
  return static_cast<double>(EditDistance(ref, hyp)) /
         static_cast<double>(ref.size());
}

std::vector<std::vector<int>> SplitWords(std::span<const int> tokens,
                                         int delimiter) {
  std::vector<std::vector<int>> words(1);
  for (int t : tokens) {
    if (t == delimiter) {
      if (!words.back().empty()) words.emplace_back();
    } else {
      words.back().push_back(t);
    }
  }
  if (words.back().empty()) words.pop_back();
  return words;
}

std::vector<std::string> SplitText(const std::string& text, bool characters) {
  std::vector<std::string> out;
  if (characters) {
    for (char c : text) {
      if (c != ' ' && c != '\t' && c != '\n') out.emplace_back(1, c);
    }
    return out;
  }
  std::istringstream is(text);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

void ErrorRate::AddTokens(std::span<const int> ref, std::span<const int> hyp) {
  edits_ += EditDistance(ref, hyp);
  ref_units_ += ref.size();
}

void ErrorRate::AddWords(std::span<const int> ref, std::span<const int> hyp,
                         int delimiter) {
  const auto r = SplitWords(ref, delimiter);
  const auto h = SplitWords(hyp, delimiter);
  edits_ += EditDistance<std::vector<int>>(r, h);
  ref_units_ += r.size();
}

double ErrorRate::Rate() const {
  Require(ref_units_ > 0, "error rate: no reference units");
  return static_cast<double>(edits_) / static_cast<double>(ref_units_);
}

}  // namespace streamkd
