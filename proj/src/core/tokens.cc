// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "core/tokens.h"

#include <algorithm>

namespace streamkd {

Vocabulary::Vocabulary() {
  symbols_ = {"<blank>", "|", "<unk>"};
  for (char c = 'a'; c <= 'z'; ++c) symbols_.emplace_back(1, c);
}

int Vocabulary::Lookup(const std::string& symbol) const {
  auto it = std::find(symbols_.begin(), symbols_.end(), symbol);
  return it == symbols_.end() ? kUnknown
                              : static_cast<int>(it - symbols_.begin());
}

std::vector<int> Vocabulary::Encode(const std::string& text) const {
  std::vector<int> out;
  for (char c : text) {
    if (c == ' ' || c == '|') {
      if (!out.empty() && out.back() != kDelimiter) out.push_back(kDelimiter);
    } else if (c >= 'a' && c <= 'z') {
      out.push_back(kFirstLetter + (c - 'a'));
    } else {
      out.push_back(kUnknown);
    }
  }
  while (!out.empty() && out.back() == kDelimiter) out.pop_back();
  return out;
}

std::string Vocabulary::Decode(std::span<const int> tokens) const {
  std::string out;
  for (int t : tokens) {
    if (t == kDelimiter) {
      out += ' ';
    } else if (t >= kFirstLetter && t < size()) {
      out += static_cast<char>('a' + (t - kFirstLetter));
    } else if (t == kUnknown) {
      out += '?';
    }
  }
  return out;
}

const Vocabulary& DefaultVocabulary() {
  static const Vocabulary vocab;
  return vocab;
}

}  // namespace streamkd
