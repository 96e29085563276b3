// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef STREAMKD_CORE_TOKENS_H_
#define STREAMKD_CORE_TOKENS_H_

#include <span>
#include <string>
#include <vector>

namespace streamkd {

// Character vocabulary: blank, word delimiter, unknown, then 'a'..'z'.
class Vocabulary {
 public:
  static constexpr int kBlank = 0;
  static constexpr int kDelimiter = 1;
  static constexpr int kUnknown = 2;
  static constexpr int kFirstLetter = 3;
  static constexpr int kDefaultSize = 29;

  Vocabulary();

  int size() const { return static_cast<int>(symbols_.size()); }
  const std::string& Symbol(int id) const { return symbols_.at(id); }
  const std::vector<std::string>& symbols() const { return symbols_; }
  // Unknown symbols map to kUnknown.
  int Lookup(const std::string& symbol) const;

  // Text <-> token ids. Spaces become delimiters; runs of spaces collapse;
  // characters outside a-z map to <unk>.
  std::vector<int> Encode(const std::string& text) const;
  std::string Decode(std::span<const int> tokens) const;

 private:
  std::vector<std::string> symbols_;
};

const Vocabulary& DefaultVocabulary();

}  // namespace streamkd

#endif  // STREAMKD_CORE_TOKENS_H_
