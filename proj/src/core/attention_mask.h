// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef STREAMKD_CORE_ATTENTION_MASK_H_
#define STREAMKD_CORE_ATTENTION_MASK_H_

#include <cstddef>
#include <cstdint>
#include <vector>

namespace streamkd {

// Realized boolean attention matrix: allowed(t, j) says whether query t may
// attend key j.
struct AttentionMask {
  size_t queries = 0;
  size_t keys = 0;
  std::vector<uint8_t> allowed;
  bool same_for_all_layers = true;

  AttentionMask() = default;
  AttentionMask(size_t q, size_t k, bool fill)
      : queries(q), keys(k), allowed(q * k, fill ? 1 : 0) {}

  static AttentionMask Full(size_t n) { return AttentionMask(n, n, true); }

  bool operator()(size_t t, size_t j) const {
    return allowed[t * keys + j] != 0;
  }
  void Set(size_t t, size_t j, bool v) { allowed[t * keys + j] = v ? 1 : 0; }

  bool operator==(const AttentionMask&) const = default;
};

}  // namespace streamkd

#endif  // STREAMKD_CORE_ATTENTION_MASK_H_
