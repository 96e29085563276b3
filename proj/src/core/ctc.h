// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef STREAMKD_CORE_CTC_H_
#define STREAMKD_CORE_CTC_H_

#include <cstddef>
#include <span>
#include <vector>

#include "core/array.h"

namespace streamkd {

struct CtcResult {
  double loss = 0.0;  // -log p(target | log_probs)
  Array grad;         // d loss / d log_probs, [T, V]
};

// Frames needed to emit `target`: its length plus one blank between every
// pair of equal adjacent labels.
size_t MinCtcFrames(std::span<const int> target);

// Forward-backward over the blank-augmented label sequence in log space.
// `log_probs` is [T, V]; rows need not be normalized (the gradient is then
// exact for the unnormalized path sum). Throws kUnsatisfiable when no
// alignment exists.
CtcResult CtcLoss(const Array& log_probs, std::span<const int> target,
                  int blank = 0);

// Sums every V^T frame labelling that collapses to `target`. Test oracle;
// limited to T <= 8 and V <= 5.
double CtcBruteForce(const Array& log_probs, std::span<const int> target,
                     int blank = 0);

// Merge repeats, then drop blanks.
std::vector<int> CollapseAlignment(std::span<const int> alignment,
                                   int blank = 0);

// Per-frame argmax (lowest index on ties), collapsed.
std::vector<int> GreedyDecode(const Array& log_probs, int blank = 0);

}  // namespace streamkd

#endif  // STREAMKD_CORE_CTC_H_
