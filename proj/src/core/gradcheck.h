// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef STREAMKD_CORE_GRADCHECK_H_
#define STREAMKD_CORE_GRADCHECK_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "core/array.h"

namespace streamkd {

// A scalar function of several arrays. When `grads` is non-null it must be
// filled with one gradient per input (same shapes).
using ScalarFn =
    std::function<double(const std::vector<Array>& inputs,
                         std::vector<Array>* grads)>;

struct GradCheckOptions {
  double step = 1e-5;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|,
  // abs_floor); the floor keeps near-zero entries from dividing by noise.
  double abs_floor = 1e-4;
  // When non-zero, at most this many entries per input are probed (chosen by
  // `seed`); zero probes everything.
  size_t max_entries_per_input = 0;
  uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  size_t worst_input = 0;
  size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  size_t probes = 0;
};

// Central finite differences against the analytic gradient of `fn`.
GradCheckResult CheckGradient(const ScalarFn& fn, std::vector<Array> inputs,
                              const GradCheckOptions& options = {});

}  // namespace streamkd

#endif  // STREAMKD_CORE_GRADCHECK_H_
