// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "core/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/error.h"
#include "core/rng.h"

namespace streamkd {

GradCheckResult CheckGradient(const ScalarFn& fn, std::vector<Array> inputs,
                              const GradCheckOptions& options) {
  Require(options.step > 0.0, "CheckGradient: step must be positive");
  std::vector<Array> analytic;
  fn(inputs, &analytic);
  Require(analytic.size() == inputs.size(),
          "CheckGradient: function returned the wrong number of gradients");
  Rng rng(options.seed);
  GradCheckResult result;
  for (size_t a = 0; a < inputs.size(); ++a) {
    Require(analytic[a].SameShape(inputs[a]),
            "CheckGradient: gradient shape mismatch for input " +
                std::to_string(a));
    std::vector<size_t> probe(inputs[a].size());
    std::iota(probe.begin(), probe.end(), size_t{0});
    if (options.max_entries_per_input &&
        probe.size() > options.max_entries_per_input) {
      // Partial Fisher-Yates: the first N entries become a random subset.
      for (size_t i = 0; i < options.max_entries_per_input; ++i) {
        const size_t j = static_cast<size_t>(
            rng.Int(static_cast<int64_t>(i),
                    static_cast<int64_t>(probe.size() - 1)));
        std::swap(probe[i], probe[j]);
      }
      probe.resize(options.max_entries_per_input);
    }
    for (size_t idx : probe) {
      const double saved = inputs[a][idx];
      inputs[a][idx] = saved + options.step;
      const double up = fn(inputs, nullptr);
      inputs[a][idx] = saved - options.step;
      const double down = fn(inputs, nullptr);
      inputs[a][idx] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double an = analytic[a][idx];
      const double denom =
          std::max({std::abs(an), std::abs(numeric), options.abs_floor});
      const double rel = std::abs(an - numeric) / denom;
      ++result.probes;
      if (rel > result.max_rel_error || !std::isfinite(rel)) {
        result.max_rel_error = std::isfinite(rel) ? rel : HUGE_VAL;
        result.worst_input = a;
        result.worst_index = idx;
        result.analytic = an;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace streamkd
