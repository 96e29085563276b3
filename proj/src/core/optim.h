// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef STREAMKD_CORE_OPTIM_H_
#define STREAMKD_CORE_OPTIM_H_

#include <cstddef>
#include <cstdint>
#include <string>

#include "core/encoder.h"

namespace streamkd {

struct TrainConfig {
  size_t updates = 800;
  double peak_lr = 2e-3;
  double warmup_fraction = 0.1;
  double constant_fraction = 0.4;
  size_t batch_size = 8;
  uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  // Global gradient-norm clip; 0 disables.
  double clip_norm = 5.0;

  void Validate() const;
  std::string Serialize() const;
};

// Linear warmup from 0, constant at the peak, linear decay to 0 at `total`.
double TriStageLr(double step, const TrainConfig& config);

struct AdamState {
  ParamMap m;
  ParamMap v;
  uint64_t step = 0;
};

// One bias-corrected Adam update of every array in `grads`. Throws kNumeric
// before touching anything if a gradient entry is not finite.
void AdamStep(ParamMap& params, const ParamMap& grads, AdamState& state,
              double lr, const TrainConfig& config);

// Scales `grads` so their global L2 norm is at most `max_norm`; returns the
// norm before scaling.
double ClipGradNorm(ParamMap& grads, double max_norm);

}  // namespace streamkd

#endif  // STREAMKD_CORE_OPTIM_H_
