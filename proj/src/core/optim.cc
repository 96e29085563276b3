// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "core/optim.h"

#include <cmath>
#include <cstdio>

#include "core/error.h"

namespace streamkd {

void TrainConfig::Validate() const {
  Require(peak_lr > 0.0, "train: peak_lr must be positive");
  Require(warmup_fraction >= 0.0 && constant_fraction >= 0.0 &&
              warmup_fraction + constant_fraction <= 1.0,
          "train: schedule fractions must be >= 0 and sum to <= 1");
  Require(batch_size >= 1, "train: batch_size must be >= 1");
  Require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
          "train: Adam betas must be in [0, 1)");
  Require(eps > 0.0, "train: eps must be positive");
  Require(clip_norm >= 0.0, "train: clip_norm must be >= 0");
}

std::string TrainConfig::Serialize() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "updates=%zu peak_lr=%.17g warmup=%.17g constant=%.17g "
                "batch=%zu seed=%llu beta1=%.17g beta2=%.17g eps=%.17g "
                "clip=%.17g",
                updates, peak_lr, warmup_fraction, constant_fraction,
                batch_size, static_cast<unsigned long long>(seed), beta1, beta2,
                eps, clip_norm);
  return buf;
}

double TriStageLr(double step, const TrainConfig& config) {
  const double total = static_cast<double>(config.updates);
  Require(step >= 0.0, "lr: negative step");
  if (step > total) {
    Fail(ErrorCode::kInvalidArgument, "lr: step past the end of the schedule");
  }
  const double warm = config.warmup_fraction * total;
  const double hold = warm + config.constant_fraction * total;
  if (step < warm) return config.peak_lr * step / warm;
  if (step <= hold) return config.peak_lr;
  return config.peak_lr * (total - step) / (total - hold);
}

void AdamStep(ParamMap& params, const ParamMap& grads, AdamState& state,
              double lr, const TrainConfig& config) {
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    Require(it != params.end(), "adam: gradient for unknown parameter " + name);
    Require(it->second.SameShape(g), "adam: shape mismatch for " + name);
    g.CheckFinite("gradient of " + name);
  }
  ++state.step;
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (const auto& [name, g] : grads) {
    Array& p = params.at(name);
    Array& m = state.m.try_emplace(name, g.shape(), 0.0).first->second;
    Array& v = state.v.try_emplace(name, g.shape(), 0.0).first->second;
    for (size_t i = 0; i < g.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + config.eps);
    }
  }
}

double ClipGradNorm(ParamMap& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    for (double x : g.values()) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [name, g] : grads) {
      for (double& x : g.storage()) x *= s;
    }
  }
  return norm;
}

}  // namespace streamkd
