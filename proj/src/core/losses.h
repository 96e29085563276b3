// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

// Auxiliary objectives: guided CTC, hidden-state distillation, contrastive
// prediction, and the frame-level argmax agreement metric.

#ifndef STREAMKD_CORE_LOSSES_H_
#define STREAMKD_CORE_LOSSES_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "core/array.h"

namespace streamkd {

// One-hot at each frame's argmax, or an all-zero row where blank wins.
// Ties go to the lowest index, so a tie that includes blank zeroes the row.
Array GuideMask(const Array& log_probs, int blank = 0);

// -sum(M * P) with P the probabilities (not log-probabilities).
double GuidePenalty(const Array& mask, const Array& probs);

struct GuidedCtcResult {
  double loss = 0.0;
  double ctc = 0.0;
  double penalty = 0.0;
  Array grad;  // d loss / d log_probs
};

GuidedCtcResult GuidedCtcLoss(const Array& log_probs,
                              std::span<const int> target, const Array& mask,
                              double alpha, int blank = 0);

struct DistillSpec {
  std::vector<size_t> layers;  // 1-based, strictly increasing
  std::vector<double> weights;

  // ceil(n/3), ceil(2n/3), n with duplicates removed; unit weights.
  static DistillSpec Default(size_t n_layers);
  // "2,3,4" or "2:1,3:0.5,4:1".
  static DistillSpec Parse(const std::string& text);
  std::string Serialize() const;
  void Validate(size_t n_layers) const;
};

struct DistillResult {
  double loss = 0.0;
  std::vector<double> per_layer;  // aligned with spec.layers
  std::vector<Array> grads;       // per hidden layer; zero where unselected
};

// Sum over selected layers of weight * mean((H_S - H_T)^2). Teacher states are
// constants.
DistillResult DistillationLoss(const std::vector<Array>& student,
                               const std::vector<Array>& teacher,
                               const DistillSpec& spec);

double CosineSimilarity(std::span<const double> a, std::span<const double> b);

struct ContrastiveResult {
  double loss = 0.0;
  std::vector<double> dc;
  std::vector<double> dq;
  std::vector<std::vector<double>> ddistractors;
};

// -log(exp(sim(c,q)/tau) / sum over {q} and distractors of exp(sim(c,x)/tau)).
ContrastiveResult ContrastiveLoss(
    std::span<const double> c, std::span<const double> q,
    const std::vector<std::vector<double>>& distractors,
    double temperature = 1.0);

struct MaskedContrastiveResult {
  double loss = 0.0;  // mean over masked frames
  Array dcontext;     // [T, D]
};

// Contrastive loss at each masked frame: context row vs the target row at
// the same frame, with distractors drawn from other masked frames' targets.
// Targets receive no gradient.
MaskedContrastiveResult MaskedContrastive(const Array& context,
                                          const Array& targets,
                                          std::span<const size_t> masked,
                                          size_t distractors, uint64_t seed,
                                          double temperature = 1.0);

// Fraction of frames whose argmax tokens agree (blank included).
double FrameAgreement(const Array& a, const Array& b);

}  // namespace streamkd

#endif  // STREAMKD_CORE_LOSSES_H_
