// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

// Stage training loops. Batches are drawn from a seeded permutation per
// epoch; per-utterance gradients may be computed on several threads but are
// always summed in batch order, so results do not depend on `jobs`.

#ifndef STREAMKD_CORE_TRAINER_H_
#define STREAMKD_CORE_TRAINER_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "core/array.h"
#include "core/beam_search.h"
#include "core/dataset.h"
#include "core/encoder.h"
#include "core/losses.h"
#include "core/ngram.h"
#include "core/optim.h"

namespace streamkd {

struct StageOutcome {
  ModelParams model;
  std::vector<double> losses;  // mean batch loss per update
  std::vector<double> lrs;
  size_t utterances = 0;  // distinct utterances trained on
  size_t skipped = 0;     // unsatisfiable CTC targets
  double seconds = 0.0;
};

// CTC fine-tuning of `init` under `spec` on labeled utterances.
StageOutcome FinetuneCtc(const ModelParams& init, const MaskSpec& spec,
                         const std::vector<Utterance>& data,
                         const TrainConfig& config, size_t jobs = 1);

// Guided CTC: the non-streaming teacher is fine-tuned from `pretrained`
// with guide masks taken from the frozen streaming model.
StageOutcome TrainGuidedTeacher(const ModelParams& pretrained,
                                const ModelParams& streaming,
                                const std::vector<Utterance>& data,
                                double alpha, const TrainConfig& config,
                                size_t jobs = 1);

// Hidden-state distillation of a streaming student initialized from
// `pretrained`; the head (final norm and projection) comes from
// `head_source`. Labels are not used.
StageOutcome Distill(const ModelParams& pretrained, const ModelParams& teacher,
                     const ModelParams& head_source, const MaskSpec& spec,
                     const std::vector<Utterance>& data,
                     const DistillSpec& distill, const TrainConfig& config,
                     size_t jobs = 1);

struct ContrastiveConfig {
  double mask_probability = 0.3;
  size_t distractors = 5;
};

// Masked contrastive pre-training with the bidirectional mask.
StageOutcome ContrastivePretrain(const ModelParams& init,
                                 const std::vector<Utterance>& data,
                                 const ContrastiveConfig& contrastive,
                                 const TrainConfig& config, size_t jobs = 1);

struct PseudoLabelOutcome {
  std::vector<Utterance> labeled;  // U' with label set from the top hypothesis
  size_t dropped = 0;              // empty hypotheses
  double seconds = 0.0;
};

PseudoLabelOutcome PseudoLabel(const ModelParams& model, const NgramModel* lm,
                               const std::vector<Utterance>& unlabeled,
                               const DecodeConfig& decode, size_t jobs = 1);

// Log-posteriors of each utterance under the model's own mask.
std::vector<Array> Posteriors(const ModelParams& model,
                              const std::vector<Utterance>& data,
                              size_t jobs = 1);

// Greedy-decoded token error rate against labels (or references).
double TokenErrorRate(const ModelParams& model,
                      const std::vector<Utterance>& data, size_t jobs = 1);

// Frames with equal argmax over all frames of `data`.
double MeanFrameAgreement(const ModelParams& a, const ModelParams& b,
                          const std::vector<Utterance>& data, size_t jobs = 1);

// Runs fn(i) for i in [0, n) on up to `jobs` threads.
void ParallelFor(size_t n, size_t jobs, const std::function<void(size_t)>& fn);

}  // namespace streamkd

#endif  // STREAMKD_CORE_TRAINER_H_
