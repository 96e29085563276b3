// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

// Two-stage fine-tuning orchestrator. Artifacts live in one output
// directory; a resumed run keeps every artifact before the first missing one
// and recomputes the rest in order.
//
//   data -> P -> S -> T -> KD -> N -> LM -> U' -> ST
//
// S: streaming CTC on L.  T: non-streaming guided CTC on L, guided by S.
// KD: streaming student distilled from T on L and U.  N: non-streaming CTC
// on L.  U': U decoded by N with the LM.  ST: KD fine-tuned on L and U'.

#ifndef STREAMKD_CORE_PIPELINE_H_
#define STREAMKD_CORE_PIPELINE_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "core/beam_search.h"
#include "core/config.h"
#include "core/dataset.h"
#include "core/encoder.h"
#include "core/losses.h"
#include "core/ngram.h"
#include "core/optim.h"
#include "core/trainer.h"

namespace streamkd {

enum class Stage { kData, kPretrain, kS, kT, kKD, kN, kLm, kPseudo, kST };

const std::vector<Stage>& StageOrder();
// The six reported stages: S, T, KD, N, U', ST.
const std::vector<Stage>& ReportedStages();
std::string StageName(Stage s);
Stage ParseStage(const std::string& name);
std::string StageFile(Stage s);
std::vector<Stage> StageInputs(Stage s);
// Short model label carried in reports (S4, T4, S5, N1, S7).
std::string TableModel(Stage s);

struct PipelineSettings {
  uint64_t seed = 1;
  size_t jobs = 1;
  SyntheticTask task;
  SplitSizes sizes;
  EncoderConfig encoder;
  MaskSpec streaming;
  TrainConfig base;
  std::map<Stage, size_t> updates;
  size_t scratch_updates = 0;
  double alpha = 0.01;
  DistillSpec distill;
  std::string head_from = "S";
  std::string pretrain_mode = "random";
  size_t pretrain_updates = 0;
  ContrastiveConfig contrastive;
  NgramOptions lm;
  size_t lm_corpus = 0;
  DecodeConfig decode;

  static PipelineSettings FromConfig(const Config& config);
  // Stage training config: shared schedule, stage budget, derived seed.
  TrainConfig StageTrain(Stage s) const;
};

EncoderConfig EncoderFromConfig(const Config& config);
MaskSpec MaskFromConfig(const Config& config);
SyntheticTask TaskFromConfig(const Config& config);
TrainConfig TrainFromConfig(const Config& config);
DecodeConfig DecodeFromConfig(const Config& config);
NgramOptions LmFromConfig(const Config& config);

// Character symbols of `text` as the LM sees them.
std::vector<std::string> LmSymbols(const std::string& text);
std::vector<std::string> LmVocabulary();
NgramModel TrainCharLm(const std::vector<std::string>& texts,
                       const NgramOptions& options);

struct StageReport {
  std::string stage;
  std::string table_model;
  std::vector<std::string> inputs;
  std::string artifact;
  std::string digest;
  std::string train;
  std::string mask;
  std::string decode;
  bool resumed = false;
  double dev_ter = -1.0;  // negative when not applicable
  std::vector<double> losses;
  std::vector<double> lrs;
  size_t utterances_in = 0;
  size_t skipped = 0;
  size_t dropped = 0;
  size_t updates = 0;
  double seconds = 0.0;
  std::map<std::string, double> metrics;
  std::vector<std::string> notes;

  std::string ToJson() const;
  static StageReport FromJson(const std::string& text);
  std::string LossCsv() const;
};

struct PipelineOptions {
  bool dry_run = false;
  bool resume = false;
  std::function<void(const std::string&)> log;
};

struct PipelineResult {
  std::vector<StageReport> reports;  // ReportedStages() order
  std::vector<std::string> plan;     // one line per reported stage
  std::vector<std::string> rerun;    // artifacts recomputed this run
  std::string summary_json;
  double ter_s = -1, ter_t = -1, ter_kd = -1, ter_n = -1, ter_st = -1;
  double agree_s_t = -1, agree_kd_t = -1;
  double seconds = 0.0;
};

PipelineResult RunTwoStage(const Config& config, const std::string& out_dir,
                           const PipelineOptions& options = {});

// Runs one stage from the artifacts already in `out_dir`. A missing input
// artifact is a kMissingStage error naming the stage that produces it.
StageReport RunSingleStage(const Config& config, const std::string& out_dir,
                           Stage stage, const PipelineOptions& options = {});

}  // namespace streamkd

#endif  // STREAMKD_CORE_PIPELINE_H_
