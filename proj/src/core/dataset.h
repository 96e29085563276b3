// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic speech-like task and the binary utterance container.

#ifndef STREAMKD_CORE_DATASET_H_
#define STREAMKD_CORE_DATASET_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "core/array.h"
#include "core/tokens.h"

namespace streamkd {

enum class Split : uint8_t { kLabeled = 0, kUnlabeled = 1, kDev = 2 };
std::string SplitName(Split s);

struct Utterance {
  std::string id;
  Split split = Split::kLabeled;
  Array features;  // [T, D]
  bool has_label = false;
  std::string label;  // training target text
  bool has_reference = false;
  std::string reference;  // hidden reference, for evaluation only

  // Generation trace; not stored in the container.
  std::vector<size_t> repeats;  // frames per token
  size_t silence_frames = 0;
};

struct DataSplit {
  std::vector<Utterance> labeled;
  std::vector<Utterance> unlabeled;
  std::vector<Utterance> dev;

  size_t size() const { return labeled.size() + unlabeled.size() + dev.size(); }
};

struct SyntheticTask {
  size_t feature_dim = 16;
  std::vector<std::string> lexicon;
  size_t min_words = 1;
  size_t max_words = 3;
  size_t min_frames_per_token = 1;
  size_t max_frames_per_token = 3;
  double noise = 0.0;
  // Weight of the next token's template mixed into every frame of a token.
  double coarticulation = 0.0;
  // Up to this many silent frames at each utterance edge.
  size_t edge_silence = 0;
  uint64_t seed = 0;

  static std::vector<std::string> DefaultLexicon();
  void Validate() const;
};

struct SplitSizes {
  size_t labeled = 1;
  size_t unlabeled = 1;
  size_t dev = 1;
};

// One template row per non-blank token of `vocab`; row 0 (blank) is zero
// and doubles as the silence frame.
Array TaskTemplates(const SyntheticTask& task, const Vocabulary& vocab);

// A random sentence drawn from the task lexicon.
std::string SampleSentence(const SyntheticTask& task, uint64_t seed);

// Transcript-only sentences from the lexicon (LM training text).
std::vector<std::string> SampleCorpus(const SyntheticTask& task, size_t count,
                                      uint64_t seed);

DataSplit GenerateDataset(const SyntheticTask& task, const SplitSizes& sizes,
                          const Vocabulary& vocab = DefaultVocabulary());

std::vector<Utterance> Flatten(const DataSplit& data);
DataSplit Partition(std::vector<Utterance> utterances);

// Container: "SKDDATA1", u32 version, u32 count, index of (u64 offset,
// u64 length) per record, records, then u64 total length.
std::string SerializeDataset(const std::vector<Utterance>& utterances);
std::vector<Utterance> DeserializeDataset(const std::string& bytes);
void SaveDataset(const std::string& path, const DataSplit& data);
DataSplit LoadDataset(const std::string& path);

// Checks the index of a serialized container: offsets in bounds, records
// contiguous and fully consumed, ids unique. Throws kFormat on failure.
size_t ValidateDatasetIndex(const std::string& bytes);

}  // namespace streamkd

#endif  // STREAMKD_CORE_DATASET_H_
