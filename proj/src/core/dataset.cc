// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "core/dataset.h"

#include <cmath>
#include <cstdio>
#include <set>

#include "core/checkpoint.h"
#include "core/error.h"
#include "core/rng.h"

namespace streamkd {

namespace {

constexpr char kMagic[] = "SKDDATA1";
constexpr uint32_t kVersion = 1;
constexpr uint64_t kTemplateStream = 0x7e3a11;
constexpr uint64_t kCorpusStream = 0xc0c0;

std::string Join(const std::vector<std::string>& words) {
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

std::string SentenceFrom(const SyntheticTask& task, Rng& rng) {
  const size_t n = static_cast<size_t>(rng.Int(
      static_cast<int64_t>(task.min_words), static_cast<int64_t>(task.max_words)));
  std::vector<std::string> words;
  for (size_t i = 0; i < n; ++i) {
    words.push_back(task.lexicon[static_cast<size_t>(
        rng.Int(0, static_cast<int64_t>(task.lexicon.size()) - 1))]);
  }
  return Join(words);
}

Utterance Synthesize(const SyntheticTask& task, const Array& templates,
                     const Vocabulary& vocab, Rng& rng) {
  Utterance u;
  const std::string text = SentenceFrom(task, rng);
  const std::vector<int> tokens = vocab.Encode(text);
  const size_t d = task.feature_dim;
  // Frame plan: the template row each frame realizes and the row mixed in.
  std::vector<std::pair<int, int>> plan;
  auto silence = [&](size_t n) {
    for (size_t i = 0; i < n; ++i) plan.emplace_back(Vocabulary::kBlank, -1);
    u.silence_frames += n;
  };
  const auto edge = static_cast<int64_t>(task.edge_silence);
  silence(static_cast<size_t>(rng.Int(0, edge)));
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0 && tokens[i] == tokens[i - 1]) silence(1);
    const size_t r = static_cast<size_t>(
        rng.Int(static_cast<int64_t>(task.min_frames_per_token),
                static_cast<int64_t>(task.max_frames_per_token)));
    u.repeats.push_back(r);
    const int next = i + 1 < tokens.size() ? tokens[i + 1] : -1;
    for (size_t k = 0; k < r; ++k) plan.emplace_back(tokens[i], next);
  }
  silence(static_cast<size_t>(rng.Int(0, edge)));

  u.features = Array::Matrix(plan.size(), d);
  for (size_t t = 0; t < plan.size(); ++t) {
    const auto [tok, next] = plan[t];
    for (size_t j = 0; j < d; ++j) {
      double v = templates(static_cast<size_t>(tok), j);
      if (next >= 0 && task.coarticulation != 0.0) {
        v += task.coarticulation * templates(static_cast<size_t>(next), j);
      }
      if (task.noise != 0.0) v += task.noise * rng.Normal();
      u.features(t, j) = v;
    }
  }
  u.reference = vocab.Decode(tokens);
  u.has_reference = true;
  return u;
}

}  // namespace

std::string SplitName(Split s) {
  switch (s) {
    case Split::kLabeled:
      return "L";
    case Split::kUnlabeled:
      return "U";
    case Split::kDev:
      return "dev";
  }
  return "?";
}

std::vector<std::string> SyntheticTask::DefaultLexicon() {
  return {"the", "cat", "sat", "on",  "mat", "a",   "dog", "ran",
          "to",  "big", "red", "hat", "and", "sun", "fox", "box",
          "is",  "in",  "it",  "up",  "we",  "go",  "see", "bed"};
}

void SyntheticTask::Validate() const {
  Require(feature_dim >= 1, "task: feature_dim must be >= 1");
  Require(!lexicon.empty(), "task: empty lexicon");
  Require(min_words >= 1 && min_words <= max_words,
          "task: need 1 <= min_words <= max_words");
  Require(min_frames_per_token >= 1 &&
              min_frames_per_token <= max_frames_per_token,
          "task: need 1 <= min_frames_per_token <= max_frames_per_token");
  Require(noise >= 0.0 && std::isfinite(noise), "task: noise must be >= 0");
  Require(std::isfinite(coarticulation), "task: coarticulation must be finite");
  for (const std::string& w : lexicon) {
    Require(!w.empty() && w.find(' ') == std::string::npos,
            "task: lexicon words must be non-empty without spaces");
  }
}

Array TaskTemplates(const SyntheticTask& task, const Vocabulary& vocab) {
  Rng rng(MixSeed(task.seed, kTemplateStream));
  const size_t v = static_cast<size_t>(vocab.size());
  Array templates = Array::Matrix(v, task.feature_dim);
  for (size_t tok = 1; tok < v; ++tok) {
    for (size_t j = 0; j < task.feature_dim; ++j) templates(tok, j) = rng.Normal();
  }
  for (size_t a = 0; a < v; ++a) {
    for (size_t b = a + 1; b < v; ++b) {
      bool same = true;
      for (size_t j = 0; j < task.feature_dim && same; ++j) {
        same = templates(a, j) == templates(b, j);
      }
      if (same) Fail(ErrorCode::kInternal, "task: duplicate token templates");
    }
  }
  return templates;
}

std::string SampleSentence(const SyntheticTask& task, uint64_t seed) {
  task.Validate();
  Rng rng(seed);
  return SentenceFrom(task, rng);
}

std::vector<std::string> SampleCorpus(const SyntheticTask& task, size_t count,
                                      uint64_t seed) {
  task.Validate();
  Rng rng(MixSeed(seed, kCorpusStream));
  std::vector<std::string> out;
  out.reserve(count);
  for (size_t i = 0; i < count; ++i) out.push_back(SentenceFrom(task, rng));
  return out;
}

DataSplit GenerateDataset(const SyntheticTask& task, const SplitSizes& sizes,
                          const Vocabulary& vocab) {
  task.Validate();
  Require(sizes.labeled >= 1 && sizes.unlabeled >= 1 && sizes.dev >= 1,
          "gen-data: every split needs at least one utterance");
  const Array templates = TaskTemplates(task, vocab);
  DataSplit data;
  auto fill = [&](Split split, size_t n, const char* prefix,
                  std::vector<Utterance>& out) {
    for (size_t i = 0; i < n; ++i) {
      Rng rng(MixSeed(task.seed, (static_cast<uint64_t>(split) << 32) | i));
      Utterance u = Synthesize(task, templates, vocab, rng);
      char id[32];
      std::snprintf(id, sizeof(id), "%s-%05zu", prefix, i);
      u.id = id;
      u.split = split;
      if (split != Split::kUnlabeled) {
        u.has_label = true;
        u.label = u.reference;
      }
      out.push_back(std::move(u));
    }
  };
  fill(Split::kLabeled, sizes.labeled, "L", data.labeled);
  fill(Split::kUnlabeled, sizes.unlabeled, "U", data.unlabeled);
  fill(Split::kDev, sizes.dev, "D", data.dev);
  return data;
}

std::vector<Utterance> Flatten(const DataSplit& data) {
  std::vector<Utterance> out = data.labeled;
  out.insert(out.end(), data.unlabeled.begin(), data.unlabeled.end());
  out.insert(out.end(), data.dev.begin(), data.dev.end());
  return out;
}

DataSplit Partition(std::vector<Utterance> utterances) {
  DataSplit data;
  for (Utterance& u : utterances) {
    switch (u.split) {
      case Split::kLabeled:
        data.labeled.push_back(std::move(u));
        break;
      case Split::kUnlabeled:
        data.unlabeled.push_back(std::move(u));
        break;
      case Split::kDev:
        data.dev.push_back(std::move(u));
        break;
    }
  }
  return data;
}

namespace {

void PutString(std::string& out, const std::string& s) {
  le::PutU32(out, static_cast<uint32_t>(s.size()));
  out += s;
}

std::string ReadString(le::Reader& r) { return r.Bytes(r.U32()); }

std::string EncodeRecord(const Utterance& u) {
  std::string rec;
  rec.push_back(static_cast<char>(u.split));
  PutString(rec, u.id);
  le::PutU32(rec, static_cast<uint32_t>(u.features.rows()));
  le::PutU32(rec, static_cast<uint32_t>(u.features.cols()));
  for (double v : u.features.values()) le::PutF64(rec, v);
  rec.push_back(static_cast<char>((u.has_label ? 1 : 0) |
                                  (u.has_reference ? 2 : 0)));
  if (u.has_label) PutString(rec, u.label);
  if (u.has_reference) PutString(rec, u.reference);
  return rec;
}

Utterance DecodeRecord(le::Reader& r) {
  Utterance u;
  const uint8_t split = r.U8();
  if (split > 2) Fail(ErrorCode::kFormat, "dataset: bad split tag");
  u.split = static_cast<Split>(split);
  u.id = ReadString(r);
  const size_t t = r.U32();
  const size_t d = r.U32();
  if (t == 0 || d == 0) Fail(ErrorCode::kFormat, "dataset: empty feature matrix");
  if (r.remaining() / 8 < t * d) Fail(ErrorCode::kFormat, "dataset: truncated features");
  u.features = Array::Matrix(t, d);
  for (double& v : u.features.storage()) v = r.F64();
  const uint8_t flags = r.U8();
  if (flags > 3) Fail(ErrorCode::kFormat, "dataset: bad record flags");
  u.has_label = flags & 1;
  u.has_reference = flags & 2;
  if (u.has_label) u.label = ReadString(r);
  if (u.has_reference) u.reference = ReadString(r);
  return u;
}

struct Index {
  size_t count = 0;
  std::vector<std::pair<uint64_t, uint64_t>> entries;
};

Index ReadIndex(const std::string& bytes) {
  le::Reader r(bytes, "dataset");
  if (bytes.size() < 8 || bytes.compare(0, 8, kMagic) != 0) {
    Fail(ErrorCode::kFormat, "dataset: bad magic");
  }
  r.Seek(8);
  const uint32_t version = r.U32();
  if (version != kVersion) {
    Fail(ErrorCode::kFormat, "dataset: unsupported version " + std::to_string(version));
  }
  Index index;
  index.count = r.U32();
  if (bytes.size() < 8) Fail(ErrorCode::kFormat, "dataset: truncated");
  le::Reader tail(bytes, "dataset");
  tail.Seek(bytes.size() - 8);
  if (tail.U64() != bytes.size()) {
    Fail(ErrorCode::kFormat, "dataset: length field does not match file size");
  }
  if (r.remaining() / 16 < index.count) Fail(ErrorCode::kFormat, "dataset: truncated index");
  for (size_t i = 0; i < index.count; ++i) {
    const uint64_t off = r.U64();
    const uint64_t len = r.U64();
    index.entries.emplace_back(off, len);
  }
  uint64_t expect = r.pos();
  for (size_t i = 0; i < index.count; ++i) {
    const auto [off, len] = index.entries[i];
    if (off != expect || len > bytes.size() - 8 - off) {
      Fail(ErrorCode::kFormat,
           "dataset: index entry " + std::to_string(i) + " out of place");
    }
    expect = off + len;
  }
  if (expect != bytes.size() - 8) {
    Fail(ErrorCode::kFormat, "dataset: trailing bytes after last record");
  }
  return index;
}

}  // namespace

std::string SerializeDataset(const std::vector<Utterance>& utterances) {
  std::vector<std::string> records;
  records.reserve(utterances.size());
  for (const Utterance& u : utterances) records.push_back(EncodeRecord(u));
  std::string out(kMagic, 8);
  le::PutU32(out, kVersion);
  le::PutU32(out, static_cast<uint32_t>(records.size()));
  uint64_t off = out.size() + 16 * records.size();
  for (const std::string& rec : records) {
    le::PutU64(out, off);
    le::PutU64(out, rec.size());
    off += rec.size();
  }
  for (const std::string& rec : records) out += rec;
  le::PutU64(out, out.size() + 8);
  return out;
}

size_t ValidateDatasetIndex(const std::string& bytes) {
  const Index index = ReadIndex(bytes);
  std::set<std::string> ids;
  le::Reader r(bytes, "dataset");
  for (size_t i = 0; i < index.count; ++i) {
    const auto [off, len] = index.entries[i];
    r.Seek(off);
    Utterance u = DecodeRecord(r);
    if (r.pos() != off + len) {
      Fail(ErrorCode::kFormat,
           "dataset: record " + std::to_string(i) + " length mismatch");
    }
    if (!ids.insert(u.id).second) {
      Fail(ErrorCode::kFormat, "dataset: duplicate utterance id " + u.id);
    }
  }
  return index.count;
}

std::vector<Utterance> DeserializeDataset(const std::string& bytes) {
  ValidateDatasetIndex(bytes);
  const Index index = ReadIndex(bytes);
  std::vector<Utterance> out;
  le::Reader r(bytes, "dataset");
  for (const auto& [off, len] : index.entries) {
    r.Seek(off);
    out.push_back(DecodeRecord(r));
  }
  return out;
}

void SaveDataset(const std::string& path, const DataSplit& data) {
  WriteFileBytes(path, SerializeDataset(Flatten(data)));
}

DataSplit LoadDataset(const std::string& path) {
  return Partition(DeserializeDataset(ReadFileBytes(path)));
}

}  // namespace streamkd
