// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "core/config.h"

#include <sstream>

#include "core/checkpoint.h"
#include "core/error.h"

namespace streamkd {

const std::vector<ConfigKey>& ConfigRegistry() {
  static const std::vector<ConfigKey> keys = {
      {"seed", "1", "master seed; stage seeds derive from it"},
      {"jobs", "1", "worker threads for per-utterance work"},
      {"task.feature_dim", "16", "feature dimension D"},
      {"task.lexicon",
       "the,cat,sat,on,mat,a,dog,ran,to,big,red,hat,and,sun,fox,box,is,in,it,"
       "up,we,go,see,bed",
       "comma-separated words"},
      {"task.min_words", "2", "words per utterance, lower bound"},
      {"task.max_words", "4", "words per utterance, upper bound"},
      {"task.min_frames", "2", "frames per token, lower bound"},
      {"task.max_frames", "4", "frames per token, upper bound"},
      {"task.noise", "0.8", "Gaussian noise standard deviation"},
      {"task.coarticulation", "0.5", "next-token template weight per frame"},
      {"task.edge_silence", "2", "max silent frames at each edge"},
      {"data.labeled", "64", "|L|"},
      {"data.unlabeled", "160", "|U|"},
      {"data.dev", "48", "dev utterances"},
      {"model.layers", "4", "transformer layers"},
      {"model.dim", "32", "model dimension"},
      {"model.heads", "2", "attention heads"},
      {"model.ffn", "64", "feed-forward width"},
      {"model.norm", "gn", "frontend norm: gn or bn"},
      {"model.conv", "causal", "frontend conv: causal or symmetric"},
      {"model.kernel", "3", "frontend conv kernel"},
      {"model.dropout", "0", "dropout rate"},
      {"mask.variant", "block", "streaming variant for S, KD and ST"},
      {"mask.chunk_frames", "12", "C in frames"},
      {"mask.future_frames", "18", "F in frames"},
      {"mask.right_frames", "0", "R in frames per layer"},
      {"mask.left_limit", "-1", "left context; negative is unlimited"},
      {"mask.frame_ms", "20", "milliseconds per frame"},
      {"train.peak_lr", "2e-3", "peak learning rate"},
      {"train.batch", "8", "utterances per update"},
      {"train.warmup", "0.1", "warmup fraction"},
      {"train.constant", "0.4", "constant fraction"},
      {"train.beta1", "0.9", "Adam beta1"},
      {"train.beta2", "0.98", "Adam beta2"},
      {"train.eps", "1e-8", "Adam epsilon"},
      {"train.clip", "5", "gradient norm clip; 0 disables"},
      {"S.updates", "800", "updates for the streaming model S"},
      {"T.updates", "800", "updates for the guided teacher T"},
      {"KD.updates", "400", "updates for distillation"},
      {"N.updates", "800", "updates for the non-streaming model N"},
      {"ST.updates", "800", "updates for self-training"},
      {"scratch.updates", "1200", "self-training budget from scratch (reported)"},
      {"guide.alpha", "0.01", "guided loss weight"},
      {"distill.layers", "auto", "1-based layers, or auto for thirds"},
      {"distill.head_from", "S", "student head source: S or T"},
      {"pretrain.mode", "random", "P: random or contrastive"},
      {"pretrain.updates", "200", "contrastive pre-training updates"},
      {"pretrain.mask_prob", "0.3", "masked frame probability"},
      {"pretrain.distractors", "5", "distractors per masked frame"},
      {"lm.order", "4", "character n-gram order"},
      {"lm.smoothing", "0.1", "additive smoothing k"},
      {"lm.boundaries", "1", "sentence boundary symbols"},
      {"lm.corpus", "2000", "extra lexicon sentences for LM training"},
      {"decode.beam", "8", "beam size for pseudo-labeling"},
      {"decode.lm_weight", "2.15", "LM weight for pseudo-labeling"},
      {"decode.penalty", "-0.52", "word insertion penalty"},
  };
  return keys;
}

Config::Config() {
  for (const ConfigKey& k : ConfigRegistry()) values_[k.name] = k.default_value;
}

void Config::Set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  Require(it != values_.end(), "config: unknown key '" + key + "'");
  it->second = value;
}

void Config::Merge(const std::string& text, const std::string& source) {
  std::istringstream is(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string where = source + ":" + std::to_string(line_no);
    if (eq == std::string::npos) {
      Fail(ErrorCode::kInvalidArgument, where + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (!values_.count(key)) {
      Fail(ErrorCode::kInvalidArgument, where + ": unknown key '" + key + "'");
    }
    values_[key] = trim(line.substr(eq + 1));
  }
}

Config Config::Parse(const std::string& text) {
  Config c;
  c.Merge(text, "<config>");
  return c;
}

Config Config::Load(const std::string& path) {
  Config c;
  c.Merge(ReadFileBytes(path), path);
  return c;
}

const std::string& Config::Get(const std::string& key) const {
  auto it = values_.find(key);
  Require(it != values_.end(), "config: unknown key '" + key + "'");
  return it->second;
}

double Config::GetDouble(const std::string& key) const {
  const std::string& v = Get(key);
  try {
    size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::logic_error&) {
  }
  Fail(ErrorCode::kInvalidArgument, "config: " + key + "='" + v + "' is not a number");
}

int64_t Config::GetInt(const std::string& key) const {
  const std::string& v = Get(key);
  try {
    size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used == v.size()) return i;
  } catch (const std::logic_error&) {
  }
  Fail(ErrorCode::kInvalidArgument, "config: " + key + "='" + v + "' is not an integer");
}

size_t Config::GetSize(const std::string& key) const {
  const int64_t v = GetInt(key);
  Require(v >= 0, "config: " + key + " must be >= 0");
  return static_cast<size_t>(v);
}

bool Config::GetBool(const std::string& key) const {
  const std::string& v = Get(key);
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  Fail(ErrorCode::kInvalidArgument, "config: " + key + "='" + v + "' is not a boolean");
}

std::vector<std::string> Config::GetList(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(Get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string Config::Resolved() const {
  std::string out;
  for (const ConfigKey& k : ConfigRegistry()) {
    out += k.name + "=" + values_.at(k.name) + "\n";
  }
  return out;
}

std::string Config::Digest() const { return Sha256Hex(Resolved()); }

}  // namespace streamkd
