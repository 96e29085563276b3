// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "core/beam_search.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <unordered_map>

#include "core/error.h"
#include "core/ops.h"

namespace streamkd {

NgramTokenLm::NgramTokenLm(const NgramModel& model, const Vocabulary& vocab)
    : model_(model) {
  to_lm_.resize(vocab.size());
  for (int id = 0; id < vocab.size(); ++id) {
    to_lm_[id] = model.Index(vocab.Symbol(id));
  }
}

size_t NgramTokenLm::ContextSize() const {
  return static_cast<size_t>(model_.order() - 1);
}

std::vector<int> NgramTokenLm::Map(std::span<const int> history) const {
  std::vector<int> out;
  out.reserve(history.size());
  for (int id : history) out.push_back(to_lm_.at(id));
  return out;
}

double NgramTokenLm::LogProb(std::span<const int> history, int token) const {
  return model_.LogProb(Map(history), to_lm_.at(token));
}

double NgramTokenLm::EndLogProb(std::span<const int> history) const {
  return model_.EndLogProb(Map(history));
}

void DecodeConfig::Validate() const {
  Require(beam_size >= 1, "decode: beam_size must be >= 1");
  Require(nbest >= 1, "decode: nbest must be >= 1");
  Require(blank != delimiter, "decode: blank and delimiter must differ");
}

std::string DecodeConfig::Serialize() const {
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "beam=%zu lm_weight=%.17g penalty=%.17g nbest=%zu log=natural",
                beam_size, lm_weight, word_insertion_penalty, nbest);
  return buf;
}

size_t CountWords(std::span<const int> tokens, int delimiter) {
  size_t words = 0;
  for (int t : tokens) words += t == delimiter;
  if (!tokens.empty() && tokens.back() != delimiter) ++words;
  return words;
}

namespace {

struct Node {
  int parent = -1;
  int token = -1;
  size_t depth = 0;
  double lm = 0.0;  // cumulative LM log-prob of the prefix
  size_t delimiters = 0;
  std::map<int, int> children;
};

struct State {
  int node = 0;
  bool ends_blank = true;
  double acoustic = 0.0;
};

class Trie {
 public:
  Trie() { nodes_.emplace_back(); }

  const Node& at(int i) const { return nodes_[i]; }

  std::vector<int> History(int node, size_t limit) const {
    std::vector<int> out;
    while (node > 0 && out.size() < limit) {
      out.push_back(nodes_[node].token);
      node = nodes_[node].parent;
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

  std::vector<int> Tokens(int node) const {
    return History(node, nodes_[node].depth);
  }

  int Child(int node, int token, const TokenLm* lm, int delimiter) {
    auto it = nodes_[node].children.find(token);
    if (it != nodes_[node].children.end()) return it->second;
    Node child;
    child.parent = node;
    child.token = token;
    child.depth = nodes_[node].depth + 1;
    child.delimiters = nodes_[node].delimiters + (token == delimiter);
    child.lm = nodes_[node].lm;
    if (lm != nullptr) {
      child.lm += lm->LogProb(History(node, lm->ContextSize()), token);
    }
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(std::move(child));
    nodes_[node].children.emplace(token, id);
    return id;
  }

 private:
  std::vector<Node> nodes_;
};

}  // namespace

std::vector<Hypothesis> PrefixBeamSearch(const Array& log_probs,
                                         const DecodeConfig& config,
                                         const TokenLm* lm) {
  config.Validate();
  Require(log_probs.rank() == 2, "decode: posteriorgram must be [T, V]");
  const size_t frames = log_probs.rows();
  const int vocab = static_cast<int>(log_probs.cols());
  Require(config.blank >= 0 && config.blank < vocab,
          "decode: blank index outside the posteriorgram");
  const double w = lm != nullptr ? config.lm_weight : 0.0;
  const double pen = config.word_insertion_penalty;

  Trie trie;
  std::vector<State> beam{State{}};
  auto prune_score = [&](const State& s) {
    const Node& n = trie.at(s.node);
    return s.acoustic + w * n.lm + pen * static_cast<double>(n.delimiters);
  };

  std::vector<State> next;
  std::unordered_map<uint64_t, size_t> slot;
  for (size_t t = 0; t < frames; ++t) {
    next.clear();
    slot.clear();
    auto add = [&](int node, bool ends_blank, double acoustic) {
      const uint64_t key = (static_cast<uint64_t>(node) << 1) | ends_blank;
      auto [it, inserted] = slot.emplace(key, next.size());
      if (inserted) {
        next.push_back(State{node, ends_blank, acoustic});
      } else {
        next[it->second].acoustic = LogAdd(next[it->second].acoustic, acoustic);
      }
    };
    const auto row = log_probs.row(t);
    for (const State& s : beam) {
      // Child() may grow the trie, so keep a copy rather than a reference.
      const int last = trie.at(s.node).token;
      for (int c = 0; c < vocab; ++c) {
        const double p = s.acoustic + row[c];
        if (c == config.blank) {
          add(s.node, true, p);
        } else if (c == last && !s.ends_blank) {
          add(s.node, false, p);
        } else {
          add(trie.Child(s.node, c, lm, config.delimiter), false, p);
        }
      }
    }
    std::vector<std::pair<double, size_t>> order;
    order.reserve(next.size());
    for (size_t i = 0; i < next.size(); ++i) {
      order.emplace_back(prune_score(next[i]), i);
    }
    const size_t keep = std::min(config.beam_size, order.size());
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    beam.clear();
    for (size_t i = 0; i < keep; ++i) beam.push_back(next[order[i].second]);
  }

  // Merge the two states of each prefix, preserving first-seen order.
  std::vector<int> prefix_order;
  std::unordered_map<int, double> merged;
  for (const State& s : beam) {
    auto [it, inserted] = merged.emplace(s.node, s.acoustic);
    if (inserted) {
      prefix_order.push_back(s.node);
    } else {
      it->second = LogAdd(it->second, s.acoustic);
    }
  }
  std::vector<Hypothesis> hyps;
  for (int node : prefix_order) {
    Hypothesis h;
    h.tokens = trie.Tokens(node);
    h.acoustic = merged[node];
    h.lm = trie.at(node).lm;
    if (lm != nullptr) {
      h.lm += lm->EndLogProb(trie.History(node, lm->ContextSize()));
    }
    h.words = CountWords(h.tokens, config.delimiter);
    h.combined = h.acoustic + w * h.lm + pen * static_cast<double>(h.words);
    hyps.push_back(std::move(h));
  }
  std::stable_sort(hyps.begin(), hyps.end(),
                   [](const Hypothesis& a, const Hypothesis& b) {
                     return a.combined > b.combined;
                   });
  if (hyps.size() > config.nbest) hyps.resize(config.nbest);
  return hyps;
}

std::string FormatHypotheses(const std::vector<Hypothesis>& hyps,
                             const Vocabulary& vocab) {
  std::string out;
  char buf[128];
  for (size_t i = 0; i < hyps.size(); ++i) {
    const Hypothesis& h = hyps[i];
    std::snprintf(buf, sizeof(buf), "%zu\t%.6f\t%.6f\t%.6f\t", i + 1,
                  h.combined, h.acoustic, h.lm);
    out += buf;
    out += vocab.Decode(h.tokens);
    out += '\n';
  }
  return out;
}

std::string PosteriorgramCsv(const Array& log_probs, const Vocabulary& vocab) {
  Require(log_probs.rank() == 2, "posteriors: expected [T, V]");
  const size_t v = log_probs.cols();
  std::string out = "frame";
  for (size_t c = 0; c < v; ++c) {
    out += ',';
    out += static_cast<int>(c) < vocab.size() ? vocab.Symbol(static_cast<int>(c))
                                               : "v" + std::to_string(c);
  }
  out += '\n';
  char buf[40];
  for (size_t t = 0; t < log_probs.rows(); ++t) {
    out += std::to_string(t);
    for (size_t c = 0; c < v; ++c) {
      std::snprintf(buf, sizeof(buf), ",%.17g", log_probs(t, c));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace streamkd
