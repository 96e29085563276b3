// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "core/ngram.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "core/checkpoint.h"
#include "core/error.h"

namespace streamkd {

namespace {

constexpr char kHeader[] = "streamkd-ngram";

std::string FormatDouble(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

NgramModel NgramModel::Train(
    const std::vector<std::vector<std::string>>& corpus,
    const std::vector<std::string>& vocab, const NgramOptions& options) {
  Require(!corpus.empty(), "ngram: empty corpus");
  Require(options.order >= 1, "ngram: order must be >= 1");
  Require(options.smoothing > 0.0, "ngram: smoothing must be positive");
  NgramModel m;
  m.options_ = options;
  for (const std::string& s : vocab) {
    Require(!s.empty() && s.find_first_of(" \t\n") == std::string::npos,
            "ngram: vocabulary symbols must be non-empty without whitespace");
    Require(s != kSentenceStart && s != kSentenceEnd,
            "ngram: boundary symbols are reserved");
    Require(m.index_.emplace(s, static_cast<int>(m.vocab_.size())).second,
            "ngram: duplicate vocabulary symbol '" + s + "'");
    m.vocab_.push_back(s);
  }
  if (auto unk = m.index_.find("<unk>"); unk != m.index_.end()) m.unk_ = unk->second;
  if (options.boundaries) {
    m.end_ = static_cast<int>(m.vocab_.size());
    m.index_.emplace(kSentenceEnd, m.end_);
    m.vocab_.push_back(kSentenceEnd);
  }
  m.start_ = static_cast<int>(m.vocab_.size());

  const int n = options.order;
  std::vector<std::map<std::vector<int>, std::vector<double>>> counts(n);
  const size_t pv = m.vocab_.size();
  size_t tokens_seen = 0;
  for (const auto& sentence : corpus) {
    std::vector<int> seq;
    if (options.boundaries) seq.assign(n - 1, m.start_);
    const size_t offset = seq.size();
    for (const std::string& s : sentence) seq.push_back(m.Index(s));
    if (options.boundaries) seq.push_back(m.end_);
    for (size_t i = offset; i < seq.size(); ++i) {
      ++tokens_seen;
      for (int order = 1; order <= n; ++order) {
        const size_t ctx_len = static_cast<size_t>(order - 1);
        if (i - 0 < ctx_len) continue;  // truncated at sentence start
        std::vector<int> ctx(seq.begin() + (i - ctx_len), seq.begin() + i);
        auto& row = counts[order - 1][ctx];
        if (row.empty()) row.assign(pv, 0.0);
        row[seq[i]] += 1.0;
      }
    }
  }
  Require(tokens_seen > 0, "ngram: corpus has no tokens");

  m.tables_.resize(n);
  const double k = options.smoothing;
  for (int order = 0; order < n; ++order) {
    for (auto& [ctx, row] : counts[order]) {
      double total = 0.0;
      for (double c : row) total += c;
      std::vector<double> lp(pv);
      const double denom = total + k * static_cast<double>(pv);
      for (size_t t = 0; t < pv; ++t) lp[t] = std::log((row[t] + k) / denom);
      m.tables_[order].emplace(ctx, std::move(lp));
    }
  }
  return m;
}

int NgramModel::Index(const std::string& symbol) const {
  auto it = index_.find(symbol);
  if (it == index_.end() || it->second == end_) {
    Require(unk_ >= 0, "ngram: symbol '" + symbol + "' is outside a vocabulary without <unk>");
    return unk_;
  }
  return it->second;
}

const std::vector<double>* NgramModel::Lookup(
    std::span<const int> history) const {
  const int n = options_.order;
  std::vector<int> padded;
  if (options_.boundaries) padded.assign(n - 1, start_);
  padded.insert(padded.end(), history.begin(), history.end());
  for (int order = n; order >= 1; --order) {
    const size_t ctx_len = static_cast<size_t>(order - 1);
    if (padded.size() < ctx_len) continue;
    std::vector<int> ctx(padded.end() - ctx_len, padded.end());
    auto it = tables_[order - 1].find(ctx);
    if (it != tables_[order - 1].end()) return &it->second;
  }
  Fail(ErrorCode::kInternal, "ngram: no unigram distribution");
}

double NgramModel::LogProb(std::span<const int> history, int token) const {
  Require(token >= 0 && token < static_cast<int>(vocab_.size()),
          "ngram: token index out of range");
  return (*Lookup(history))[token];
}

double NgramModel::EndLogProb(std::span<const int> history) const {
  if (!options_.boundaries) return 0.0;
  return (*Lookup(history))[end_];
}

double NgramModel::Score(std::span<const std::string> sequence) const {
  std::vector<int> hist;
  double total = 0.0;
  for (const std::string& s : sequence) {
    const int tok = Index(s);
    total += LogProb(hist, tok);
    hist.push_back(tok);
  }
  return total + EndLogProb(hist);
}

std::string NgramModel::Serialize() const {
  std::ostringstream os;
  os << kHeader << ' ' << kNgramFormatVersion << '\n';
  os << "order " << options_.order << '\n';
  os << "smoothing " << FormatDouble(options_.smoothing) << '\n';
  os << "boundaries " << (options_.boundaries ? 1 : 0) << '\n';
  os << "vocab";
  for (const std::string& s : vocab_) {
    if (s != kSentenceEnd) os << ' ' << s;
  }
  os << '\n';
  size_t entries = 0;
  for (const auto& t : tables_) entries += t.size() * vocab_.size();
  os << "entries " << entries << '\n';
  auto ctx_name = [&](const std::vector<int>& ctx) {
    std::string s;
    for (size_t i = 0; i < ctx.size(); ++i) {
      if (i) s += ' ';
      s += ctx[i] == start_ ? kSentenceStart : vocab_[ctx[i]];
    }
    return s;
  };
  for (const auto& table : tables_) {
    for (const auto& [ctx, lp] : table) {
      const std::string c = ctx_name(ctx);
      for (size_t t = 0; t < lp.size(); ++t) {
        os << c << '\t' << vocab_[t] << '\t' << FormatDouble(lp[t]) << '\n';
      }
    }
  }
  os << "end\n";
  return os.str();
}

NgramModel NgramModel::Parse(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  size_t line_no = 0;
  auto fail = [&](const std::string& why) {
    Fail(ErrorCode::kFormat,
         "ngram model line " + std::to_string(line_no) + ": " + why);
  };
  auto next = [&](const char* what) {
    if (!std::getline(is, line)) {
      ++line_no;
      fail(std::string("unexpected end of file, expected ") + what);
    }
    ++line_no;
  };
  auto keyed = [&](const std::string& key) {
    next(key.c_str());
    if (line.rfind(key + " ", 0) != 0) fail("expected '" + key + "'");
    return line.substr(key.size() + 1);
  };

  next("header");
  {
    std::istringstream hs(line);
    std::string magic;
    int version = 0;
    if (!(hs >> magic >> version) || magic != kHeader) fail("not an ngram model");
    if (version != kNgramFormatVersion) {
      fail("unsupported format version " + std::to_string(version));
    }
  }
  NgramModel m;
  try {
    m.options_.order = std::stoi(keyed("order"));
    m.options_.smoothing = std::stod(keyed("smoothing"));
    m.options_.boundaries = std::stoi(keyed("boundaries")) != 0;
  } catch (const std::logic_error&) {
    fail("bad numeric header value");
  }
  if (m.options_.order < 1) fail("order must be >= 1");
  {
    std::istringstream vs(keyed("vocab"));
    std::string s;
    while (vs >> s) {
      m.index_.emplace(s, static_cast<int>(m.vocab_.size()));
      m.vocab_.push_back(s);
    }
  }
  if (auto unk = m.index_.find("<unk>"); unk != m.index_.end()) m.unk_ = unk->second;
  if (m.options_.boundaries) {
    m.end_ = static_cast<int>(m.vocab_.size());
    m.index_.emplace(kSentenceEnd, m.end_);
    m.vocab_.push_back(kSentenceEnd);
  }
  m.start_ = static_cast<int>(m.vocab_.size());
  size_t entries = 0;
  try {
    entries = std::stoull(keyed("entries"));
  } catch (const std::logic_error&) {
    fail("bad entry count");
  }
  const size_t pv = m.vocab_.size();
  if (entries % pv != 0) fail("entry count is not a multiple of the vocabulary");
  m.tables_.resize(m.options_.order);
  for (size_t e = 0; e < entries; ++e) {
    next("an entry");
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) fail("expected context<TAB>token<TAB>logprob");
    std::vector<int> ctx;
    {
      std::istringstream cs(line.substr(0, t1));
      std::string s;
      while (cs >> s) {
        if (s == kSentenceStart) {
          ctx.push_back(m.start_);
        } else {
          auto it = m.index_.find(s);
          if (it == m.index_.end()) fail("unknown context symbol '" + s + "'");
          ctx.push_back(it->second);
        }
      }
    }
    if (ctx.size() >= static_cast<size_t>(m.options_.order)) {
      fail("context longer than order - 1");
    }
    auto tok = m.index_.find(line.substr(t1 + 1, t2 - t1 - 1));
    if (tok == m.index_.end()) fail("unknown token");
    double lp = 0.0;
    try {
      lp = std::stod(line.substr(t2 + 1));
    } catch (const std::logic_error&) {
      fail("bad log-probability");
    }
    auto& row = m.tables_[ctx.size()][ctx];
    if (row.empty()) row.assign(pv, std::nan(""));
    row[tok->second] = lp;
  }
  next("end marker");
  if (line != "end") fail("expected 'end'");
  for (const auto& table : m.tables_) {
    for (const auto& [ctx, row] : table) {
      for (double v : row) {
        if (std::isnan(v)) fail("incomplete distribution for a context");
      }
    }
  }
  if (m.tables_[0].empty()) fail("missing unigram distribution");
  return m;
}

void NgramModel::Save(const std::string& path) const {
  WriteFileBytes(path, Serialize());
}

NgramModel NgramModel::Load(const std::string& path) {
  return Parse(ReadFileBytes(path));
}

}  // namespace streamkd
