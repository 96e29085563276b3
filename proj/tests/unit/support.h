// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

// Shared test helpers. The oracles here are written independently of the
// library code they check: plain loops, exhaustive enumeration, no shared
// helpers beyond Array storage.

#ifndef STREAMKD_TESTS_SUPPORT_H_
#define STREAMKD_TESTS_SUPPORT_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "core/array.h"
#include "core/attention_mask.h"
#include "core/rng.h"

namespace streamkd::testing {

inline Array RandomMatrix(Rng& rng, size_t rows, size_t cols, double scale = 1.0) {
  Array a = Array::Matrix(rows, cols);
  for (double& x : a.storage()) x = scale * rng.Normal();
  return a;
}

inline Array RandomArray(Rng& rng, std::vector<size_t> shape, double scale = 1.0) {
  Array a(std::move(shape));
  for (double& x : a.storage()) x = scale * rng.Normal();
  return a;
}

// Row-normalized log-probabilities computed with std::log/std::exp only.
inline Array OracleLogSoftmax(const Array& logits) {
  Array out = logits;
  for (size_t t = 0; t < logits.rows(); ++t) {
    double sum = 0.0;
    for (size_t c = 0; c < logits.cols(); ++c) sum += std::exp(logits(t, c));
    for (size_t c = 0; c < logits.cols(); ++c) out(t, c) = logits(t, c) - std::log(sum);
  }
  return out;
}

inline Array RandomLogProbs(Rng& rng, size_t frames, size_t vocab, double scale = 2.0) {
  return OracleLogSoftmax(RandomMatrix(rng, frames, vocab, scale));
}

inline std::vector<int> RandomLabels(Rng& rng, size_t len, int vocab) {
  std::vector<int> out(len);
  for (int& x : out) x = static_cast<int>(rng.Int(1, vocab - 1));
  return out;
}

inline AttentionMask RandomMask(Rng& rng, size_t q, size_t k) {
  AttentionMask m(q, k, false);
  for (size_t t = 0; t < q; ++t) {
    for (size_t j = 0; j < k; ++j) m.Set(t, j, rng.Uniform() < 0.6);
    m.Set(t, rng.Int(0, static_cast<int64_t>(k) - 1), true);
  }
  return m;
}

// softmax over allowed keys, then a weighted sum of values.
inline Array OracleAttention(const Array& q, const Array& k, const Array& v,
                             const AttentionMask& mask, double scale) {
  Array out = Array::Matrix(q.rows(), v.cols());
  for (size_t t = 0; t < q.rows(); ++t) {
    std::vector<double> w(k.rows(), 0.0);
    double mx = -std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < k.rows(); ++j) {
      if (!mask(t, j)) continue;
      double s = 0.0;
      for (size_t d = 0; d < q.cols(); ++d) s += q(t, d) * k(j, d);
      w[j] = scale * s;
      mx = std::max(mx, w[j]);
    }
    double z = 0.0;
    for (size_t j = 0; j < k.rows(); ++j) {
      if (mask(t, j)) z += std::exp(w[j] - mx);
    }
    for (size_t j = 0; j < k.rows(); ++j) {
      if (!mask(t, j)) continue;
      const double a = std::exp(w[j] - mx) / z;
      for (size_t d = 0; d < v.cols(); ++d) out(t, d) += a * v(j, d);
    }
  }
  return out;
}

// Merge repeats, drop blanks.
inline std::vector<int> OracleCollapse(const std::vector<int>& path, int blank = 0) {
  std::vector<int> out;
  int prev = -1;
  for (int s : path) {
    if (s != prev && s != blank) out.push_back(s);
    prev = s;
  }
  return out;
}

// Visits every frame labelling of a T x V posteriorgram.
template <typename F>
void ForEachPath(size_t frames, size_t vocab, F&& fn) {
  std::vector<int> path(frames, 0);
  while (true) {
    fn(path);
    size_t i = 0;
    while (i < frames && ++path[i] == static_cast<int>(vocab)) path[i++] = 0;
    if (i == frames) return;
  }
}

// Probability of each collapsed label sequence, by enumeration.
inline std::map<std::vector<int>, double> OracleLabelProbs(const Array& log_probs) {
  std::map<std::vector<int>, double> out;
  ForEachPath(log_probs.rows(), log_probs.cols(), [&](const std::vector<int>& path) {
    double lp = 0.0;
    for (size_t t = 0; t < path.size(); ++t) lp += log_probs(t, path[t]);
    out[OracleCollapse(path)] += std::exp(lp);
  });
  return out;
}

inline double OracleCtcLoss(const Array& log_probs, const std::vector<int>& target) {
  const auto probs = OracleLabelProbs(log_probs);
  auto it = probs.find(target);
  return it == probs.end() ? std::numeric_limits<double>::infinity() : -std::log(it->second);
}

// Word-level Levenshtein by the textbook full table.
template <typename T>
size_t OracleEditDistance(const std::vector<T>& a, const std::vector<T>& b) {
  std::vector<std::vector<size_t>> d(a.size() + 1, std::vector<size_t>(b.size() + 1));
  for (size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j) {
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1,
                          d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u)});
    }
  }
  return d[a.size()][b.size()];
}

inline double MaxAbsDiff(const Array& a, const Array& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace streamkd::testing

#endif  // STREAMKD_TESTS_SUPPORT_H_
