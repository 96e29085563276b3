// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "core/ctc.h"

#include <cmath>
#include <limits>
#include <string>

#include "core/error.h"
#include "core/ops.h"

namespace streamkd {

namespace {

constexpr double kLogZero = -std::numeric_limits<double>::infinity();

void CheckTarget(const Array& log_probs, std::span<const int> target,
                 int blank) {
  Require(log_probs.rank() == 2, "ctc: log_probs must be [T, V]");
  const int v = static_cast<int>(log_probs.cols());
  Require(blank >= 0 && blank < v, "ctc: blank index out of range");
  for (int tok : target) {
    Require(tok >= 0 && tok < v, "ctc: target token out of vocabulary range");
    Require(tok != blank, "ctc: target contains the blank index");
  }
}

}  // namespace

size_t MinCtcFrames(std::span<const int> target) {
  size_t n = target.size();
  for (size_t i = 1; i < target.size(); ++i) {
    if (target[i] == target[i - 1]) ++n;
  }
  return n;
}

CtcResult CtcLoss(const Array& log_probs, std::span<const int> target,
                  int blank) {
  CheckTarget(log_probs, target, blank);
  const size_t frames = log_probs.rows();
  if (frames < MinCtcFrames(target) || frames == 0) {
    Fail(ErrorCode::kUnsatisfiable,
         "ctc: target of length " + std::to_string(target.size()) +
             " cannot be aligned to " + std::to_string(frames) + " frames");
  }
  const size_t s_len = 2 * target.size() + 1;
  std::vector<int> ext(s_len, blank);
  for (size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];
  auto can_skip = [&](size_t s) {
    return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
  };

  Array alpha = Array::Matrix(frames, s_len, kLogZero);
  Array beta = Array::Matrix(frames, s_len, kLogZero);
  alpha(0, 0) = log_probs(0, ext[0]);
  if (s_len > 1) alpha(0, 1) = log_probs(0, ext[1]);
  for (size_t t = 1; t < frames; ++t) {
    for (size_t s = 0; s < s_len; ++s) {
      double a = alpha(t - 1, s);
      if (s >= 1) a = LogAdd(a, alpha(t - 1, s - 1));
      if (can_skip(s)) a = LogAdd(a, alpha(t - 1, s - 2));
      alpha(t, s) = a == kLogZero ? kLogZero : a + log_probs(t, ext[s]);
    }
  }
  // beta excludes the emission at its own frame.
  beta(frames - 1, s_len - 1) = 0.0;
  if (s_len > 1) beta(frames - 1, s_len - 2) = 0.0;
  for (size_t t = frames - 1; t-- > 0;) {
    for (size_t s = 0; s < s_len; ++s) {
      double b = beta(t + 1, s) + log_probs(t + 1, ext[s]);
      if (s + 1 < s_len) {
        b = LogAdd(b, beta(t + 1, s + 1) + log_probs(t + 1, ext[s + 1]));
      }
      if (s + 2 < s_len && can_skip(s + 2)) {
        b = LogAdd(b, beta(t + 1, s + 2) + log_probs(t + 1, ext[s + 2]));
      }
      beta(t, s) = b;
    }
  }
  double log_p = alpha(frames - 1, s_len - 1);
  if (s_len > 1) log_p = LogAdd(log_p, alpha(frames - 1, s_len - 2));
  if (!std::isfinite(log_p)) {
    Fail(ErrorCode::kUnsatisfiable, "ctc: target has zero probability");
  }

  CtcResult res{-log_p, Array(log_probs.shape())};
  for (size_t t = 0; t < frames; ++t) {
    for (size_t s = 0; s < s_len; ++s) {
      const double occ = alpha(t, s) + beta(t, s);
      if (occ == kLogZero) continue;
      res.grad(t, ext[s]) -= std::exp(occ - log_p);
    }
  }
  return res;
}

double CtcBruteForce(const Array& log_probs, std::span<const int> target,
                     int blank) {
  CheckTarget(log_probs, target, blank);
  const size_t frames = log_probs.rows(), v = log_probs.cols();
  if (frames > 8 || v > 5) {
    Fail(ErrorCode::kInvalidArgument,
         "ctc brute force: instance too large (T <= 8, V <= 5)");
  }
  std::vector<int> path(frames, 0);
  std::vector<double> hits;
  while (true) {
    if (CollapseAlignment(path, blank) ==
        std::vector<int>(target.begin(), target.end())) {
      double lp = 0.0;
      for (size_t t = 0; t < frames; ++t) lp += log_probs(t, path[t]);
      hits.push_back(lp);
    }
    size_t i = 0;
    while (i < frames && ++path[i] == static_cast<int>(v)) path[i++] = 0;
    if (i == frames) break;
  }
  const double log_p = LogSumExp(hits);
  if (!std::isfinite(log_p)) {
    Fail(ErrorCode::kUnsatisfiable, "ctc brute force: no valid alignment");
  }
  return -log_p;
}

std::vector<int> CollapseAlignment(std::span<const int> alignment, int blank) {
  std::vector<int> out;
  int prev = -1;
  for (int a : alignment) {
    if (a != prev && a != blank) out.push_back(a);
    prev = a;
  }
  return out;
}

std::vector<int> GreedyDecode(const Array& log_probs, int blank) {
  std::vector<int> path(log_probs.rows());
  for (size_t t = 0; t < log_probs.rows(); ++t) {
    path[t] = static_cast<int>(ArgMax(log_probs.row(t)));
  }
  return CollapseAlignment(path, blank);
}

}  // namespace streamkd
