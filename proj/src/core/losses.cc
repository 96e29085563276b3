// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "core/losses.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "core/ctc.h"
#include "core/error.h"
#include "core/ops.h"
#include "core/rng.h"

namespace streamkd {

Array GuideMask(const Array& log_probs, int blank) {
  Require(log_probs.rank() == 2, "guide_mask: expected [T, V]");
  Array mask(log_probs.shape(), 0.0);
  for (size_t t = 0; t < log_probs.rows(); ++t) {
    const size_t best = ArgMax(log_probs.row(t));
    if (static_cast<int>(best) != blank) mask(t, best) = 1.0;
  }
  return mask;
}

double GuidePenalty(const Array& mask, const Array& probs) {
  Require(mask.SameShape(probs), "guide_penalty: shape mismatch " +
                                     ShapeString(mask.shape()) + " vs " +
                                     ShapeString(probs.shape()));
  double total = 0.0;
  for (size_t i = 0; i < mask.size(); ++i) total += mask[i] * probs[i];
  return -total;
}

GuidedCtcResult GuidedCtcLoss(const Array& log_probs,
                              std::span<const int> target, const Array& mask,
                              double alpha, int blank) {
  Require(mask.SameShape(log_probs), "guided_ctc: mask shape mismatch");
  CtcResult ctc = CtcLoss(log_probs, target, blank);
  Array probs(log_probs.shape());
  for (size_t i = 0; i < probs.size(); ++i) probs[i] = std::exp(log_probs[i]);
  GuidedCtcResult out;
  out.ctc = ctc.loss;
  out.penalty = GuidePenalty(mask, probs);
  out.loss = ctc.loss + alpha * out.penalty;
  out.grad = std::move(ctc.grad);
  if (alpha != 0.0) {
    for (size_t i = 0; i < probs.size(); ++i) {
      out.grad[i] -= alpha * mask[i] * probs[i];
    }
  }
  return out;
}

DistillSpec DistillSpec::Default(size_t n_layers) {
  Require(n_layers >= 1, "distill: need at least one layer");
  DistillSpec spec;
  for (size_t k = 1; k <= 3; ++k) {
    const size_t layer = (k * n_layers + 2) / 3;
    if (spec.layers.empty() || spec.layers.back() < layer) {
      spec.layers.push_back(layer);
      spec.weights.push_back(1.0);
    }
  }
  return spec;
}

DistillSpec DistillSpec::Parse(const std::string& text) {
  DistillSpec spec;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    try {
      size_t used = 0;
      const std::string layer = item.substr(0, colon);
      const long v = std::stol(layer, &used);
      Require(used == layer.size() && v >= 1, "distill: bad layer '" + item + "'");
      spec.layers.push_back(static_cast<size_t>(v));
      spec.weights.push_back(
          colon == std::string::npos ? 1.0 : std::stod(item.substr(colon + 1)));
    } catch (const std::logic_error&) {
      Fail(ErrorCode::kInvalidArgument, "distill: bad layer list '" + text + "'");
    }
  }
  Require(!spec.layers.empty(), "distill: empty layer list");
  return spec;
}

std::string DistillSpec::Serialize() const {
  std::string out;
  char buf[48];
  for (size_t i = 0; i < layers.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%s%zu:%.17g", i ? "," : "", layers[i],
                  weights[i]);
    out += buf;
  }
  return out;
}

void DistillSpec::Validate(size_t n_layers) const {
  Require(!layers.empty(), "distill: no layers selected");
  Require(layers.size() == weights.size(), "distill: one weight per layer");
  for (size_t i = 0; i < layers.size(); ++i) {
    Require(layers[i] >= 1 && layers[i] <= n_layers,
            "distill: layer " + std::to_string(layers[i]) + " outside 1.." +
                std::to_string(n_layers));
    Require(i == 0 || layers[i] > layers[i - 1],
            "distill: layers must be strictly increasing");
  }
}

DistillResult DistillationLoss(const std::vector<Array>& student,
                               const std::vector<Array>& teacher,
                               const DistillSpec& spec) {
  Require(student.size() == teacher.size(),
          "distill: student and teacher depths differ");
  spec.Validate(student.size());
  DistillResult out;
  out.grads.reserve(student.size());
  for (const Array& h : student) out.grads.emplace_back(h.shape(), 0.0);
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const size_t l = spec.layers[i] - 1;
    const Array& hs = student[l];
    const Array& ht = teacher[l];
    Require(hs.SameShape(ht), "distill: layer " + std::to_string(l + 1) +
                                  " shape mismatch " + ShapeString(hs.shape()) +
                                  " vs " + ShapeString(ht.shape()));
    Require(!hs.empty(), "distill: empty hidden state");
    const double n = static_cast<double>(hs.size());
    double sq = 0.0;
    for (size_t j = 0; j < hs.size(); ++j) {
      const double d = hs[j] - ht[j];
      sq += d * d;
      out.grads[l][j] = spec.weights[i] * 2.0 * d / n;
    }
    out.per_layer.push_back(sq / n);
    out.loss += spec.weights[i] * sq / n;
  }
  return out;
}

namespace {

double Norm(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

double Dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Adds g * d sim(a, b) / d a into `da`.
void AccumulateCosineGrad(std::span<const double> a, std::span<const double> b,
                          double g, std::span<double> da) {
  const double na = Norm(a), nb = Norm(b);
  const double s = Dot(a, b) / (na * nb);
  for (size_t i = 0; i < a.size(); ++i) {
    da[i] += g * (b[i] / (na * nb) - s * a[i] / (na * na));
  }
}

}  // namespace

double CosineSimilarity(std::span<const double> a, std::span<const double> b) {
  Require(a.size() == b.size(), "cosine: length mismatch");
  const double na = Norm(a), nb = Norm(b);
  Require(na > 0.0 && nb > 0.0, "cosine: zero-norm vector");
  return Dot(a, b) / (na * nb);
}

ContrastiveResult ContrastiveLoss(
    std::span<const double> c, std::span<const double> q,
    const std::vector<std::vector<double>>& distractors, double temperature) {
  Require(!distractors.empty(), "contrastive: need at least one distractor");
  Require(temperature > 0.0, "contrastive: temperature must be positive");
  const size_t k = distractors.size() + 1;
  std::vector<std::span<const double>> cand{q};
  for (const auto& d : distractors) cand.emplace_back(d);
  std::vector<double> logits(k);
  for (size_t i = 0; i < k; ++i) {
    logits[i] = CosineSimilarity(c, cand[i]) / temperature;
  }
  const double lse = LogSumExp(logits);
  ContrastiveResult out;
  out.loss = lse - logits[0];
  out.dc.assign(c.size(), 0.0);
  out.dq.assign(c.size(), 0.0);
  out.ddistractors.assign(distractors.size(), std::vector<double>(c.size()));
  for (size_t i = 0; i < k; ++i) {
    const double g = (std::exp(logits[i] - lse) - (i == 0 ? 1.0 : 0.0)) /
                     temperature;
    AccumulateCosineGrad(c, cand[i], g, out.dc);
    std::span<double> dx = i == 0 ? std::span<double>(out.dq)
                                   : std::span<double>(out.ddistractors[i - 1]);
    AccumulateCosineGrad(cand[i], c, g, dx);
  }
  return out;
}

MaskedContrastiveResult MaskedContrastive(const Array& context,
                                          const Array& targets,
                                          std::span<const size_t> masked,
                                          size_t distractors, uint64_t seed,
                                          double temperature) {
  Require(context.SameShape(targets) && context.rank() == 2,
          "contrastive: context and targets must be matching [T, D]");
  Require(masked.size() >= 2, "contrastive: need at least two masked frames");
  Require(distractors >= 1, "contrastive: need at least one distractor");
  MaskedContrastiveResult out;
  out.dcontext = Array(context.shape(), 0.0);
  Rng rng(seed);
  const double scale = 1.0 / static_cast<double>(masked.size());
  for (size_t i = 0; i < masked.size(); ++i) {
    const size_t t = masked[i];
    Require(t < context.rows(), "contrastive: masked frame out of range");
    std::vector<std::vector<double>> neg;
    for (size_t d = 0; d < distractors; ++d) {
      // Draw from the other masked frames.
      size_t j = static_cast<size_t>(rng.Int(0, static_cast<int64_t>(masked.size()) - 2));
      if (j >= i) ++j;
      const auto row = targets.row(masked[j]);
      neg.emplace_back(row.begin(), row.end());
    }
    ContrastiveResult r =
        ContrastiveLoss(context.row(t), targets.row(t), neg, temperature);
    out.loss += scale * r.loss;
    auto drow = out.dcontext.row(t);
    for (size_t k = 0; k < drow.size(); ++k) drow[k] += scale * r.dc[k];
  }
  return out;
}

double FrameAgreement(const Array& a, const Array& b) {
  Require(a.rank() == 2 && a.SameShape(b),
          "frame_agreement: posteriorgram shapes differ");
  Require(a.rows() > 0, "frame_agreement: empty posteriorgram");
  size_t same = 0;
  for (size_t t = 0; t < a.rows(); ++t) same += ArgMax(a.row(t)) == ArgMax(b.row(t));
  return static_cast<double>(same) / static_cast<double>(a.rows());
}

}  // namespace streamkd
