// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "core/trainer.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <memory>
#include <thread>

#include "core/ctc.h"
#include "core/error.h"
#include "core/metrics.h"
#include "core/ops.h"
#include "core/rng.h"
#include "core/tokens.h"

namespace streamkd {

void ParallelFor(size_t n, size_t jobs, const std::function<void(size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (size_t j = 0; j < std::min(jobs, n); ++j) threads.emplace_back(worker);
  for (std::thread& t : threads) t.join();
  // Report the failure of the lowest index, as a serial run would.
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

namespace {

using Clock = std::chrono::steady_clock;

double SecondsSince(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct ItemResult {
  double loss = 0.0;
  ParamMap grads;
  BatchNormCache bn;
  bool has_bn = false;
};

using ItemFn = std::function<void(const ModelParams&, size_t item,
                                  uint64_t seed, ItemResult&)>;

// Batches walk a fresh seeded permutation of the items each epoch.
class BatchSampler {
 public:
  BatchSampler(size_t items, uint64_t seed) : items_(items), seed_(seed) {}

  std::vector<size_t> Next(size_t batch) {
    std::vector<size_t> out;
    while (out.size() < batch) {
      if (cursor_ == order_.size()) Shuffle();
      out.push_back(order_[cursor_++]);
    }
    return out;
  }

 private:
  void Shuffle() {
    order_.resize(items_);
    for (size_t i = 0; i < items_; ++i) order_[i] = i;
    Rng rng(MixSeed(seed_, epoch_++));
    for (size_t i = items_; i > 1; --i) {
      const size_t j = static_cast<size_t>(rng.Int(0, static_cast<int64_t>(i) - 1));
      std::swap(order_[i - 1], order_[j]);
    }
    cursor_ = 0;
  }

  size_t items_;
  uint64_t seed_;
  uint64_t epoch_ = 0;
  std::vector<size_t> order_;
  size_t cursor_ = 0;
};

StageOutcome RunLoop(ModelParams model, size_t items, const TrainConfig& config,
                     size_t jobs, const ItemFn& fn) {
  config.Validate();
  const auto start = Clock::now();
  StageOutcome out;
  out.utterances = items;
  AdamState adam;
  BatchSampler sampler(items, MixSeed(config.seed, 0xba7c));
  const size_t batch = std::min(config.batch_size, items);
  for (size_t u = 0; u < config.updates; ++u) {
    const std::vector<size_t> picks = sampler.Next(batch);
    std::vector<ItemResult> results(picks.size());
    ParallelFor(picks.size(), jobs, [&](size_t i) {
      fn(model, picks[i], MixSeed(config.seed, (u << 16) | i), results[i]);
    });
    ParamMap total = ZeroLike(model);
    double loss = 0.0;
    for (ItemResult& r : results) {
      loss += r.loss;
      for (auto& [name, g] : r.grads) AddInPlace(total.at(name), g);
      if (r.has_bn) UpdateRunningStats(model.bn, r.bn);
    }
    const double scale = 1.0 / static_cast<double>(results.size());
    for (auto& [name, g] : total) {
      for (double& x : g.storage()) x *= scale;
    }
    ClipGradNorm(total, config.clip_norm);
    const double lr = TriStageLr(static_cast<double>(u + 1), config);
    AdamStep(model.weights, total, adam, lr, config);
    out.losses.push_back(loss * scale);
    out.lrs.push_back(lr);
  }
  out.model = std::move(model);
  out.seconds = SecondsSince(start);
  return out;
}

// Labeled utterances whose targets fit their frame count.
struct CtcItems {
  std::vector<const Utterance*> utts;
  std::vector<std::vector<int>> targets;
  size_t skipped = 0;
};

CtcItems CollectCtcItems(const std::vector<Utterance>& data) {
  Require(!data.empty(), "training data is empty");
  const Vocabulary& vocab = DefaultVocabulary();
  CtcItems items;
  for (const Utterance& u : data) {
    Require(u.has_label, "utterance " + u.id + " has no label");
    std::vector<int> target = vocab.Encode(u.label);
    if (MinCtcFrames(target) > u.features.rows()) {
      ++items.skipped;
      continue;
    }
    items.utts.push_back(&u);
    items.targets.push_back(std::move(target));
  }
  if (items.utts.empty()) {
    Fail(ErrorCode::kUnsatisfiable,
         "all " + std::to_string(data.size()) +
             " training utterances have targets longer than their frames allow");
  }
  return items;
}

ForwardOptions TrainOptions(uint64_t seed) {
  ForwardOptions opt;
  opt.training = true;
  opt.dropout_seed = seed;
  return opt;
}

void KeepBatchNorm(const ModelParams& model, const ForwardCache& cache,
                   ItemResult& r) {
  if (model.config.norm == FrontendNorm::kBatch) {
    r.bn = cache.batch_norm;
    r.has_bn = true;
  }
}

StageOutcome CtcLoop(const ModelParams& init, const MaskSpec& spec,
                     const std::vector<Utterance>& data,
                     const TrainConfig& config, size_t jobs,
                     const std::vector<Array>* guide, double alpha) {
  CtcItems items = CollectCtcItems(data);
  ModelParams model = init;
  model.mask = spec;
  StageOutcome out = RunLoop(
      std::move(model), items.utts.size(), config, jobs,
      [&](const ModelParams& m, size_t i, uint64_t seed, ItemResult& r) {
        ForwardCache cache;
        Forward(m, items.utts[i]->features, spec, TrainOptions(seed), &cache);
        Array grad;
        if (guide != nullptr) {
          GuidedCtcResult g =
              GuidedCtcLoss(cache.log_probs, items.targets[i], (*guide)[i], alpha);
          r.loss = g.loss;
          grad = std::move(g.grad);
        } else {
          CtcResult c = CtcLoss(cache.log_probs, items.targets[i]);
          r.loss = c.loss;
          grad = std::move(c.grad);
        }
        r.grads = ZeroLike(m);
        Backward(m, cache, OutputGrads{&grad, nullptr}, r.grads);
        KeepBatchNorm(m, cache, r);
      });
  out.skipped = items.skipped;
  return out;
}

}  // namespace

StageOutcome FinetuneCtc(const ModelParams& init, const MaskSpec& spec,
                         const std::vector<Utterance>& data,
                         const TrainConfig& config, size_t jobs) {
  spec.Validate();
  return CtcLoop(init, spec, data, config, jobs, nullptr, 0.0);
}

StageOutcome TrainGuidedTeacher(const ModelParams& pretrained,
                                const ModelParams& streaming,
                                const std::vector<Utterance>& data,
                                double alpha, const TrainConfig& config,
                                size_t jobs) {
  Require(streaming.mask.variant != Variant::kBidirectional,
          "guided-teacher: the guiding model must be streaming");
  Require(streaming.config.vocab_size == pretrained.config.vocab_size,
          "guided-teacher: vocabulary sizes differ");
  Require(std::isfinite(alpha) && alpha >= 0.0,
          "guided-teacher: alpha must be >= 0");
  CtcItems items = CollectCtcItems(data);
  std::vector<Array> guide(items.utts.size());
  ParallelFor(guide.size(), jobs, [&](size_t i) {
    guide[i] = GuideMask(
        Forward(streaming, items.utts[i]->features, streaming.mask).log_probs);
  });
  // Reuse the item filter: CtcLoop re-collects the same items in order.
  return CtcLoop(pretrained, MaskSpec::Bidirectional(), data, config, jobs,
                 &guide, alpha);
}

StageOutcome Distill(const ModelParams& pretrained, const ModelParams& teacher,
                     const ModelParams& head_source, const MaskSpec& spec,
                     const std::vector<Utterance>& data,
                     const DistillSpec& distill, const TrainConfig& config,
                     size_t jobs) {
  spec.Validate();
  Require(!data.empty(), "distill: training data is empty");
  Require(teacher.config.layers == pretrained.config.layers &&
              teacher.config.model_dim == pretrained.config.model_dim,
          "distill: teacher and student shapes differ");
  Require(head_source.config == pretrained.config,
          "distill: head source config differs from the student");
  distill.Validate(pretrained.config.layers);
  std::vector<std::vector<Array>> targets(data.size());
  ParallelFor(data.size(), jobs, [&](size_t i) {
    targets[i] = Forward(teacher, data[i].features, teacher.mask).hidden;
  });
  ModelParams model = pretrained;
  model.mask = spec;
  for (const std::string& name : HeadParamNames()) {
    model.weights.at(name) = head_source.weights.at(name);
  }
  return RunLoop(
      std::move(model), data.size(), config, jobs,
      [&](const ModelParams& m, size_t i, uint64_t seed, ItemResult& r) {
        ForwardCache cache;
        ForwardTrace trace =
            Forward(m, data[i].features, spec, TrainOptions(seed), &cache);
        DistillResult d = DistillationLoss(trace.hidden, targets[i], distill);
        r.loss = d.loss;
        r.grads = ZeroLike(m);
        Backward(m, cache, OutputGrads{nullptr, &d.grads}, r.grads);
        KeepBatchNorm(m, cache, r);
      });
}

StageOutcome ContrastivePretrain(const ModelParams& init,
                                 const std::vector<Utterance>& data,
                                 const ContrastiveConfig& contrastive,
                                 const TrainConfig& config, size_t jobs) {
  Require(!data.empty(), "pretrain: training data is empty");
  Require(contrastive.mask_probability > 0.0 &&
              contrastive.mask_probability < 1.0,
          "pretrain: mask probability must be in (0, 1)");
  for (const Utterance& u : data) {
    Require(u.features.rows() >= 2,
            "pretrain: utterance " + u.id + " is shorter than two frames");
  }
  ModelParams model = init;
  model.mask = MaskSpec::Bidirectional();
  return RunLoop(
      std::move(model), data.size(), config, jobs,
      [&](const ModelParams& m, size_t i, uint64_t seed, ItemResult& r) {
        const size_t frames = data[i].features.rows();
        Rng rng(MixSeed(seed, 0x3a5c));
        ForwardOptions opt = TrainOptions(seed);
        for (size_t t = 0; t < frames; ++t) {
          if (rng.Uniform() < contrastive.mask_probability) {
            opt.masked_frames.push_back(t);
          }
        }
        while (opt.masked_frames.size() < 2) {
          const size_t t = static_cast<size_t>(
              rng.Int(0, static_cast<int64_t>(frames) - 1));
          if (std::find(opt.masked_frames.begin(), opt.masked_frames.end(), t) ==
              opt.masked_frames.end()) {
            opt.masked_frames.push_back(t);
          }
        }
        std::sort(opt.masked_frames.begin(), opt.masked_frames.end());
        ForwardCache cache;
        ForwardTrace trace = Forward(m, data[i].features,
                                     MaskSpec::Bidirectional(), opt, &cache);
        MaskedContrastiveResult c =
            MaskedContrastive(trace.hidden.back(), trace.frontend,
                              opt.masked_frames, contrastive.distractors,
                              MixSeed(seed, 0xd157));
        r.loss = c.loss;
        std::vector<Array> dhidden(m.config.layers);
        dhidden.back() = std::move(c.dcontext);
        r.grads = ZeroLike(m);
        Backward(m, cache, OutputGrads{nullptr, &dhidden}, r.grads);
        KeepBatchNorm(m, cache, r);
      });
}

PseudoLabelOutcome PseudoLabel(const ModelParams& model, const NgramModel* lm,
                               const std::vector<Utterance>& unlabeled,
                               const DecodeConfig& decode, size_t jobs) {
  decode.Validate();
  const auto start = Clock::now();
  const Vocabulary& vocab = DefaultVocabulary();
  std::unique_ptr<NgramTokenLm> token_lm;
  if (lm != nullptr) token_lm = std::make_unique<NgramTokenLm>(*lm, vocab);
  std::vector<std::string> texts(unlabeled.size());
  ParallelFor(unlabeled.size(), jobs, [&](size_t i) {
    const Array lp = Forward(model, unlabeled[i].features, model.mask).log_probs;
    std::vector<Hypothesis> hyps = PrefixBeamSearch(lp, decode, token_lm.get());
    // Round-trip through text to normalize stray delimiters.
    if (!hyps.empty()) texts[i] = vocab.Decode(vocab.Encode(vocab.Decode(hyps[0].tokens)));
  });
  PseudoLabelOutcome out;
  for (size_t i = 0; i < unlabeled.size(); ++i) {
    if (texts[i].empty()) {
      ++out.dropped;
      continue;
    }
    Utterance u = unlabeled[i];
    u.has_label = true;
    u.label = texts[i];
    out.labeled.push_back(std::move(u));
  }
  out.seconds = SecondsSince(start);
  return out;
}

std::vector<Array> Posteriors(const ModelParams& model,
                              const std::vector<Utterance>& data, size_t jobs) {
  std::vector<Array> out(data.size());
  ParallelFor(data.size(), jobs, [&](size_t i) {
    out[i] = Forward(model, data[i].features, model.mask).log_probs;
  });
  return out;
}

double TokenErrorRate(const ModelParams& model,
                      const std::vector<Utterance>& data, size_t jobs) {
  const Vocabulary& vocab = DefaultVocabulary();
  const std::vector<Array> post = Posteriors(model, data, jobs);
  ErrorRate rate;
  for (size_t i = 0; i < data.size(); ++i) {
    const Utterance& u = data[i];
    Require(u.has_label || u.has_reference,
            "error rate: utterance " + u.id + " has no reference");
    const std::vector<int> ref = vocab.Encode(u.has_label ? u.label : u.reference);
    rate.AddTokens(ref, GreedyDecode(post[i]));
  }
  return rate.Rate();
}

double MeanFrameAgreement(const ModelParams& a, const ModelParams& b,
                          const std::vector<Utterance>& data, size_t jobs) {
  Require(!data.empty(), "frame agreement: no utterances");
  const std::vector<Array> pa = Posteriors(a, data, jobs);
  const std::vector<Array> pb = Posteriors(b, data, jobs);
  double same = 0.0, frames = 0.0;
  for (size_t i = 0; i < data.size(); ++i) {
    const double t = static_cast<double>(pa[i].rows());
    same += FrameAgreement(pa[i], pb[i]) * t;
    frames += t;
  }
  return same / frames;
}

}  // namespace streamkd
