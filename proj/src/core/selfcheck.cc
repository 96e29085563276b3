// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "core/selfcheck.h"

#include <cmath>
#include <cstdio>
#include <functional>

#include "core/beam_search.h"
#include "core/checkpoint.h"
#include "core/ctc.h"
#include "core/encoder.h"
#include "core/error.h"
#include "core/gradcheck.h"
#include "core/losses.h"
#include "core/masking.h"
#include "core/ngram.h"
#include "core/ops.h"
#include "core/rng.h"

namespace streamkd {

namespace {

std::string Fmt(const char* fmt, double v) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

Array RandomLogProbs(Rng& rng, size_t t, size_t v) {
  Array logits = Array::Matrix(t, v);
  for (double& x : logits.storage()) x = 2.0 * rng.Normal();
  return LogSoftmax(logits);
}

std::vector<int> RandomTarget(Rng& rng, size_t len, int v) {
  std::vector<int> out;
  for (size_t i = 0; i < len; ++i) out.push_back(static_cast<int>(rng.Int(1, v - 1)));
  return out;
}

CheckResult CheckEil() {
  const double s1 = Eil(MaskSpec::TimeRestricted(2), 12);
  const double s2 = Eil(MaskSpec::Chunk(48), 12);
  const double s3 = Eil(MaskSpec::Block(24, 12), 12);
  const double s4 = Eil(MaskSpec::Block(12, 18), 12);
  const bool ok = s1 == 480.0 && s2 == 480.0 && s3 == 480.0 && s4 == 480.0;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%g %g %g %g ms", s1, s2, s3, s4);
  return {"eil", ok, buf};
}

CheckResult CheckCtc(uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const size_t t = static_cast<size_t>(rng.Int(1, 6));
    const int v = static_cast<int>(rng.Int(2, 4));
    const Array lp = RandomLogProbs(rng, t, static_cast<size_t>(v));
    std::vector<int> target = RandomTarget(rng, static_cast<size_t>(rng.Int(0, 3)), v);
    if (MinCtcFrames(target) > t) continue;
    worst = std::max(worst, std::fabs(CtcLoss(lp, target).loss -
                                      CtcBruteForce(lp, target)));
  }
  return {"ctc_vs_brute_force", worst < 1e-10, Fmt("max diff %.3g", worst)};
}

CheckResult CheckEncoderGradient(uint64_t seed) {
  EncoderConfig cfg;
  cfg.input_dim = 4;
  cfg.layers = 2;
  cfg.model_dim = 8;
  cfg.heads = 2;
  cfg.ffn_dim = 8;
  cfg.vocab_size = 5;
  const ModelParams base = InitParams(cfg, seed);
  Rng rng(MixSeed(seed, 1));
  Array features = Array::Matrix(7, cfg.input_dim);
  for (double& x : features.storage()) x = rng.Normal();
  const std::vector<int> target = {1, 2, 2};
  const MaskSpec spec = MaskSpec::Block(2, 1);
  std::vector<std::string> names;
  std::vector<Array> inputs{features};
  for (const auto& [name, w] : base.weights) {
    names.push_back(name);
    inputs.push_back(w);
  }
  ScalarFn fn = [&](const std::vector<Array>& in, std::vector<Array>* grads) {
    ModelParams p = base;
    for (size_t i = 0; i < names.size(); ++i) p.weights[names[i]] = in[i + 1];
    ForwardCache cache;
    Forward(p, in[0], spec, {}, &cache);
    CtcResult r = CtcLoss(cache.log_probs, target);
    if (grads) {
      ParamMap g = ZeroLike(p);
      Array dx;
      Backward(p, cache, OutputGrads{&r.grad, nullptr}, g, &dx);
      grads->assign(1, dx);
      for (const std::string& n : names) grads->push_back(g.at(n));
    }
    return r.loss;
  };
  GradCheckOptions opt;
  opt.max_entries_per_input = 6;
  opt.seed = seed;
  const GradCheckResult r = CheckGradient(fn, inputs, opt);
  return {"encoder_gradient", r.max_rel_error <= 1e-5,
          Fmt("max rel error %.3g", r.max_rel_error)};
}

CheckResult CheckCausality(uint64_t seed) {
  EncoderConfig cfg;
  cfg.input_dim = 4;
  cfg.layers = 3;
  cfg.model_dim = 8;
  cfg.heads = 2;
  cfg.ffn_dim = 8;
  cfg.vocab_size = 5;
  const ModelParams p = InitParams(cfg, seed);
  Rng rng(MixSeed(seed, 2));
  const size_t frames = 12;
  Array x = Array::Matrix(frames, cfg.input_dim);
  for (double& v : x.storage()) v = rng.Normal();
  size_t violations = 0;
  for (const MaskSpec& spec : {MaskSpec::TimeRestricted(1), MaskSpec::Chunk(4),
                               MaskSpec::Block(4, 2)}) {
    const Array base = Forward(p, x, spec).log_probs;
    const auto rf = EncoderReceptionField(cfg, spec, frames);
    for (size_t j = 0; j < frames; ++j) {
      Array y = x;
      y(j, 0) += 1.0;
      const Array out = Forward(p, y, spec).log_probs;
      for (size_t t = 0; t < frames; ++t) {
        bool same = true;
        for (size_t c = 0; c < cfg.vocab_size; ++c) same &= out(t, c) == base(t, c);
        if (j > rf[t].latest && !same) ++violations;
        if (j == rf[t].latest && same) ++violations;
      }
    }
  }
  return {"lookahead_causality", violations == 0,
          std::to_string(violations) + " violations"};
}

CheckResult CheckBeamGreedy(uint64_t seed) {
  Rng rng(seed);
  size_t mismatches = 0;
  DecodeConfig cfg;
  cfg.beam_size = 1;
  for (int i = 0; i < 50; ++i) {
    const Array lp = RandomLogProbs(rng, static_cast<size_t>(rng.Int(1, 20)), 6);
    const auto hyps = PrefixBeamSearch(lp, cfg);
    mismatches += hyps.at(0).tokens != GreedyDecode(lp);
  }
  return {"beam1_equals_greedy", mismatches == 0,
          std::to_string(mismatches) + " mismatches"};
}

CheckResult CheckNgram(uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> vocab = {"<unk>", "a", "b", "c"};
  std::vector<std::vector<std::string>> corpus;
  for (int i = 0; i < 20; ++i) {
    std::vector<std::string> s;
    for (int k = rng.Int(0, 6); k > 0; --k) s.push_back(vocab[rng.Int(1, 3)]);
    corpus.push_back(s);
  }
  NgramOptions opt;
  opt.order = 3;
  const NgramModel m = NgramModel::Train(corpus, vocab, opt);
  double worst = 0.0;
  for (int n = 1; n <= m.order(); ++n) {
    for (const auto& [ctx, lp] : m.Table(n)) {
      double sum = 0.0;
      for (double v : lp) sum += std::exp(v);
      worst = std::max(worst, std::fabs(sum - 1.0));
    }
  }
  const NgramModel back = NgramModel::Parse(m.Serialize());
  const bool same = back.Serialize() == m.Serialize() &&
                    back.Score(corpus[0]) == m.Score(corpus[0]);
  return {"ngram_normalization_roundtrip", worst < 1e-9 && same,
          Fmt("max |sum-1| %.3g", worst)};
}

CheckResult CheckCheckpoint(uint64_t seed) {
  const ModelParams p = InitParams(EncoderConfig{}, seed);
  const ModelParams q = DeserializeCheckpoint(SerializeCheckpoint(p), nullptr);
  return {"checkpoint_roundtrip", p == q, p == q ? "bit-exact" : "differs"};
}

}  // namespace

std::vector<CheckResult> RunSelfCheck(uint64_t seed) {
  std::vector<std::function<CheckResult()>> checks = {
      [] { return CheckEil(); },
      [&] { return CheckCtc(seed); },
      [&] { return CheckEncoderGradient(seed); },
      [&] { return CheckCausality(seed); },
      [&] { return CheckBeamGreedy(seed); },
      [&] { return CheckNgram(seed); },
      [&] { return CheckCheckpoint(seed); },
  };
  std::vector<CheckResult> out;
  for (const auto& check : checks) {
    try {
      out.push_back(check());
    } catch (const Error& e) {
      out.push_back({"(error)", false, e.what()});
    }
  }
  return out;
}

std::string FormatSelfCheck(const std::vector<CheckResult>& results) {
  std::string out;
  for (const CheckResult& r : results) {
    out += (r.passed ? "[PASS] " : "[FAIL] ") + r.name + "  " + r.detail + "\n";
  }
  return out;
}

}  // namespace streamkd
