// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "core/error.h"
#include "core/gradcheck.h"
#include "core/ops.h"
#include "core/optim.h"
#include "support.h"

namespace streamkd {
namespace {

using testing::MaxAbsDiff;
using testing::RandomArray;
using testing::RandomMask;
using testing::RandomMatrix;

ErrorCode CodeOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kInternal;
}

TEST(MaskedSoftmax, UniformAndSingleAllowed) {
  AttentionMask full(1, 2, true);
  Array p = MaskedSoftmax(Array({1, 2}, {0.0, 0.0}), full);
  EXPECT_EQ(p[0], 0.5);
  EXPECT_EQ(p[1], 0.5);

  AttentionMask one(1, 2, true);
  one.Set(0, 1, false);
  p = MaskedSoftmax(Array({1, 2}, {5.0, -3.0}), one);
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(p[1], 0.0);
}

TEST(MaskedSoftmax, EmptyRowIsAnError) {
  AttentionMask m(2, 2, true);
  m.Set(1, 0, false);
  m.Set(1, 1, false);
  EXPECT_EQ(CodeOf([&] { MaskedSoftmax(Array::Matrix(2, 2), m); }),
            ErrorCode::kEmptyReceptionField);
}

TEST(MaskedSoftmax, MatchesDirectFormula) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Array logits = RandomMatrix(rng, 4, 4, 3.0);
    const AttentionMask mask = RandomMask(rng, 4, 4);
    const Array p = MaskedSoftmax(logits, mask);
    for (size_t t = 0; t < 4; ++t) {
      double z = 0.0, sum = 0.0;
      for (size_t j = 0; j < 4; ++j) {
        if (mask(t, j)) z += std::exp(logits(t, j));
      }
      for (size_t j = 0; j < 4; ++j) {
        const double want = mask(t, j) ? std::exp(logits(t, j)) / z : 0.0;
        if (!mask(t, j)) EXPECT_EQ(p(t, j), 0.0);
        EXPECT_NEAR(p(t, j), want, 1e-12);
        sum += p(t, j);
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(MaskedAttention, MatchesDirectLoopOverKeys) {
  Rng rng(5);
  const Array q = RandomMatrix(rng, 5, 3), k = RandomMatrix(rng, 5, 3),
              v = RandomMatrix(rng, 5, 4);
  const AttentionMask mask = RandomMask(rng, 5, 5);
  const double scale = 1.0 / std::sqrt(3.0);
  const Array got = MaskedAttention(q, k, v, mask, scale).out;
  EXPECT_LT(MaxAbsDiff(got, testing::OracleAttention(q, k, v, mask, scale)), 1e-12);
}

TEST(MaskedAttention, SingleFrameCopiesValue) {
  Rng rng(6);
  const Array q = RandomMatrix(rng, 1, 3), k = RandomMatrix(rng, 1, 3),
              v = RandomMatrix(rng, 1, 3);
  const Array out = MaskedAttention(q, k, v, AttentionMask::Full(1), 0.5).out;
  EXPECT_EQ(out, v);
}

TEST(LayerNorm, Examples) {
  const Array one = Array::Vector(2, 1.0), zero = Array::Vector(2, 0.0);
  Array y = LayerNorm(Array({1, 2}, {3.0, 3.0}), one, zero, 1e-5);
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 0.0);
  y = LayerNorm(Array({1, 2}, {1.0, -1.0}), one, zero, 0.0);
  EXPECT_EQ(y[0], 1.0);
  EXPECT_EQ(y[1], -1.0);
}

TEST(LayerNorm, MatchesDirectFormula) {
  Rng rng(7);
  const Array x = RandomMatrix(rng, 3, 6, 2.0);
  const Array g = RandomArray(rng, {6}), b = RandomArray(rng, {6});
  const double eps = 1e-5;
  const Array y = LayerNorm(x, g, b, eps);
  for (size_t t = 0; t < 3; ++t) {
    double mean = 0.0, var = 0.0;
    for (size_t c = 0; c < 6; ++c) mean += x(t, c) / 6.0;
    for (size_t c = 0; c < 6; ++c) var += (x(t, c) - mean) * (x(t, c) - mean) / 6.0;
    for (size_t c = 0; c < 6; ++c) {
      EXPECT_NEAR(y(t, c), (x(t, c) - mean) / std::sqrt(var + eps) * g[c] + b[c], 1e-12);
    }
  }
}

TEST(BatchNorm, ConstantChannelAndIdentity) {
  const Array one = Array::Vector(2, 1.0), zero = Array::Vector(2, 0.0);
  BatchNormState st = BatchNormState::Zero(2);
  Array x({2, 3, 2}, {4, 1, 4, 2, 4, 3, 4, 4, 4, 5, 4, 6});
  Array y = BatchNorm(x, st, NormPhase::kTrain, one, zero, 1e-5);
  for (size_t i = 0; i < 6; ++i) EXPECT_EQ(y[2 * i], 0.0);
  EXPECT_TRUE(st.initialized);

  BatchNormState id = BatchNormState::Zero(2);
  id.initialized = true;
  Rng rng(3);
  const Array r = RandomMatrix(rng, 4, 2);
  y = BatchNorm(r, id, NormPhase::kInfer, one, zero, 0.0);
  EXPECT_EQ(y, r);
}

TEST(BatchNorm, InferWithoutStatsFails) {
  BatchNormState st = BatchNormState::Zero(2);
  EXPECT_THROW(BatchNorm(Array::Matrix(3, 2), st, NormPhase::kInfer, Array::Vector(2, 1.0),
                         Array::Vector(2), 1e-5),
               Error);
}

TEST(BatchNorm, MatchesDirectStatistics) {
  Rng rng(8);
  const Array x = RandomArray(rng, {3, 4, 5}, 2.0);
  const Array g = RandomArray(rng, {5}), b = RandomArray(rng, {5});
  BatchNormState st = BatchNormState::Zero(5);
  const Array y = BatchNorm(x, st, NormPhase::kTrain, g, b, 1e-5);
  for (size_t c = 0; c < 5; ++c) {
    double mean = 0.0, var = 0.0;
    for (size_t i = 0; i < 12; ++i) mean += x[i * 5 + c] / 12.0;
    for (size_t i = 0; i < 12; ++i) var += std::pow(x[i * 5 + c] - mean, 2) / 12.0;
    for (size_t i = 0; i < 12; ++i) {
      EXPECT_NEAR(y[i * 5 + c], (x[i * 5 + c] - mean) / std::sqrt(var + 1e-5) * g[c] + b[c],
                  1e-10);
    }
  }
}

Array OracleConv(const Array& x, const Array& w, size_t left) {
  const size_t kw = w.dim(0), d = w.dim(1), e = w.dim(2);
  Array y = Array::Matrix(x.rows(), e);
  for (size_t t = 0; t < x.rows(); ++t) {
    for (size_t k = 0; k < kw; ++k) {
      const long src = static_cast<long>(t + k) - static_cast<long>(left);
      if (src < 0 || src >= static_cast<long>(x.rows())) continue;
      for (size_t c = 0; c < d; ++c) {
        for (size_t o = 0; o < e; ++o) y(t, o) += x(src, c) * w(k, c, o);
      }
    }
  }
  return y;
}

TEST(Conv1d, IdentityKernel) {
  Rng rng(9);
  const Array x = RandomMatrix(rng, 5, 3);
  Array w({1, 3, 3});
  for (size_t c = 0; c < 3; ++c) w(0, c, c) = 1.0;
  EXPECT_EQ(Conv1d(x, w, nullptr, ConvMode::kCausal), x);
  EXPECT_EQ(Conv1d(x, w, nullptr, ConvMode::kSymmetric), x);
}

TEST(Conv1d, MatchesSlidingWindow) {
  Rng rng(10);
  const Array x = RandomMatrix(rng, 7, 3);
  for (size_t kw : {3u, 4u}) {
    const Array w = RandomArray(rng, {kw, 3, 2});
    EXPECT_LT(MaxAbsDiff(Conv1d(x, w, nullptr, ConvMode::kCausal), OracleConv(x, w, kw - 1)),
              1e-12);
    EXPECT_LT(MaxAbsDiff(Conv1d(x, w, nullptr, ConvMode::kSymmetric), OracleConv(x, w, kw / 2)),
              1e-12);
  }
}

TEST(Conv1d, CausalKernel24IgnoresFuture) {
  Rng rng(12);
  const Array x = RandomMatrix(rng, 30, 2);
  const Array w = RandomArray(rng, {24, 2, 2});
  const Array base = Conv1d(x, w, nullptr, ConvMode::kCausal);
  for (size_t j = 1; j < 30; ++j) {
    Array y = x;
    y(j, 0) += 3.0;
    const Array out = Conv1d(y, w, nullptr, ConvMode::kCausal);
    for (size_t t = 0; t < j; ++t) {
      EXPECT_EQ(out(t, 0), base(t, 0));
      EXPECT_EQ(out(t, 1), base(t, 1));
    }
  }
}

TEST(Gelu, ExactErfForm) {
  const Array y = Gelu(Array({3}, {-1.0, 0.0, 2.0}));
  for (size_t i = 0; i < 3; ++i) {
    const double x = std::vector<double>{-1.0, 0.0, 2.0}[i];
    EXPECT_NEAR(y[i], x * 0.5 * std::erfc(-x / std::numbers::sqrt2), 1e-15);
  }
}

// Weighted sum of the output; weights fixed per test.
double Project(const Array& y, const Array& w) {
  double s = 0.0;
  for (size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
  return s;
}

TEST(GradCheck, IdenticalMseHasZeroGradient) {
  Rng rng(1);
  const Array a = RandomMatrix(rng, 3, 3);
  ScalarFn fn = [&](const std::vector<Array>& in, std::vector<Array>* g) {
    double s = 0.0;
    Array d(in[0].shape());
    for (size_t i = 0; i < a.size(); ++i) {
      s += (in[0][i] - a[i]) * (in[0][i] - a[i]);
      d[i] = 2 * (in[0][i] - a[i]);
    }
    if (g) g->assign(1, d);
    return s;
  };
  GradCheckOptions opt;
  opt.abs_floor = 1.0;
  const GradCheckResult r = CheckGradient(fn, {a}, opt);
  EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(GradCheck, MaskedSoftmaxCrossEntropy) {
  Rng rng(2);
  const AttentionMask mask = RandomMask(rng, 3, 3);
  ScalarFn fn = [&](const std::vector<Array>& in, std::vector<Array>* g) {
    const Array p = MaskedSoftmax(in[0], mask);
    double loss = 0.0;
    Array dp(p.shape());
    for (size_t t = 0; t < 3; ++t) {
      for (size_t j = 0; j < 3; ++j) {
        if (mask(t, j) && p(t, j) > 0) {
          loss -= std::log(p(t, j)) / 3.0;
          dp(t, j) = -1.0 / (3.0 * p(t, j));
        }
      }
    }
    if (g) g->assign(1, MaskedSoftmaxBackward(p, dp, mask));
    return loss;
  };
  EXPECT_LT(CheckGradient(fn, {RandomMatrix(rng, 3, 3)}).max_rel_error, 1e-6);
}

TEST(GradCheck, LinearGeluLogSoftmax) {
  Rng rng(3);
  const Array wout = RandomMatrix(rng, 4, 3);
  ScalarFn fn = [&](const std::vector<Array>& in, std::vector<Array>* g) {
    const Array h = Linear(in[0], in[1], in[2]);
    const Array a = Gelu(h);
    const Array y = LogSoftmax(a);
    if (g) {
      Array dw(in[1].shape()), db(in[2].shape());
      const Array da = LogSoftmaxBackward(y, wout);
      const Array dh = GeluBackward(h, da);
      const Array dx = LinearBackward(in[0], in[1], dh, dw, db);
      *g = {dx, dw, db};
    }
    return Project(y, wout);
  };
  const GradCheckResult r =
      CheckGradient(fn, {RandomMatrix(rng, 4, 5), RandomMatrix(rng, 5, 3), RandomArray(rng, {3})});
  EXPECT_LE(r.max_rel_error, 1e-5);
}

TEST(AdamStep, ZeroGradientKeepsParams) {
  ParamMap p{{"w", Array({2}, {1.0, -2.0})}};
  ParamMap g{{"w", Array({2}, {0.0, 0.0})}};
  AdamState st;
  st.m["w"] = Array({2}, {0.5, 0.5});
  st.v["w"] = Array({2}, {0.25, 0.25});
  TrainConfig cfg;
  AdamStep(p, g, st, 1e-3, cfg);
  EXPECT_EQ(st.m["w"][0], 0.9 * 0.5);
  EXPECT_EQ(st.v["w"][0], 0.98 * 0.25);
  ParamMap fresh{{"w", Array({2}, {1.0, -2.0})}};
  AdamState st2;
  AdamStep(fresh, g, st2, 1e-3, cfg);
  EXPECT_EQ(fresh["w"], Array({2}, {1.0, -2.0}));
}

TEST(AdamStep, FirstStepHasMagnitudeLr) {
  ParamMap p{{"w", Array({3}, {0.0, 0.0, 0.0})}};
  ParamMap g{{"w", Array({3}, {0.3, -4.0, 1e-3})}};
  AdamState st;
  AdamStep(p, g, st, 0.01, TrainConfig{});
  EXPECT_NEAR(p["w"][0], -0.01, 1e-9);
  EXPECT_NEAR(p["w"][1], 0.01, 1e-9);
  EXPECT_NEAR(p["w"][2], -0.01, 1e-7);
}

// Second implementation: a vector sweep written from the update equations.
TEST(AdamStep, MatchesLoopImplementationBitExactly) {
  Rng rng(4);
  TrainConfig cfg;
  ParamMap p{{"a", RandomMatrix(rng, 3, 2)}, {"b", RandomArray(rng, {4})}};
  ParamMap ref = p;
  std::map<std::string, std::vector<double>> m, v;
  AdamState st;
  for (int step = 1; step <= 5; ++step) {
    ParamMap g{{"a", RandomMatrix(rng, 3, 2)}, {"b", RandomArray(rng, {4})}};
    AdamStep(p, g, st, 0.01, cfg);
    const double c1 = 1.0 - std::pow(cfg.beta1, step), c2 = 1.0 - std::pow(cfg.beta2, step);
    for (auto& [name, arr] : ref) {
      auto& mm = m[name];
      auto& vv = v[name];
      mm.resize(arr.size(), 0.0);
      vv.resize(arr.size(), 0.0);
      std::vector<double> gv = g[name].storage();
      for (size_t i = 0; i < gv.size(); ++i) {
        mm[i] = cfg.beta1 * mm[i] + (1.0 - cfg.beta1) * gv[i];
        vv[i] = cfg.beta2 * vv[i] + (1.0 - cfg.beta2) * gv[i] * gv[i];
        arr[i] -= 0.01 * (mm[i] / c1) / (std::sqrt(vv[i] / c2) + cfg.eps);
      }
    }
  }
  EXPECT_EQ(p, ref);
}

TEST(AdamStep, NonFiniteGradientFailsBeforeUpdate) {
  ParamMap p{{"w", Array({2}, {1.0, 2.0})}};
  ParamMap g{{"w", Array({2}, {0.1, std::nan("")})}};
  AdamState st;
  EXPECT_EQ(CodeOf([&] { AdamStep(p, g, st, 0.1, TrainConfig{}); }), ErrorCode::kNumeric);
  EXPECT_EQ(p["w"], Array({2}, {1.0, 2.0}));
  EXPECT_EQ(st.step, 0u);
}

TEST(TriStageLr, Breakpoints) {
  TrainConfig cfg;
  cfg.updates = 80000;
  cfg.peak_lr = 2e-5;
  EXPECT_DOUBLE_EQ(TriStageLr(8000, cfg), 2e-5);
  EXPECT_DOUBLE_EQ(TriStageLr(24000, cfg), 2e-5);
  EXPECT_EQ(TriStageLr(80000, cfg), 0.0);
  EXPECT_EQ(TriStageLr(0, cfg), 0.0);
  EXPECT_NEAR(TriStageLr(60000, cfg), 1e-5, 1e-18);
  EXPECT_THROW(TriStageLr(80001, cfg), Error);
}

TEST(TriStageLr, IsContinuous) {
  TrainConfig cfg;
  cfg.updates = 1000;
  const double bound = cfg.peak_lr / (0.1 * 1000) * (1 + 1e-12);
  for (size_t s = 0; s < 1000; ++s) {
    EXPECT_LE(std::fabs(TriStageLr(s, cfg) - TriStageLr(s + 1, cfg)), bound);
  }
}

TEST(ClipGradNorm, ScalesToMaximum) {
  ParamMap g{{"a", Array({2}, {3.0, 0.0})}, {"b", Array({1}, {4.0})}};
  EXPECT_EQ(ClipGradNorm(g, 1.0), 5.0);
  EXPECT_NEAR(g["a"][0], 0.6, 1e-15);
  EXPECT_NEAR(g["b"][0], 0.8, 1e-15);
}

TEST(Array, NonFiniteIsNumericError) {
  Array a({2}, {1.0, INFINITY});
  EXPECT_EQ(CodeOf([&] { a.CheckFinite("a"); }), ErrorCode::kNumeric);
}

}  // namespace
}  // namespace streamkd
