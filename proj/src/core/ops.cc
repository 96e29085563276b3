// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "core/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "core/error.h"

namespace streamkd {

namespace {

void RequireRank2(const Array& a, const char* what) {
  if (a.rank() != 2) {
    Fail(ErrorCode::kInvalidArgument,
         std::string(what) + ": expected a rank-2 array, got " +
             ShapeString(a.shape()));
  }
}

void RequireShape(const Array& a, const Array& b, const char* what) {
  if (!a.SameShape(b)) {
    Fail(ErrorCode::kInvalidArgument,
         std::string(what) + ": shape mismatch " + ShapeString(a.shape()) +
             " vs " + ShapeString(b.shape()));
  }
}

// Softmax of one row restricted to allowed keys; writes zeros elsewhere.
void SoftmaxRow(const double* logits, const uint8_t* allowed, size_t n,
                double* out) {
  double mx = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (size_t j = 0; j < n; ++j) {
    if (allowed[j]) {
      mx = std::max(mx, logits[j]);
      any = true;
    }
  }
  if (!any) Fail(ErrorCode::kEmptyReceptionField, "empty reception field");
  double sum = 0.0;
  for (size_t j = 0; j < n; ++j) {
    if (allowed[j]) {
      out[j] = std::exp(logits[j] - mx);
      sum += out[j];
    } else {
      out[j] = 0.0;
    }
  }
  const double inv = 1.0 / sum;
  for (size_t j = 0; j < n; ++j) {
    if (allowed[j]) out[j] *= inv;
  }
}

void SoftmaxRowBackward(const double* p, const double* dp,
                        const uint8_t* allowed, size_t n, double* dx) {
  double dot = 0.0;
  for (size_t j = 0; j < n; ++j) {
    if (allowed[j]) dot += p[j] * dp[j];
  }
  for (size_t j = 0; j < n; ++j) {
    dx[j] = allowed[j] ? p[j] * (dp[j] - dot) : 0.0;
  }
}

}  // namespace

Array MatMul(const Array& a, const Array& b) {
  RequireRank2(a, "MatMul");
  RequireRank2(b, "MatMul");
  Require(a.cols() == b.rows(), "MatMul: inner dimension mismatch " +
                                    ShapeString(a.shape()) + " * " +
                                    ShapeString(b.shape()));
  const size_t m = a.rows(), k = a.cols(), n = b.cols();
  Array c = Array::Matrix(m, n);
  for (size_t i = 0; i < m; ++i) {
    double* ci = c.data() + i * n;
    for (size_t p = 0; p < k; ++p) {
      const double aip = a(i, p);
      const double* bp = b.data() + p * n;
      for (size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
  return c;
}

Array MatMulTransA(const Array& a, const Array& b) {
  RequireRank2(a, "MatMulTransA");
  RequireRank2(b, "MatMulTransA");
  Require(a.rows() == b.rows(), "MatMulTransA: row mismatch");
  const size_t m = a.cols(), k = a.rows(), n = b.cols();
  Array c = Array::Matrix(m, n);
  for (size_t p = 0; p < k; ++p) {
    const double* bp = b.data() + p * n;
    for (size_t i = 0; i < m; ++i) {
      const double api = a(p, i);
      double* ci = c.data() + i * n;
      for (size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
  return c;
}

Array MatMulTransB(const Array& a, const Array& b) {
  RequireRank2(a, "MatMulTransB");
  RequireRank2(b, "MatMulTransB");
  Require(a.cols() == b.cols(), "MatMulTransB: column mismatch");
  const size_t m = a.rows(), k = a.cols(), n = b.rows();
  Array c = Array::Matrix(m, n);
  for (size_t i = 0; i < m; ++i) {
    const double* ai = a.data() + i * k;
    for (size_t j = 0; j < n; ++j) {
      const double* bj = b.data() + j * k;
      double s = 0.0;
      for (size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      c(i, j) = s;
    }
  }
  return c;
}

void AddRowVector(Array& x, const Array& bias) {
  RequireRank2(x, "AddRowVector");
  Require(bias.size() == x.cols(), "AddRowVector: bias length mismatch");
  for (size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
  }
}

void AccumulateColumnSums(const Array& x, Array& out) {
  RequireRank2(x, "AccumulateColumnSums");
  Require(out.size() == x.cols(), "AccumulateColumnSums: length mismatch");
  for (size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (size_t c = 0; c < row.size(); ++c) out[c] += row[c];
  }
}

void AddInPlace(Array& a, const Array& b) {
  RequireShape(a, b, "AddInPlace");
  for (size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

Array Transpose(const Array& x) {
  RequireRank2(x, "Transpose");
  Array t = Array::Matrix(x.cols(), x.rows());
  for (size_t r = 0; r < x.rows(); ++r)
    for (size_t c = 0; c < x.cols(); ++c) t(c, r) = x(r, c);
  return t;
}

Array Linear(const Array& x, const Array& w, const Array& b) {
  Array y = MatMul(x, w);
  AddRowVector(y, b);
  return y;
}

Array LinearBackward(const Array& x, const Array& w, const Array& dy,
                     Array& dw, Array& db) {
  AddInPlace(dw, MatMulTransA(x, dy));
  AccumulateColumnSums(dy, db);
  return MatMulTransB(dy, w);
}

// ---------------------------------------------------------------------------

Array MaskedSoftmax(const Array& logits, const AttentionMask& mask) {
  const size_t r = logits.rank();
  Require(r == 2 || r == 3, "MaskedSoftmax: logits must be rank 2 or 3");
  const size_t q = logits.dim(r - 2), k = logits.dim(r - 1);
  Require(q == mask.queries && k == mask.keys,
          "MaskedSoftmax: mask " + std::to_string(mask.queries) + "x" +
              std::to_string(mask.keys) + " does not match logits " +
              ShapeString(logits.shape()));
  const size_t heads = r == 3 ? logits.dim(0) : 1;
  Array out(logits.shape());
  for (size_t h = 0; h < heads; ++h) {
    for (size_t t = 0; t < q; ++t) {
      const size_t off = (h * q + t) * k;
      SoftmaxRow(logits.data() + off, mask.allowed.data() + t * k, k,
                 out.data() + off);
    }
  }
  return out;
}

Array MaskedSoftmaxBackward(const Array& probs, const Array& dprobs,
                            const AttentionMask& mask) {
  RequireShape(probs, dprobs, "MaskedSoftmaxBackward");
  const size_t r = probs.rank();
  const size_t q = probs.dim(r - 2), k = probs.dim(r - 1);
  const size_t heads = r == 3 ? probs.dim(0) : 1;
  Array dx(probs.shape());
  for (size_t h = 0; h < heads; ++h) {
    for (size_t t = 0; t < q; ++t) {
      const size_t off = (h * q + t) * k;
      SoftmaxRowBackward(probs.data() + off, dprobs.data() + off,
                         mask.allowed.data() + t * k, k, dx.data() + off);
    }
  }
  return dx;
}

AttentionResult MaskedAttention(const Array& q, const Array& k, const Array& v,
                                const AttentionMask& mask, double scale) {
  RequireRank2(q, "MaskedAttention");
  RequireRank2(k, "MaskedAttention");
  RequireRank2(v, "MaskedAttention");
  Require(k.rows() == v.rows(), "MaskedAttention: k/v length mismatch");
  Require(q.cols() == k.cols(), "MaskedAttention: q/k width mismatch");
  const size_t tq = q.rows(), tk = k.rows(), d = q.cols(), dv = v.cols();
  Require(mask.queries == tq && mask.keys == tk,
          "MaskedAttention: mask shape does not match sequence lengths");
  AttentionResult res{Array::Matrix(tq, dv), Array::Matrix(tq, tk)};
  std::vector<double> scores(tk);
  for (size_t t = 0; t < tq; ++t) {
    const uint8_t* allowed = mask.allowed.data() + t * tk;
    const double* qt = q.data() + t * d;
    for (size_t j = 0; j < tk; ++j) {
      if (!allowed[j]) continue;
      const double* kj = k.data() + j * d;
      double s = 0.0;
      for (size_t p = 0; p < d; ++p) s += qt[p] * kj[p];
      scores[j] = scale * s;
    }
    double* pt = res.probs.data() + t * tk;
    SoftmaxRow(scores.data(), allowed, tk, pt);
    double* ot = res.out.data() + t * dv;
    for (size_t j = 0; j < tk; ++j) {
      if (!allowed[j]) continue;
      const double* vj = v.data() + j * dv;
      for (size_t p = 0; p < dv; ++p) ot[p] += pt[j] * vj[p];
    }
  }
  return res;
}

AttentionGrads MaskedAttentionBackward(const Array& q, const Array& k,
                                       const Array& v, const Array& probs,
                                       const Array& dout,
                                       const AttentionMask& mask,
                                       double scale) {
  const size_t tq = q.rows(), tk = k.rows(), d = q.cols(), dv = v.cols();
  AttentionGrads g{Array(q.shape()), Array(k.shape()), Array(v.shape())};
  std::vector<double> dp(tk), ds(tk);
  for (size_t t = 0; t < tq; ++t) {
    const uint8_t* allowed = mask.allowed.data() + t * tk;
    const double* pt = probs.data() + t * tk;
    const double* dot = dout.data() + t * dv;
    for (size_t j = 0; j < tk; ++j) {
      if (!allowed[j]) {
        dp[j] = 0.0;
        continue;
      }
      const double* vj = v.data() + j * dv;
      double s = 0.0;
      for (size_t p = 0; p < dv; ++p) s += dot[p] * vj[p];
      dp[j] = s;
      double* dvj = g.dv.data() + j * dv;
      for (size_t p = 0; p < dv; ++p) dvj[p] += pt[j] * dot[p];
    }
    SoftmaxRowBackward(pt, dp.data(), allowed, tk, ds.data());
    const double* qt = q.data() + t * d;
    double* dqt = g.dq.data() + t * d;
    for (size_t j = 0; j < tk; ++j) {
      if (!allowed[j]) continue;
      const double c = scale * ds[j];
      const double* kj = k.data() + j * d;
      double* dkj = g.dk.data() + j * d;
      for (size_t p = 0; p < d; ++p) {
        dqt[p] += c * kj[p];
        dkj[p] += c * qt[p];
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

Array LayerNorm(const Array& x, const Array& gain, const Array& bias,
                double eps, LayerNormCache* cache) {
  RequireRank2(x, "LayerNorm");
  const size_t rows = x.rows(), d = x.cols();
  Require(d >= 1, "LayerNorm: empty feature dimension");
  Require(gain.size() == d && bias.size() == d,
          "LayerNorm: gain/bias length mismatch");
  Array y = Array::Matrix(rows, d);
  Array normalized = Array::Matrix(rows, d);
  std::vector<double> rstd(rows);
  for (size_t r = 0; r < rows; ++r) {
    auto xr = x.row(r);
    double mean = 0.0;
    for (double v : xr) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (size_t c = 0; c < d; ++c) {
      const double n = (xr[c] - mean) * rstd[r];
      normalized(r, c) = n;
      y(r, c) = n * gain[c] + bias[c];
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->rstd = std::move(rstd);
  }
  return y;
}

LayerNormGrads LayerNormBackward(const Array& dy, const Array& gain,
                                 const LayerNormCache& cache) {
  const Array& n = cache.normalized;
  RequireShape(dy, n, "LayerNormBackward");
  const size_t rows = n.rows(), d = n.cols();
  LayerNormGrads g{Array::Matrix(rows, d), Array::Vector(d), Array::Vector(d)};
  std::vector<double> dn(d);
  for (size_t r = 0; r < rows; ++r) {
    double mean_dn = 0.0, mean_dn_n = 0.0;
    for (size_t c = 0; c < d; ++c) {
      dn[c] = dy(r, c) * gain[c];
      mean_dn += dn[c];
      mean_dn_n += dn[c] * n(r, c);
      g.dgain[c] += dy(r, c) * n(r, c);
      g.dbias[c] += dy(r, c);
    }
    mean_dn /= static_cast<double>(d);
    mean_dn_n /= static_cast<double>(d);
    for (size_t c = 0; c < d; ++c) {
      g.dx(r, c) = cache.rstd[r] * (dn[c] - mean_dn - n(r, c) * mean_dn_n);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

Array BatchNormPure(const Array& x, const BatchNormState& state,
                    NormPhase phase, const Array& gain, const Array& bias,
                    double eps, BatchNormCache* cache) {
  Require(x.rank() == 2 || x.rank() == 3,
          "BatchNorm: input must be [T, D] or [N, T, D]");
  const size_t d = x.dim(x.rank() - 1);
  const size_t m = x.size() / std::max<size_t>(d, 1);
  Require(gain.size() == d && bias.size() == d,
          "BatchNorm: gain/bias length mismatch");
  BatchNormCache c;
  c.phase = phase;
  c.count = m;
  c.rstd = Array::Vector(d);
  Array mean = Array::Vector(d), var = Array::Vector(d);
  if (phase == NormPhase::kTrain) {
    Require(m >= 2, "BatchNorm: train phase needs at least 2 positions");
    for (size_t i = 0; i < m; ++i)
      for (size_t ch = 0; ch < d; ++ch) mean[ch] += x[i * d + ch];
    for (size_t ch = 0; ch < d; ++ch) mean[ch] /= static_cast<double>(m);
    for (size_t i = 0; i < m; ++i) {
      for (size_t ch = 0; ch < d; ++ch) {
        const double dev = x[i * d + ch] - mean[ch];
        var[ch] += dev * dev;
      }
    }
    for (size_t ch = 0; ch < d; ++ch) var[ch] /= static_cast<double>(m);
    c.batch_mean = mean;
    c.batch_var = var;
  } else {
    if (!state.initialized) {
      Fail(ErrorCode::kInvalidArgument,
           "BatchNorm: infer phase requires initialized running statistics");
    }
    Require(state.running_mean.size() == d && state.running_var.size() == d,
            "BatchNorm: running statistics length mismatch");
    mean = state.running_mean;
    var = state.running_var;
  }
  for (size_t ch = 0; ch < d; ++ch) c.rstd[ch] = 1.0 / std::sqrt(var[ch] + eps);
  Array y(x.shape());
  c.normalized = Array(x.shape());
  for (size_t i = 0; i < m; ++i) {
    for (size_t ch = 0; ch < d; ++ch) {
      const double n = (x[i * d + ch] - mean[ch]) * c.rstd[ch];
      c.normalized[i * d + ch] = n;
      y[i * d + ch] = n * gain[ch] + bias[ch];
    }
  }
  if (cache) *cache = std::move(c);
  return y;
}

void UpdateRunningStats(BatchNormState& state, const BatchNormCache& cache) {
  if (cache.phase != NormPhase::kTrain) return;
  const size_t d = cache.batch_mean.size();
  if (state.running_mean.size() != d) state = BatchNormState::Zero(d);
  const double m = state.momentum;
  const double unbias = static_cast<double>(cache.count) /
                        static_cast<double>(cache.count - 1);
  for (size_t ch = 0; ch < d; ++ch) {
    state.running_mean[ch] =
        (1.0 - m) * state.running_mean[ch] + m * cache.batch_mean[ch];
    state.running_var[ch] =
        (1.0 - m) * state.running_var[ch] + m * cache.batch_var[ch] * unbias;
  }
  state.initialized = true;
}

Array BatchNorm(const Array& x, BatchNormState& state, NormPhase phase,
                const Array& gain, const Array& bias, double eps,
                BatchNormCache* cache) {
  BatchNormCache local;
  Array y = BatchNormPure(x, state, phase, gain, bias, eps, &local);
  UpdateRunningStats(state, local);
  if (cache) *cache = std::move(local);
  return y;
}

BatchNormGrads BatchNormBackward(const Array& dy, const Array& gain,
                                 const BatchNormCache& cache) {
  RequireShape(dy, cache.normalized, "BatchNormBackward");
  const size_t d = cache.rstd.size();
  const size_t m = cache.count;
  BatchNormGrads g{Array(dy.shape()), Array::Vector(d), Array::Vector(d)};
  std::vector<double> mean_dn(d, 0.0), mean_dn_n(d, 0.0);
  for (size_t i = 0; i < m; ++i) {
    for (size_t ch = 0; ch < d; ++ch) {
      const double dyv = dy[i * d + ch];
      const double n = cache.normalized[i * d + ch];
      g.dgain[ch] += dyv * n;
      g.dbias[ch] += dyv;
      mean_dn[ch] += dyv * gain[ch];
      mean_dn_n[ch] += dyv * gain[ch] * n;
    }
  }
  for (size_t ch = 0; ch < d; ++ch) {
    mean_dn[ch] /= static_cast<double>(m);
    mean_dn_n[ch] /= static_cast<double>(m);
  }
  for (size_t i = 0; i < m; ++i) {
    for (size_t ch = 0; ch < d; ++ch) {
      const double dn = dy[i * d + ch] * gain[ch];
      if (cache.phase == NormPhase::kTrain) {
        const double n = cache.normalized[i * d + ch];
        g.dx[i * d + ch] =
            cache.rstd[ch] * (dn - mean_dn[ch] - n * mean_dn_n[ch]);
      } else {
        g.dx[i * d + ch] = cache.rstd[ch] * dn;
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

ConvPadding ConvPad(size_t kernel, ConvMode mode) {
  if (mode == ConvMode::kCausal) return {kernel - 1, 0};
  const size_t left = kernel / 2;
  return {left, kernel - 1 - left};
}

Array Conv1d(const Array& x, const Array& kernel, const Array* bias,
             ConvMode mode) {
  RequireRank2(x, "Conv1d");
  Require(kernel.rank() == 3, "Conv1d: kernel must be [K, D, E]");
  const size_t t_len = x.rows(), d = x.cols();
  const size_t kw = kernel.dim(0), e = kernel.dim(2);
  Require(kw >= 1, "Conv1d: kernel width must be >= 1");
  Require(kernel.dim(1) == d, "Conv1d: kernel input width mismatch");
  const ConvPadding pad = ConvPad(kw, mode);
  Array y = Array::Matrix(t_len, e);
  for (size_t t = 0; t < t_len; ++t) {
    double* yt = y.data() + t * e;
    if (bias) {
      for (size_t o = 0; o < e; ++o) yt[o] = (*bias)[o];
    }
    for (size_t k = 0; k < kw; ++k) {
      // Source frame t + k - left, skipped when it falls in the zero padding.
      const ptrdiff_t src = static_cast<ptrdiff_t>(t + k) -
                            static_cast<ptrdiff_t>(pad.left);
      if (src < 0 || src >= static_cast<ptrdiff_t>(t_len)) continue;
      const double* xs = x.data() + static_cast<size_t>(src) * d;
      for (size_t c = 0; c < d; ++c) {
        const double xv = xs[c];
        const double* w = kernel.data() + (k * d + c) * e;
        for (size_t o = 0; o < e; ++o) yt[o] += xv * w[o];
      }
    }
  }
  return y;
}

Conv1dGrads Conv1dBackward(const Array& x, const Array& kernel,
                           const Array& dy, ConvMode mode) {
  const size_t t_len = x.rows(), d = x.cols();
  const size_t kw = kernel.dim(0), e = kernel.dim(2);
  const ConvPadding pad = ConvPad(kw, mode);
  Conv1dGrads g{Array(x.shape()), Array(kernel.shape()), Array::Vector(e)};
  for (size_t t = 0; t < t_len; ++t) {
    const double* dyt = dy.data() + t * e;
    for (size_t o = 0; o < e; ++o) g.dbias[o] += dyt[o];
    for (size_t k = 0; k < kw; ++k) {
      const ptrdiff_t src = static_cast<ptrdiff_t>(t + k) -
                            static_cast<ptrdiff_t>(pad.left);
      if (src < 0 || src >= static_cast<ptrdiff_t>(t_len)) continue;
      const double* xs = x.data() + static_cast<size_t>(src) * d;
      double* dxs = g.dx.data() + static_cast<size_t>(src) * d;
      for (size_t c = 0; c < d; ++c) {
        const double* w = kernel.data() + (k * d + c) * e;
        double* dw = g.dkernel.data() + (k * d + c) * e;
        double acc = 0.0;
        for (size_t o = 0; o < e; ++o) {
          acc += w[o] * dyt[o];
          dw[o] += xs[c] * dyt[o];
        }
        dxs[c] += acc;
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

Array Gelu(const Array& x) {
  Array y(x.shape());
  for (size_t i = 0; i < x.size(); ++i) {
    y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * std::numbers::sqrt2 / 2.0));
  }
  return y;
}

Array GeluBackward(const Array& x, const Array& dy) {
  RequireShape(x, dy, "GeluBackward");
  Array dx(x.shape());
  const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  for (size_t i = 0; i < x.size(); ++i) {
    const double cdf = 0.5 * (1.0 + std::erf(x[i] * std::numbers::sqrt2 / 2.0));
    const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x[i] * x[i]);
    dx[i] = dy[i] * (cdf + x[i] * pdf);
  }
  return dx;
}

Array LogSoftmax(const Array& logits) {
  RequireRank2(logits, "LogSoftmax");
  Array y(logits.shape());
  for (size_t r = 0; r < logits.rows(); ++r) {
    auto in = logits.row(r);
    const double lse = LogSumExp(in);
    auto out = y.row(r);
    for (size_t c = 0; c < in.size(); ++c) out[c] = in[c] - lse;
  }
  return y;
}

Array LogSoftmaxBackward(const Array& y, const Array& dy) {
  RequireShape(y, dy, "LogSoftmaxBackward");
  Array dx(y.shape());
  for (size_t r = 0; r < y.rows(); ++r) {
    double sum = 0.0;
    for (double v : dy.row(r)) sum += v;
    for (size_t c = 0; c < y.cols(); ++c) {
      dx(r, c) = dy(r, c) - std::exp(y(r, c)) * sum;
    }
  }
  return dx;
}

double LogSumExp(std::span<const double> v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

double LogAdd(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double mx = std::max(a, b);
  return mx + std::log1p(std::exp(-std::abs(a - b)));
}

size_t ArgMax(std::span<const double> v) {
  size_t best = 0;
  for (size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace streamkd
