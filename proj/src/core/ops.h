// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

// Dense forward operations with hand-derived reverse-mode gradients. Every
// backward function returns the vector-Jacobian product for the matching
// forward call.

#ifndef STREAMKD_CORE_OPS_H_
#define STREAMKD_CORE_OPS_H_

#include <cstddef>

#include "core/array.h"
#include "core/attention_mask.h"

namespace streamkd {

// ---------------------------------------------------------------------------
// Matrix helpers (rank-2 only).

Array MatMul(const Array& a, const Array& b);        // a * b
Array MatMulTransA(const Array& a, const Array& b);  // a^T * b
Array MatMulTransB(const Array& a, const Array& b);  // a * b^T
// x(r, c) += bias(c) for every row.
void AddRowVector(Array& x, const Array& bias);
// Column sums of x, accumulated into `out`.
void AccumulateColumnSums(const Array& x, Array& out);
// a += b, shapes must match.
void AddInPlace(Array& a, const Array& b);
Array Transpose(const Array& x);

// y = x * w + b.
Array Linear(const Array& x, const Array& w, const Array& b);
// Accumulates dw, db and returns dx.
Array LinearBackward(const Array& x, const Array& w, const Array& dy, Array& dw,
                     Array& db);

// ---------------------------------------------------------------------------
// Masked softmax over the last axis. Logits are [T, T'] or [H, T, T'] (the
// same mask applied to every head). Disallowed entries are exactly zero.
// Throws kEmptyReceptionField if a query row has no allowed key.

Array MaskedSoftmax(const Array& logits, const AttentionMask& mask);
Array MaskedSoftmaxBackward(const Array& probs, const Array& dprobs,
                            const AttentionMask& mask);

// Single-head scaled dot-product attention restricted by `mask`:
//   probs = masked_softmax(scale * q k^T),  out = probs * v.
// Sums run over allowed keys only, so values at masked keys never enter the
// arithmetic of a query row.
struct AttentionResult {
  Array out;
  Array probs;
};
AttentionResult MaskedAttention(const Array& q, const Array& k, const Array& v,
                                const AttentionMask& mask, double scale);
struct AttentionGrads {
  Array dq, dk, dv;
};
AttentionGrads MaskedAttentionBackward(const Array& q, const Array& k,
                                       const Array& v, const Array& probs,
                                       const Array& dout,
                                       const AttentionMask& mask, double scale);

// ---------------------------------------------------------------------------
// Layer normalization over the last axis of a [T, D] input.

struct LayerNormCache {
  Array normalized;          // (x - mean) * rstd
  std::vector<double> rstd;  // per row
};
Array LayerNorm(const Array& x, const Array& gain, const Array& bias,
                double eps, LayerNormCache* cache = nullptr);
struct LayerNormGrads {
  Array dx, dgain, dbias;
};
LayerNormGrads LayerNormBackward(const Array& dy, const Array& gain,
                                 const LayerNormCache& cache);

// ---------------------------------------------------------------------------
// Batch normalization over [N, T, D] (or [T, D], read as N = 1); statistics
// are per channel D over all N*T positions.

enum class NormPhase { kTrain, kInfer };

struct BatchNormState {
  Array running_mean;
  Array running_var;
  bool initialized = false;
  double momentum = 0.1;

  static BatchNormState Zero(size_t channels) {
    return {Array::Vector(channels), Array::Vector(channels, 1.0), false, 0.1};
  }
};

struct BatchNormCache {
  NormPhase phase = NormPhase::kInfer;
  Array normalized;  // pre-affine
  Array rstd;        // [D]
  Array batch_mean;  // [D], train phase only
  Array batch_var;   // [D], biased, train phase only
  size_t count = 0;  // N * T
};

// Train phase normalizes with batch statistics (N*T >= 2 required) and folds
// them into `state`; infer phase uses the running statistics and requires
// `state.initialized`.
Array BatchNorm(const Array& x, BatchNormState& state, NormPhase phase,
                const Array& gain, const Array& bias, double eps,
                BatchNormCache* cache = nullptr);
// Pure variant: never touches running statistics. The caller can fold the
// cached batch statistics in later with UpdateRunningStats.
Array BatchNormPure(const Array& x, const BatchNormState& state,
                    NormPhase phase, const Array& gain, const Array& bias,
                    double eps, BatchNormCache* cache = nullptr);
void UpdateRunningStats(BatchNormState& state, const BatchNormCache& cache);
struct BatchNormGrads {
  Array dx, dgain, dbias;
};
BatchNormGrads BatchNormBackward(const Array& dy, const Array& gain,
                                 const BatchNormCache& cache);

// ---------------------------------------------------------------------------
// 1-D convolution over time: [T, D] x kernel [K, D, E] -> [T, E].

enum class ConvMode { kCausal, kSymmetric };

struct ConvPadding {
  size_t left = 0;
  size_t right = 0;
};
// Causal: K-1 on the left. Symmetric: floor(K/2) on the left and the rest on
// the right, so even K pads one more frame on the left than on the right.
ConvPadding ConvPad(size_t kernel, ConvMode mode);

Array Conv1d(const Array& x, const Array& kernel, const Array* bias,
             ConvMode mode);
struct Conv1dGrads {
  Array dx, dkernel, dbias;
};
Conv1dGrads Conv1dBackward(const Array& x, const Array& kernel,
                           const Array& dy, ConvMode mode);

// ---------------------------------------------------------------------------
// Elementwise and row-wise helpers.

// Exact GELU, x * Phi(x).
Array Gelu(const Array& x);
Array GeluBackward(const Array& x, const Array& dy);

Array LogSoftmax(const Array& logits);
// `y` is the LogSoftmax output.
Array LogSoftmaxBackward(const Array& y, const Array& dy);

// log(sum(exp(v))) with max subtraction; -inf for an all -inf input.
double LogSumExp(std::span<const double> v);
double LogAdd(double a, double b);

// Index of the largest entry, lowest index on ties.
size_t ArgMax(std::span<const double> v);

}  // namespace streamkd

#endif  // STREAMKD_CORE_OPS_H_
