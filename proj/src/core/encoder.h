// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

// Toy streaming encoder: conv frontend (norm + conv + GELU), a pre-norm stack
// of masked multi-head self-attention layers and a CTC projection head.

#ifndef STREAMKD_CORE_ENCODER_H_
#define STREAMKD_CORE_ENCODER_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "core/array.h"
#include "core/attention_mask.h"
#include "core/masking.h"
#include "core/ops.h"

namespace streamkd {

// "gn" normalizes each frame over its features; "bn" is batch norm over time.
enum class FrontendNorm { kGroup, kBatch };

std::string FrontendNormName(FrontendNorm n);
FrontendNorm ParseFrontendNorm(const std::string& name);
std::string ConvModeName(ConvMode m);
ConvMode ParseConvMode(const std::string& name);

struct EncoderConfig {
  size_t input_dim = 16;
  size_t layers = 4;
  size_t model_dim = 32;
  size_t heads = 2;
  size_t ffn_dim = 64;
  size_t vocab_size = 29;
  FrontendNorm norm = FrontendNorm::kGroup;
  ConvMode conv = ConvMode::kCausal;
  size_t kernel = 3;
  double dropout = 0.0;
  double norm_eps = 1e-5;

  void Validate() const;
  // "key=value" lines, stable key order.
  std::string Serialize() const;
  static EncoderConfig Parse(const std::string& text);

  bool operator==(const EncoderConfig&) const = default;
};

using ParamMap = std::map<std::string, Array>;

struct ModelParams {
  EncoderConfig config;
  ParamMap weights;
  BatchNormState bn;  // frontend running statistics (batch-norm frontend)
  MaskSpec mask;      // attention mask the model was fine-tuned with

  bool operator==(const ModelParams& other) const;
};

// Seeded, deterministic initialization: weights uniform in
// +-1/sqrt(fan_in), norm gains 1, biases 0.
ModelParams InitParams(const EncoderConfig& config, uint64_t seed);

// Zero arrays with the same names and shapes as `params.weights`.
ParamMap ZeroLike(const ModelParams& params);

// Names of the projection head (final norm + linear output layer).
const std::vector<std::string>& HeadParamNames();

struct ForwardOptions {
  // Batch statistics in the frontend norm and active dropout.
  bool training = false;
  uint64_t dropout_seed = 0;
  // Source frames whose frontend output is replaced with zeros before the
  // transformer (masked prediction during contrastive pre-training).
  std::vector<size_t> masked_frames;
};

struct ForwardTrace {
  std::vector<Array> hidden;  // per layer, [T, model_dim], source positions
  Array log_probs;            // [T, V]
  Array frontend;             // [T, model_dim], before frame masking
  MaskSpec mask;
};

struct LayerCache {
  Array h_in;
  LayerNormCache ln1;
  Array a, q, k, v;
  std::vector<Array> probs;  // per head
  Array z;
  Array h_mid;
  LayerNormCache ln2;
  Array b, u, g, drop;
};

struct ForwardCache {
  Array features;
  Array conv_out;
  LayerNormCache frame_norm;
  BatchNormCache batch_norm;
  Array norm_out;
  Array frontend;
  std::vector<size_t> masked_frames;
  HardCopyPlan plan;
  AttentionMask mask;
  std::vector<LayerCache> layers;
  Array top;  // last layer output at source positions
  LayerNormCache final_norm;
  Array head_in;
  Array log_probs;
};

ForwardTrace Forward(const ModelParams& params, const Array& features,
                     const MaskSpec& spec, const ForwardOptions& options = {},
                     ForwardCache* cache = nullptr);

// Gradients flowing into the outputs of Forward. Either may be absent;
// `dhidden` entries that are empty arrays contribute nothing.
struct OutputGrads {
  const Array* dlog_probs = nullptr;
  const std::vector<Array>* dhidden = nullptr;
};

// Accumulates parameter gradients into `grads` (created with ZeroLike) and
// optionally returns the gradient with respect to the input features.
void Backward(const ModelParams& params, const ForwardCache& cache,
              const OutputGrads& out, ParamMap& grads,
              Array* dfeatures = nullptr);

// Frames of right context the frontend convolution adds.
size_t FrontendLookahead(const EncoderConfig& config);

// Reception field of the whole encoder (frontend + attention stack), in
// input frames.
std::vector<FrameBounds> EncoderReceptionField(const EncoderConfig& config,
                                               const MaskSpec& spec,
                                               size_t frames);

}  // namespace streamkd

#endif  // STREAMKD_CORE_ENCODER_H_
