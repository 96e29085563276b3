// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

// Streaming attention masks (time-restricted, chunk, block), the hard-copy
// sequence layout used by the block variant, multi-layer reception fields and
// encoder-induced latency (EIL).

#ifndef STREAMKD_CORE_MASKING_H_
#define STREAMKD_CORE_MASKING_H_

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "core/attention_mask.h"

namespace streamkd {

enum class Variant { kBidirectional, kTimeRestricted, kChunk, kBlock };

std::string VariantName(Variant v);
Variant ParseVariant(const std::string& name);

struct MaskSpec {
  Variant variant = Variant::kBidirectional;
  int chunk_frames = 0;   // C, chunk and block
  int future_frames = 0;  // F, block
  int right_frames = 0;   // R, time_restricted (per layer)
  // Unlimited when negative. Frames for time_restricted, whole chunks for
  // chunk/block.
  int left_limit = -1;
  double frame_ms = 20.0;

  static MaskSpec Bidirectional() { return {}; }
  static MaskSpec TimeRestricted(int right) {
    MaskSpec s;
    s.variant = Variant::kTimeRestricted;
    s.right_frames = right;
    return s;
  }
  static MaskSpec Chunk(int chunk) {
    MaskSpec s;
    s.variant = Variant::kChunk;
    s.chunk_frames = chunk;
    return s;
  }
  static MaskSpec Block(int chunk, int future) {
    MaskSpec s;
    s.variant = Variant::kBlock;
    s.chunk_frames = chunk;
    s.future_frames = future;
    return s;
  }

  bool streaming() const { return variant != Variant::kBidirectional; }
  // Throws kInvalidArgument on a field combination the variant does not use.
  void Validate() const;

  bool operator==(const MaskSpec&) const = default;
};

// Single-line "key=value" rendering used in checkpoint headers.
std::string FormatMaskSpec(const MaskSpec& spec);
MaskSpec ParseMaskSpec(const std::string& text);

// Sequence augmentation for the block variant: after the frames of chunk k
// come copies of the (up to) F frames that follow the chunk. Copies are only
// visible inside chunk k's scope and are dropped after the last layer.
struct HardCopyPlan {
  size_t source_frames = 0;
  size_t augmented_frames = 0;
  std::vector<size_t> index_map;  // augmented position -> source frame
  std::vector<uint8_t> is_copy;
  std::vector<size_t> chunk_id;
  std::vector<size_t> output_positions;  // non-copy positions, in order
};

HardCopyPlan PlanHardCopy(size_t frames, size_t chunk, size_t future);
// Identity layout for every variant except block.
HardCopyPlan LayoutFor(const MaskSpec& spec, size_t frames);

// Mask over LayoutFor(spec, frames).augmented_frames positions. `layer` is
// accepted for per-layer variants; all current variants share one mask.
AttentionMask BuildMask(const MaskSpec& spec, size_t frames, size_t layer = 0);

struct FrameBounds {
  size_t earliest = 0;
  size_t latest = 0;
  bool operator==(const FrameBounds&) const = default;
};

// Source-frame bounds each output position depends on after `layers`
// attention layers, by boolean composition of the per-layer masks.
std::vector<FrameBounds> ReceptionField(const MaskSpec& spec, size_t layers,
                                        size_t frames);

inline constexpr size_t kUnboundedFrames = std::numeric_limits<size_t>::max();

// Milliseconds of algorithmic lookahead. Bidirectional returns +infinity,
// meaning "the whole utterance".
double Eil(const MaskSpec& spec, size_t layers);

struct LatencyReport {
  MaskSpec spec;
  size_t layers = 0;
  double eil_ms = 0.0;
  double per_frame_lookahead = 0.0;      // frames, averaged over a chunk
  size_t max_lookahead = 0;              // frames
  std::vector<size_t> per_layer_lookahead;  // max lookahead after 1..layers
};

LatencyReport AnalyzeLatency(const MaskSpec& spec, size_t layers);
std::string FormatLatencyTable(const LatencyReport& report);
// Tab-separated: variant, C_ms, F_ms, R, layers, EIL_ms.
std::string FormatLatencyLine(const LatencyReport& report);

// One text row per query: 'x' allowed, '.' blocked.
std::string RenderMask(const AttentionMask& mask);

}  // namespace streamkd

#endif  // STREAMKD_CORE_MASKING_H_
