// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "core/masking.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "core/error.h"

namespace streamkd {

std::string VariantName(Variant v) {
  switch (v) {
    case Variant::kBidirectional: return "bidirectional";
    case Variant::kTimeRestricted: return "time_restricted";
    case Variant::kChunk: return "chunk";
    case Variant::kBlock: return "block";
  }
  return "unknown";
}

Variant ParseVariant(const std::string& name) {
  if (name == "bidirectional") return Variant::kBidirectional;
  if (name == "time_restricted") return Variant::kTimeRestricted;
  if (name == "chunk") return Variant::kChunk;
  if (name == "block") return Variant::kBlock;
  Fail(ErrorCode::kInvalidArgument, "unknown mask variant '" + name + "'");
}

void MaskSpec::Validate() const {
  const std::string v = VariantName(variant);
  Require(frame_ms > 0.0, "mask: frame_ms must be positive");
  Require(chunk_frames >= 0 && future_frames >= 0 && right_frames >= 0,
          "mask: sizes must be non-negative");
  switch (variant) {
    case Variant::kBidirectional:
      Require(chunk_frames == 0 && future_frames == 0 && right_frames == 0 &&
                  left_limit < 0,
              "mask: bidirectional takes no chunk/future/right/left settings");
      break;
    case Variant::kTimeRestricted:
      Require(chunk_frames == 0 && future_frames == 0,
              "mask: time_restricted does not use chunk or future size");
      break;
    case Variant::kChunk:
      Require(chunk_frames >= 1, "mask: chunk size must be >= 1");
      Require(future_frames == 0, "mask: chunk variant has no future part");
      Require(right_frames == 0, "mask: right context is not a chunk setting");
      break;
    case Variant::kBlock:
      Require(chunk_frames >= 1, "mask: chunk size must be >= 1");
      Require(right_frames == 0, "mask: right context is not a block setting");
      break;
  }
}

std::string FormatMaskSpec(const MaskSpec& spec) {
  std::ostringstream os;
  os.precision(17);
  os << "variant=" << VariantName(spec.variant)
     << " chunk=" << spec.chunk_frames << " future=" << spec.future_frames
     << " right=" << spec.right_frames << " left=" << spec.left_limit
     << " frame_ms=" << spec.frame_ms;
  return os.str();
}

MaskSpec ParseMaskSpec(const std::string& text) {
  MaskSpec spec;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) {
      Fail(ErrorCode::kFormat, "mask spec: malformed token '" + tok + "'");
    }
    const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    try {
      if (key == "variant") spec.variant = ParseVariant(val);
      else if (key == "chunk") spec.chunk_frames = std::stoi(val);
      else if (key == "future") spec.future_frames = std::stoi(val);
      else if (key == "right") spec.right_frames = std::stoi(val);
      else if (key == "left") spec.left_limit = std::stoi(val);
      else if (key == "frame_ms") spec.frame_ms = std::stod(val);
      else Fail(ErrorCode::kFormat, "mask spec: unknown key '" + key + "'");
    } catch (const std::logic_error&) {
      Fail(ErrorCode::kFormat, "mask spec: bad value in '" + tok + "'");
    }
  }
  spec.Validate();
  return spec;
}

HardCopyPlan PlanHardCopy(size_t frames, size_t chunk, size_t future) {
  Require(chunk >= 1, "PlanHardCopy: chunk size must be >= 1");
  HardCopyPlan plan;
  plan.source_frames = frames;
  const size_t n_chunks = (frames + chunk - 1) / chunk;
  for (size_t k = 0; k < n_chunks; ++k) {
    const size_t begin = k * chunk;
    const size_t end = std::min(begin + chunk, frames);  // exclusive
    for (size_t t = begin; t < end; ++t) {
      plan.output_positions.push_back(plan.index_map.size());
      plan.index_map.push_back(t);
      plan.is_copy.push_back(0);
      plan.chunk_id.push_back(k);
    }
    const size_t copy_end = std::min(end + future, frames);
    for (size_t t = end; t < copy_end; ++t) {
      plan.index_map.push_back(t);
      plan.is_copy.push_back(1);
      plan.chunk_id.push_back(k);
    }
  }
  plan.augmented_frames = plan.index_map.size();
  return plan;
}

HardCopyPlan LayoutFor(const MaskSpec& spec, size_t frames) {
  if (spec.variant == Variant::kBlock) {
    return PlanHardCopy(frames, static_cast<size_t>(spec.chunk_frames),
                        static_cast<size_t>(spec.future_frames));
  }
  HardCopyPlan plan;
  plan.source_frames = frames;
  plan.augmented_frames = frames;
  plan.index_map.resize(frames);
  plan.is_copy.assign(frames, 0);
  plan.chunk_id.assign(frames, 0);
  plan.output_positions.resize(frames);
  for (size_t t = 0; t < frames; ++t) {
    plan.index_map[t] = t;
    plan.output_positions[t] = t;
    if (spec.variant == Variant::kChunk) {
      plan.chunk_id[t] = t / static_cast<size_t>(spec.chunk_frames);
    }
  }
  return plan;
}

AttentionMask BuildMask(const MaskSpec& spec, size_t frames, size_t layer) {
  (void)layer;
  spec.Validate();
  Require(frames >= 1, "BuildMask: need at least one frame");
  const bool unlimited_left = spec.left_limit < 0;
  const size_t left = unlimited_left ? 0 : static_cast<size_t>(spec.left_limit);

  switch (spec.variant) {
    case Variant::kBidirectional:
      return AttentionMask::Full(frames);

    case Variant::kTimeRestricted: {
      AttentionMask m(frames, frames, false);
      const size_t r = static_cast<size_t>(spec.right_frames);
      for (size_t t = 0; t < frames; ++t) {
        const size_t lo = unlimited_left || t < left ? 0 : t - left;
        const size_t hi = std::min(t + r, frames - 1);
        for (size_t j = lo; j <= hi; ++j) m.Set(t, j, true);
      }
      return m;
    }

    case Variant::kChunk: {
      AttentionMask m(frames, frames, false);
      const size_t c = static_cast<size_t>(spec.chunk_frames);
      for (size_t t = 0; t < frames; ++t) {
        const size_t k = t / c;
        const size_t chunk_end = std::min((k + 1) * c, frames) - 1;
        const size_t first_chunk = unlimited_left || k < left ? 0 : k - left;
        for (size_t j = first_chunk * c; j <= chunk_end; ++j) m.Set(t, j, true);
      }
      return m;
    }

    case Variant::kBlock: {
      const HardCopyPlan plan = LayoutFor(spec, frames);
      const size_t n = plan.augmented_frames;
      AttentionMask m(n, n, false);
      for (size_t p = 0; p < n; ++p) {
        const size_t k = plan.chunk_id[p];
        for (size_t q = 0; q < n; ++q) {
          const size_t kq = plan.chunk_id[q];
          bool ok = false;
          if (kq == k) {
            ok = true;  // own chunk and its copies
          } else if (kq < k && !plan.is_copy[q]) {
            ok = unlimited_left || k - kq <= left;
          }
          if (ok) m.Set(p, q, true);
        }
      }
      return m;
    }
  }
  Fail(ErrorCode::kInternal, "BuildMask: unhandled variant");
}

std::vector<FrameBounds> ReceptionField(const MaskSpec& spec, size_t layers,
                                        size_t frames) {
  Require(layers >= 1, "ReceptionField: need at least one layer");
  const HardCopyPlan plan = LayoutFor(spec, frames);
  const AttentionMask mask = BuildMask(spec, frames);
  const size_t n = plan.augmented_frames;
  const size_t words = (n + 63) / 64;
  using Bits = std::vector<uint64_t>;
  std::vector<Bits> base(n, Bits(words, 0));
  for (size_t p = 0; p < n; ++p)
    for (size_t q = 0; q < n; ++q)
      if (mask(p, q)) base[p][q / 64] |= uint64_t{1} << (q % 64);

  // reach_L(p) = union of base(m) over m in reach_{L-1}(p).
  std::vector<Bits> reach = base;
  for (size_t l = 1; l < layers; ++l) {
    std::vector<Bits> next(n, Bits(words, 0));
    for (size_t p = 0; p < n; ++p) {
      for (size_t m = 0; m < n; ++m) {
        if (!(reach[p][m / 64] >> (m % 64) & 1)) continue;
        for (size_t w = 0; w < words; ++w) next[p][w] |= base[m][w];
      }
    }
    if (next == reach) break;  // fixed point; deeper layers add nothing
    reach = std::move(next);
  }

  std::vector<FrameBounds> out;
  out.reserve(plan.output_positions.size());
  for (size_t p : plan.output_positions) {
    FrameBounds b{frames, 0};
    for (size_t q = 0; q < n; ++q) {
      if (!(reach[p][q / 64] >> (q % 64) & 1)) continue;
      b.earliest = std::min(b.earliest, plan.index_map[q]);
      b.latest = std::max(b.latest, plan.index_map[q]);
    }
    out.push_back(b);
  }
  return out;
}

double Eil(const MaskSpec& spec, size_t layers) {
  spec.Validate();
  switch (spec.variant) {
    case Variant::kBidirectional:
      return std::numeric_limits<double>::infinity();
    case Variant::kTimeRestricted:
      return static_cast<double>(layers) * spec.right_frames * spec.frame_ms;
    case Variant::kChunk:
      return spec.chunk_frames * spec.frame_ms / 2.0;
    case Variant::kBlock:
      return spec.chunk_frames * spec.frame_ms / 2.0 +
             spec.future_frames * spec.frame_ms;
  }
  return 0.0;
}

LatencyReport AnalyzeLatency(const MaskSpec& spec, size_t layers) {
  LatencyReport r;
  r.spec = spec;
  r.layers = layers;
  r.eil_ms = Eil(spec, layers);
  const size_t c = static_cast<size_t>(spec.chunk_frames);
  const size_t f = static_cast<size_t>(spec.future_frames);
  for (size_t l = 1; l <= layers; ++l) {
    size_t v = 0;
    switch (spec.variant) {
      case Variant::kBidirectional: v = kUnboundedFrames; break;
      case Variant::kTimeRestricted: v = l * spec.right_frames; break;
      case Variant::kChunk: v = c - 1; break;
      case Variant::kBlock: v = c - 1 + f; break;
    }
    r.per_layer_lookahead.push_back(v);
  }
  switch (spec.variant) {
    case Variant::kBidirectional:
      r.per_frame_lookahead = std::numeric_limits<double>::infinity();
      r.max_lookahead = kUnboundedFrames;
      break;
    case Variant::kTimeRestricted:
      r.per_frame_lookahead = static_cast<double>(layers * spec.right_frames);
      r.max_lookahead = layers * spec.right_frames;
      break;
    case Variant::kChunk:
      r.per_frame_lookahead = (static_cast<double>(c) - 1.0) / 2.0;
      r.max_lookahead = c - 1;
      break;
    case Variant::kBlock:
      r.per_frame_lookahead = (static_cast<double>(c) - 1.0) / 2.0 + f;
      r.max_lookahead = c - 1 + f;
      break;
  }
  return r;
}

namespace {

std::string Num(double v) {
  if (std::isinf(v)) return "utterance";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string Frames(size_t v) {
  return v == kUnboundedFrames ? "utterance" : std::to_string(v);
}

}  // namespace

std::string FormatLatencyTable(const LatencyReport& r) {
  const MaskSpec& s = r.spec;
  std::ostringstream os;
  os << "variant          " << VariantName(s.variant) << "\n";
  os << "frame            " << Num(s.frame_ms) << " ms\n";
  if (s.variant == Variant::kChunk || s.variant == Variant::kBlock) {
    os << "chunk            " << s.chunk_frames << " frames ("
       << Num(s.chunk_frames * s.frame_ms) << " ms)\n";
  }
  if (s.variant == Variant::kBlock) {
    os << "future           " << s.future_frames << " frames ("
       << Num(s.future_frames * s.frame_ms) << " ms)\n";
  }
  if (s.variant == Variant::kTimeRestricted) {
    os << "right context    " << s.right_frames << " frames per layer\n";
  }
  os << "layers           " << r.layers << "\n";
  os << "left context     "
     << (s.left_limit < 0 ? std::string("unlimited")
                          : std::to_string(s.left_limit))
     << "\n";
  os << "lookahead (avg)  " << Num(r.per_frame_lookahead) << " frames\n";
  os << "lookahead (max)  " << Frames(r.max_lookahead) << " frames\n";
  os << "layer  max-lookahead\n";
  for (size_t l = 0; l < r.per_layer_lookahead.size(); ++l) {
    os << "  " << (l + 1) << "    " << Frames(r.per_layer_lookahead[l]) << "\n";
  }
  os << "EIL " << Num(r.eil_ms) << " ms\n";
  return os.str();
}

std::string FormatLatencyLine(const LatencyReport& r) {
  const MaskSpec& s = r.spec;
  std::ostringstream os;
  os << VariantName(s.variant) << '\t' << Num(s.chunk_frames * s.frame_ms)
     << '\t' << Num(s.future_frames * s.frame_ms) << '\t' << s.right_frames
     << '\t' << r.layers << '\t' << Num(r.eil_ms) << '\n';
  return os.str();
}

std::string RenderMask(const AttentionMask& mask) {
  std::string out;
  out.reserve(mask.queries * (mask.keys + 1));
  for (size_t t = 0; t < mask.queries; ++t) {
    for (size_t j = 0; j < mask.keys; ++j) out += mask(t, j) ? 'x' : '.';
    out += '\n';
  }
  return out;
}

}  // namespace streamkd
