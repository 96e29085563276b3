// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "core/encoder.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "core/error.h"
#include "core/rng.h"

namespace streamkd {

std::string FrontendNormName(FrontendNorm n) {
  return n == FrontendNorm::kGroup ? "gn" : "bn";
}

FrontendNorm ParseFrontendNorm(const std::string& name) {
  if (name == "gn") return FrontendNorm::kGroup;
  if (name == "bn") return FrontendNorm::kBatch;
  Fail(ErrorCode::kInvalidArgument, "unknown frontend norm '" + name + "'");
}

std::string ConvModeName(ConvMode m) {
  return m == ConvMode::kCausal ? "causal" : "symmetric";
}

ConvMode ParseConvMode(const std::string& name) {
  if (name == "causal") return ConvMode::kCausal;
  if (name == "symmetric") return ConvMode::kSymmetric;
  Fail(ErrorCode::kInvalidArgument, "unknown conv mode '" + name + "'");
}

void EncoderConfig::Validate() const {
  Require(input_dim >= 1, "encoder: input_dim must be >= 1");
  Require(layers >= 1, "encoder: need at least one layer");
  Require(heads >= 1 && model_dim % heads == 0,
          "encoder: model_dim must be divisible by heads");
  Require(ffn_dim >= 1, "encoder: ffn_dim must be >= 1");
  Require(vocab_size >= 2, "encoder: vocab_size must be >= 2");
  Require(kernel >= 1, "encoder: kernel must be >= 1");
  Require(dropout >= 0.0 && dropout < 1.0, "encoder: dropout must be in [0, 1)");
  Require(norm_eps > 0.0, "encoder: norm_eps must be positive");
}

std::string EncoderConfig::Serialize() const {
  std::ostringstream os;
  os.precision(17);
  os << "input_dim=" << input_dim << "\n"
     << "layers=" << layers << "\n"
     << "model_dim=" << model_dim << "\n"
     << "heads=" << heads << "\n"
     << "ffn_dim=" << ffn_dim << "\n"
     << "vocab_size=" << vocab_size << "\n"
     << "norm=" << FrontendNormName(norm) << "\n"
     << "conv=" << ConvModeName(conv) << "\n"
     << "kernel=" << kernel << "\n"
     << "dropout=" << dropout << "\n"
     << "norm_eps=" << norm_eps << "\n";
  return os.str();
}

EncoderConfig EncoderConfig::Parse(const std::string& text) {
  EncoderConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      Fail(ErrorCode::kFormat, "encoder config: malformed line '" + line + "'");
    }
    const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
    try {
      if (k == "input_dim") c.input_dim = std::stoul(v);
      else if (k == "layers") c.layers = std::stoul(v);
      else if (k == "model_dim") c.model_dim = std::stoul(v);
      else if (k == "heads") c.heads = std::stoul(v);
      else if (k == "ffn_dim") c.ffn_dim = std::stoul(v);
      else if (k == "vocab_size") c.vocab_size = std::stoul(v);
      else if (k == "norm") c.norm = ParseFrontendNorm(v);
      else if (k == "conv") c.conv = ParseConvMode(v);
      else if (k == "kernel") c.kernel = std::stoul(v);
      else if (k == "dropout") c.dropout = std::stod(v);
      else if (k == "norm_eps") c.norm_eps = std::stod(v);
      else Fail(ErrorCode::kFormat, "encoder config: unknown key '" + k + "'");
    } catch (const std::logic_error&) {
      Fail(ErrorCode::kFormat, "encoder config: bad value in '" + line + "'");
    }
  }
  c.Validate();
  return c;
}

bool ModelParams::operator==(const ModelParams& other) const {
  return config == other.config && weights == other.weights &&
         bn.initialized == other.bn.initialized &&
         bn.running_mean == other.bn.running_mean &&
         bn.running_var == other.bn.running_var && mask == other.mask;
}

namespace {

std::string LayerKey(size_t l, const char* name) {
  return "layer" + std::to_string(l) + "." + name;
}

void InitUniform(Array& a, double bound, Rng& rng) {
  for (double& v : a.storage()) v = rng.Uniform(-bound, bound);
}

const Array& W(const ModelParams& p, const std::string& name) {
  auto it = p.weights.find(name);
  if (it == p.weights.end()) {
    Fail(ErrorCode::kFormat, "model is missing parameter '" + name + "'");
  }
  return it->second;
}

Array& G(ParamMap& g, const std::string& name) {
  auto it = g.find(name);
  if (it == g.end()) {
    Fail(ErrorCode::kInternal, "gradient map is missing '" + name + "'");
  }
  return it->second;
}

// Columns [h * width, (h + 1) * width) of x.
Array HeadSlice(const Array& x, size_t h, size_t width) {
  Array out = Array::Matrix(x.rows(), width);
  for (size_t r = 0; r < x.rows(); ++r)
    for (size_t c = 0; c < width; ++c) out(r, c) = x(r, h * width + c);
  return out;
}

void HeadScatter(Array& x, const Array& part, size_t h, size_t width) {
  for (size_t r = 0; r < x.rows(); ++r)
    for (size_t c = 0; c < width; ++c) x(r, h * width + c) += part(r, c);
}

Array GatherRows(const Array& x, const std::vector<size_t>& rows) {
  Array out = Array::Matrix(rows.size(), x.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    auto src = x.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

void ScatterAddRows(Array& x, const Array& part,
                    const std::vector<size_t>& rows) {
  for (size_t i = 0; i < rows.size(); ++i) {
    auto dst = x.row(rows[i]);
    auto src = part.row(i);
    for (size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
  }
}

}  // namespace

const std::vector<std::string>& HeadParamNames() {
  static const std::vector<std::string> names = {
      "final_norm.gain", "final_norm.bias", "head.weight", "head.bias"};
  return names;
}

ModelParams InitParams(const EncoderConfig& config, uint64_t seed) {
  config.Validate();
  ModelParams p;
  p.config = config;
  const size_t d = config.model_dim, f = config.ffn_dim;
  Rng rng(seed);
  auto add = [&](const std::string& name, std::vector<size_t> shape,
                 double bound) -> Array& {
    Array a(std::move(shape));
    if (bound > 0.0) InitUniform(a, bound, rng);
    return p.weights[name] = std::move(a);
  };
  auto ones = [&](const std::string& name, size_t n) {
    p.weights[name] = Array::Vector(n, 1.0);
  };
  const double conv_bound =
      1.0 / std::sqrt(static_cast<double>(config.kernel * config.input_dim));
  add("frontend.conv.weight", {config.kernel, config.input_dim, d}, conv_bound);
  add("frontend.conv.bias", {d}, 0.0);
  ones("frontend.norm.gain", d);
  add("frontend.norm.bias", {d}, 0.0);
  const double dbound = 1.0 / std::sqrt(static_cast<double>(d));
  const double fbound = 1.0 / std::sqrt(static_cast<double>(f));
  for (size_t l = 0; l < config.layers; ++l) {
    ones(LayerKey(l, "ln1.gain"), d);
    add(LayerKey(l, "ln1.bias"), {d}, 0.0);
    add(LayerKey(l, "attn.wq"), {d, d}, dbound);
    add(LayerKey(l, "attn.wk"), {d, d}, dbound);
    add(LayerKey(l, "attn.wv"), {d, d}, dbound);
    add(LayerKey(l, "attn.wo"), {d, d}, dbound);
    add(LayerKey(l, "attn.bo"), {d}, 0.0);
    ones(LayerKey(l, "ln2.gain"), d);
    add(LayerKey(l, "ln2.bias"), {d}, 0.0);
    add(LayerKey(l, "ffn.w1"), {d, f}, dbound);
    add(LayerKey(l, "ffn.b1"), {f}, 0.0);
    add(LayerKey(l, "ffn.w2"), {f, d}, fbound);
    add(LayerKey(l, "ffn.b2"), {d}, 0.0);
  }
  ones("final_norm.gain", d);
  add("final_norm.bias", {d}, 0.0);
  add("head.weight", {d, config.vocab_size}, dbound);
  add("head.bias", {config.vocab_size}, 0.0);
  // Running statistics start at (0, 1) and count as initialized, so a fresh
  // batch-norm model can run in inference mode.
  p.bn = BatchNormState::Zero(d);
  p.bn.initialized = true;
  return p;
}

ParamMap ZeroLike(const ModelParams& params) {
  ParamMap g;
  for (const auto& [name, a] : params.weights) g.emplace(name, Array(a.shape()));
  return g;
}

ForwardTrace Forward(const ModelParams& params, const Array& features,
                     const MaskSpec& spec, const ForwardOptions& options,
                     ForwardCache* cache) {
  const EncoderConfig& cfg = params.config;
  if (features.rank() != 2 || features.rows() == 0) {
    Fail(ErrorCode::kInvalidArgument,
         "forward: features must be a non-empty [T, D] array");
  }
  if (features.cols() != cfg.input_dim) {
    Fail(ErrorCode::kInvalidArgument,
         "forward: feature dim " + std::to_string(features.cols()) +
             " does not match encoder input_dim " +
             std::to_string(cfg.input_dim));
  }
  spec.Validate();
  const size_t frames = features.rows();
  const size_t d = cfg.model_dim, heads = cfg.heads, hd = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c = ForwardCache{};
  c.features = features;

  // Frontend: conv -> norm -> GELU.
  c.conv_out = Conv1d(features, W(params, "frontend.conv.weight"),
                      &W(params, "frontend.conv.bias"), cfg.conv);
  if (cfg.norm == FrontendNorm::kGroup) {
    c.norm_out = LayerNorm(c.conv_out, W(params, "frontend.norm.gain"),
                           W(params, "frontend.norm.bias"), cfg.norm_eps,
                           &c.frame_norm);
  } else {
    c.norm_out = BatchNormPure(
        c.conv_out, params.bn,
        options.training ? NormPhase::kTrain : NormPhase::kInfer,
        W(params, "frontend.norm.gain"), W(params, "frontend.norm.bias"),
        cfg.norm_eps, &c.batch_norm);
  }
  c.frontend = Gelu(c.norm_out);

  Array h0 = c.frontend;
  c.masked_frames = options.masked_frames;
  for (size_t t : c.masked_frames) {
    Require(t < frames, "forward: masked frame index out of range");
    for (double& v : h0.row(t)) v = 0.0;
  }

  c.plan = LayoutFor(spec, frames);
  c.mask = BuildMask(spec, frames);
  Array h = GatherRows(h0, c.plan.index_map);

  Rng drop_rng(options.dropout_seed);
  const bool use_dropout = options.training && cfg.dropout > 0.0;

  ForwardTrace trace;
  trace.mask = spec;
  c.layers.resize(cfg.layers);
  for (size_t l = 0; l < cfg.layers; ++l) {
    LayerCache& lc = c.layers[l];
    lc.h_in = h;
    lc.a = LayerNorm(h, W(params, LayerKey(l, "ln1.gain")),
                     W(params, LayerKey(l, "ln1.bias")), cfg.norm_eps, &lc.ln1);
    lc.q = MatMul(lc.a, W(params, LayerKey(l, "attn.wq")));
    lc.k = MatMul(lc.a, W(params, LayerKey(l, "attn.wk")));
    lc.v = MatMul(lc.a, W(params, LayerKey(l, "attn.wv")));
    lc.z = Array::Matrix(h.rows(), d);
    lc.probs.resize(heads);
    for (size_t hh = 0; hh < heads; ++hh) {
      AttentionResult r = MaskedAttention(
          HeadSlice(lc.q, hh, hd), HeadSlice(lc.k, hh, hd),
          HeadSlice(lc.v, hh, hd), c.mask, scale);
      HeadScatter(lc.z, r.out, hh, hd);
      lc.probs[hh] = std::move(r.probs);
    }
    Array o = Linear(lc.z, W(params, LayerKey(l, "attn.wo")),
                     W(params, LayerKey(l, "attn.bo")));
    lc.h_mid = h;
    AddInPlace(lc.h_mid, o);
    lc.b = LayerNorm(lc.h_mid, W(params, LayerKey(l, "ln2.gain")),
                     W(params, LayerKey(l, "ln2.bias")), cfg.norm_eps,
                     &lc.ln2);
    lc.u = Linear(lc.b, W(params, LayerKey(l, "ffn.w1")),
                  W(params, LayerKey(l, "ffn.b1")));
    lc.g = Gelu(lc.u);
    if (use_dropout) {
      lc.drop = Array(lc.g.shape());
      const double keep = 1.0 - cfg.dropout;
      for (size_t i = 0; i < lc.g.size(); ++i) {
        lc.drop[i] = drop_rng.Uniform() < keep ? 1.0 / keep : 0.0;
        lc.g[i] *= lc.drop[i];
      }
    }
    Array f = Linear(lc.g, W(params, LayerKey(l, "ffn.w2")),
                     W(params, LayerKey(l, "ffn.b2")));
    h = lc.h_mid;
    AddInPlace(h, f);
    trace.hidden.push_back(GatherRows(h, c.plan.output_positions));
  }

  c.top = trace.hidden.back();
  c.head_in = LayerNorm(c.top, W(params, "final_norm.gain"),
                        W(params, "final_norm.bias"), cfg.norm_eps,
                        &c.final_norm);
  Array logits =
      Linear(c.head_in, W(params, "head.weight"), W(params, "head.bias"));
  c.log_probs = LogSoftmax(logits);
  c.log_probs.CheckFinite("encoder output");

  trace.log_probs = c.log_probs;
  trace.frontend = c.frontend;
  return trace;
}

void Backward(const ModelParams& params, const ForwardCache& c,
              const OutputGrads& out, ParamMap& grads, Array* dfeatures) {
  const EncoderConfig& cfg = params.config;
  const size_t frames = c.features.rows();
  const size_t d = cfg.model_dim, heads = cfg.heads, hd = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const size_t aug = c.plan.augmented_frames;
  const auto& outpos = c.plan.output_positions;

  auto hidden_grad = [&](size_t l) -> const Array* {
    if (!out.dhidden || l >= out.dhidden->size()) return nullptr;
    const Array& g = (*out.dhidden)[l];
    if (g.empty()) return nullptr;
    Require(g.rows() == frames && g.cols() == d,
            "backward: hidden-state gradient has the wrong shape");
    return &g;
  };

  // Gradient w.r.t. the last layer output, augmented positions.
  Array dh = Array::Matrix(aug, d);
  if (out.dlog_probs) {
    Require(out.dlog_probs->SameShape(c.log_probs),
            "backward: log-prob gradient has the wrong shape");
    Array dlogits = LogSoftmaxBackward(c.log_probs, *out.dlog_probs);
    Array dhead_in =
        LinearBackward(c.head_in, W(params, "head.weight"), dlogits,
                       G(grads, "head.weight"), G(grads, "head.bias"));
    LayerNormGrads fn =
        LayerNormBackward(dhead_in, W(params, "final_norm.gain"), c.final_norm);
    AddInPlace(G(grads, "final_norm.gain"), fn.dgain);
    AddInPlace(G(grads, "final_norm.bias"), fn.dbias);
    ScatterAddRows(dh, fn.dx, outpos);
  }

  for (size_t li = cfg.layers; li-- > 0;) {
    if (const Array* g = hidden_grad(li)) ScatterAddRows(dh, *g, outpos);
    const LayerCache& lc = c.layers[li];
    const size_t l = li;

    // Feed-forward sublayer: h = h_mid + W2 gelu(W1 ln2(h_mid)).
    Array dg = LinearBackward(lc.g, W(params, LayerKey(l, "ffn.w2")), dh,
                              G(grads, LayerKey(l, "ffn.w2")),
                              G(grads, LayerKey(l, "ffn.b2")));
    if (!lc.drop.empty()) {
      for (size_t i = 0; i < dg.size(); ++i) dg[i] *= lc.drop[i];
    }
    Array du = GeluBackward(lc.u, dg);
    Array db = LinearBackward(lc.b, W(params, LayerKey(l, "ffn.w1")), du,
                              G(grads, LayerKey(l, "ffn.w1")),
                              G(grads, LayerKey(l, "ffn.b1")));
    LayerNormGrads ln2 =
        LayerNormBackward(db, W(params, LayerKey(l, "ln2.gain")), lc.ln2);
    AddInPlace(G(grads, LayerKey(l, "ln2.gain")), ln2.dgain);
    AddInPlace(G(grads, LayerKey(l, "ln2.bias")), ln2.dbias);
    Array dh_mid = dh;
    AddInPlace(dh_mid, ln2.dx);

    // Attention sublayer: h_mid = h_in + Wo attn(ln1(h_in)) + bo.
    Array dz = LinearBackward(lc.z, W(params, LayerKey(l, "attn.wo")), dh_mid,
                              G(grads, LayerKey(l, "attn.wo")),
                              G(grads, LayerKey(l, "attn.bo")));
    Array dq = Array::Matrix(aug, d), dk = Array::Matrix(aug, d),
          dv = Array::Matrix(aug, d);
    for (size_t hh = 0; hh < heads; ++hh) {
      AttentionGrads ag = MaskedAttentionBackward(
          HeadSlice(lc.q, hh, hd), HeadSlice(lc.k, hh, hd),
          HeadSlice(lc.v, hh, hd), lc.probs[hh], HeadSlice(dz, hh, hd), c.mask,
          scale);
      HeadScatter(dq, ag.dq, hh, hd);
      HeadScatter(dk, ag.dk, hh, hd);
      HeadScatter(dv, ag.dv, hh, hd);
    }
    AddInPlace(G(grads, LayerKey(l, "attn.wq")), MatMulTransA(lc.a, dq));
    AddInPlace(G(grads, LayerKey(l, "attn.wk")), MatMulTransA(lc.a, dk));
    AddInPlace(G(grads, LayerKey(l, "attn.wv")), MatMulTransA(lc.a, dv));
    Array da = MatMulTransB(dq, W(params, LayerKey(l, "attn.wq")));
    AddInPlace(da, MatMulTransB(dk, W(params, LayerKey(l, "attn.wk"))));
    AddInPlace(da, MatMulTransB(dv, W(params, LayerKey(l, "attn.wv"))));
    LayerNormGrads ln1 =
        LayerNormBackward(da, W(params, LayerKey(l, "ln1.gain")), lc.ln1);
    AddInPlace(G(grads, LayerKey(l, "ln1.gain")), ln1.dgain);
    AddInPlace(G(grads, LayerKey(l, "ln1.bias")), ln1.dbias);
    dh = std::move(dh_mid);
    AddInPlace(dh, ln1.dx);
  }

  // Undo the hard-copy gather: copies send their gradient to the source frame.
  Array dh0 = Array::Matrix(frames, d);
  ScatterAddRows(dh0, dh, c.plan.index_map);
  for (size_t t : c.masked_frames) {
    for (double& v : dh0.row(t)) v = 0.0;
  }

  Array dnorm = GeluBackward(c.norm_out, dh0);
  Array dconv;
  if (cfg.norm == FrontendNorm::kGroup) {
    LayerNormGrads g =
        LayerNormBackward(dnorm, W(params, "frontend.norm.gain"), c.frame_norm);
    AddInPlace(G(grads, "frontend.norm.gain"), g.dgain);
    AddInPlace(G(grads, "frontend.norm.bias"), g.dbias);
    dconv = std::move(g.dx);
  } else {
    BatchNormGrads g =
        BatchNormBackward(dnorm, W(params, "frontend.norm.gain"), c.batch_norm);
    AddInPlace(G(grads, "frontend.norm.gain"), g.dgain);
    AddInPlace(G(grads, "frontend.norm.bias"), g.dbias);
    dconv = std::move(g.dx);
  }
  Conv1dGrads cg = Conv1dBackward(c.features, W(params, "frontend.conv.weight"),
                                  dconv, cfg.conv);
  AddInPlace(G(grads, "frontend.conv.weight"), cg.dkernel);
  AddInPlace(G(grads, "frontend.conv.bias"), cg.dbias);
  if (dfeatures) *dfeatures = std::move(cg.dx);
}

size_t FrontendLookahead(const EncoderConfig& config) {
  return ConvPad(config.kernel, config.conv).right;
}

std::vector<FrameBounds> EncoderReceptionField(const EncoderConfig& config,
                                               const MaskSpec& spec,
                                               size_t frames) {
  const ConvPadding pad = ConvPad(config.kernel, config.conv);
  std::vector<FrameBounds> rf = ReceptionField(spec, config.layers, frames);
  for (FrameBounds& b : rf) {
    b.earliest = b.earliest >= pad.left ? b.earliest - pad.left : 0;
    b.latest = std::min(b.latest + pad.right, frames - 1);
  }
  return rf;
}

}  // namespace streamkd
