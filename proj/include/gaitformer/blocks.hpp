// Copyright (c) 2026 the gaitformer authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gaitformer/attention.hpp"
#include "gaitformer/encodings.hpp"

namespace gaitformer {

// ---------------------------------------------------------------------------
// Model configuration
// ---------------------------------------------------------------------------

enum class Variant {
  kCnn,
  kRnn,
  kCnnRnn,
  kVanilla,
  kInformer,
  kAutoformer,
  kBlockRecurrent,
  kThat,
  kProposed,
};

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kCnn: return "cnn";
    case Variant::kRnn: return "rnn";
    case Variant::kCnnRnn: return "cnn_rnn";
    case Variant::kVanilla: return "vanilla";
    case Variant::kInformer: return "informer";
    case Variant::kAutoformer: return "autoformer";
    case Variant::kBlockRecurrent: return "block_recurrent";
    case Variant::kThat: return "that";
    case Variant::kProposed: return "proposed";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  for (Variant v : {Variant::kCnn, Variant::kRnn, Variant::kCnnRnn,
                    Variant::kVanilla, Variant::kInformer, Variant::kAutoformer,
                    Variant::kBlockRecurrent, Variant::kThat, Variant::kProposed}) {
    if (s == variant_name(v)) return v;
  }
  throw ConfigError("unknown model variant: " + s);
}

inline bool is_transformer(Variant v) {
  return v != Variant::kCnn && v != Variant::kRnn && v != Variant::kCnnRnn;
}
inline bool is_two_stream(Variant v) {
  return v == Variant::kThat || v == Variant::kProposed;
}
inline bool has_recurrent_layer(Variant v) {
  return v == Variant::kBlockRecurrent || v == Variant::kProposed;
}

enum class EncodingKind { kAuto, kNone, kSinusoidal, kGaussian };

inline const char* encoding_name(EncodingKind e) {
  switch (e) {
    case EncodingKind::kAuto: return "auto";
    case EncodingKind::kNone: return "none";
    case EncodingKind::kSinusoidal: return "sinusoidal";
    case EncodingKind::kGaussian: return "gaussian";
  }
  return "?";
}

inline EncodingKind encoding_from_string(const std::string& s) {
  for (EncodingKind e : {EncodingKind::kAuto, EncodingKind::kNone,
                         EncodingKind::kSinusoidal, EncodingKind::kGaussian}) {
    if (s == encoding_name(e)) return e;
  }
  throw ConfigError("unknown encoding kind: " + s);
}

/// Declarative description of one architecture. Unset count fields (kUnset)
/// resolve to the per-variant recipe in finalized().
struct ModelConfig {
  static constexpr std::size_t kUnset = static_cast<std::size_t>(-1);

  Variant variant = Variant::kProposed;
  std::size_t seq_len = 80;   // L
  std::size_t channels = 6;   // c
  std::size_t num_subjects = 2;

  std::size_t temporal_width = 64;  // d_t
  std::size_t channel_width = 96;   // d_c

  std::size_t layers = kUnset;           // N (leading stack for recurrent variants)
  std::size_t post_layers = kUnset;      // trailing stack after the recurrent layer
  std::size_t recurrent_layers = kUnset; // R
  std::size_t channel_layers = kUnset;   // H
  std::size_t temporal_heads = kUnset;
  std::size_t channel_heads = kUnset;

  std::size_t ranges = 10;  // G
  std::vector<std::size_t> kernel_set;  // multiscale FFN kernels
  double dropout = -1.0;    // -1: 0.1 for transformers, 0.5 for baselines
  std::uint64_t seed = 1;

  std::size_t window = 0;        // sliding window W; 0 = L/4
  std::size_t state_count = 16;  // m recurrent state vectors
  double probsparse_factor = 5.0;
  double autocorr_kappa = 1.0;
  std::size_t head_channels = 8;           // classifier conv channels
  EncodingKind encoding = EncodingKind::kAuto;  // override for experiments

  ModelConfig finalized() const {
    ModelConfig c = *this;
    const bool recurrent = has_recurrent_layer(c.variant);
    if (c.layers == kUnset) {
      switch (c.variant) {
        case Variant::kVanilla:
        case Variant::kInformer:
        case Variant::kAutoformer: c.layers = 5; break;
        case Variant::kBlockRecurrent:
        case Variant::kProposed:
        case Variant::kThat: c.layers = 9; break;
        default: c.layers = 0; break;
      }
    }
    if (c.post_layers == kUnset) c.post_layers = recurrent ? 2 : 0;
    if (c.recurrent_layers == kUnset) c.recurrent_layers = recurrent ? 1 : 0;
    if (c.channel_layers == kUnset)
      c.channel_layers = is_two_stream(c.variant) ? 1 : 0;
    if (c.temporal_heads == kUnset) c.temporal_heads = 8;
    if (c.channel_heads == kUnset) c.channel_heads = 6;
    if (c.kernel_set.empty()) {
      if (c.variant == Variant::kThat) c.kernel_set = {1, 3, 5};
      if (c.variant == Variant::kProposed) c.kernel_set = {1, 3, 5, 7};
    }
    if (c.dropout < 0.0) c.dropout = is_transformer(c.variant) ? 0.1 : 0.5;
    if (c.window == 0) c.window = std::max<std::size_t>(1, c.seq_len / 4);
    c.validate();
    return c;
  }

  void validate() const {
    if (num_subjects < 1) throw ConfigError("num_subjects must be >= 1");
    if (seq_len < 2 || channels < 1) {
      throw ConfigError("invalid input geometry: L=" + std::to_string(seq_len) +
                        " c=" + std::to_string(channels));
    }
    if (dropout < 0.0 || dropout >= 1.0) {
      throw ConfigError("dropout must lie in [0,1)");
    }
    if (!is_transformer(variant)) {
      if (recurrent_layers != 0 && recurrent_layers != kUnset) {
        throw ConfigError("baselines take no recurrent layers");
      }
      return;
    }
    if (temporal_width % temporal_heads != 0) {
      throw ConfigError("temporal heads " + std::to_string(temporal_heads) +
                        " do not divide width " + std::to_string(temporal_width));
    }
    if (is_two_stream(variant) && channel_width % channel_heads != 0) {
      throw ConfigError("channel heads " + std::to_string(channel_heads) +
                        " do not divide width " + std::to_string(channel_width));
    }
    if (has_recurrent_layer(variant)) {
      if (recurrent_layers < 1) {
        throw ConfigError("recurrent variants need recurrent_layers >= 1");
      }
      if (window > seq_len) {
        throw ConfigError("sliding window W=" + std::to_string(window) +
                          " exceeds L=" + std::to_string(seq_len));
      }
      if (state_count < 1) throw ConfigError("state_count must be >= 1");
    } else if (recurrent_layers != 0) {
      throw ConfigError("recurrent layers are only valid for "
                        "block_recurrent/proposed variants");
    }
    if (variant == Variant::kThat && kernel_set != std::vector<std::size_t>{1, 3, 5}) {
      throw ConfigError("the two-stream HAR variant uses kernel set {1,3,5}");
    }
    if (variant == Variant::kProposed &&
        kernel_set != std::vector<std::size_t>{1, 3, 5, 7}) {
      throw ConfigError("the proposed variant uses kernel set {1,3,5,7}");
    }
    for (std::size_t k : kernel_set) {
      if (k % 2 == 0) {
        throw ConfigError("multiscale kernels must be odd, got " +
                          std::to_string(k));
      }
    }
    if (is_gaussian_somewhere() && ranges < 1) {
      throw ConfigError("gaussian range encoding needs G >= 1");
    }
  }

  bool is_gaussian_somewhere() const {
    if (encoding == EncodingKind::kGaussian) return true;
    if (encoding != EncodingKind::kAuto) return false;
    return variant == Variant::kThat || variant == Variant::kProposed;
  }
};

// ---------------------------------------------------------------------------
// Feed-forward sub-layers
// ---------------------------------------------------------------------------

struct PointwiseFfnParams {
  Parameter* w1 = nullptr;
  Parameter* b1 = nullptr;
  Parameter* w2 = nullptr;
  Parameter* b2 = nullptr;
};

inline PointwiseFfnParams make_pointwise_ffn(ParamSet& params,
                                             const std::string& prefix,
                                             std::size_t width, Rng& rng) {
  PointwiseFfnParams p;
  const std::size_t hidden = 4 * width;
  p.w1 = &params.add(prefix + ".w1", detail::glorot({width, hidden}, width, hidden, rng));
  p.b1 = &params.add(prefix + ".b1", Tensor({hidden}));
  p.w2 = &params.add(prefix + ".w2", detail::glorot({hidden, width}, hidden, width, rng));
  p.b2 = &params.add(prefix + ".b2", Tensor({width}));
  return p;
}

struct LayerCtx {
  bool training = false;
  Rng* rng = nullptr;
  double dropout = 0.1;
};

/// Two affine maps with a ReLU and dropout in between, applied to each token
/// row independently; the hidden layer is 4x the model width.
inline Var pointwise_ffn(const Var& x, const PointwiseFfnParams& p,
                         const LayerCtx& ctx) {
  Var h = relu(affine(x, p.w1->var(), p.b1->var()));
  h = dropout(h, ctx.dropout, ctx.training, ctx.rng);
  return affine(h, p.w2->var(), p.b2->var());
}

struct MultiScaleFfnParams {
  std::vector<std::size_t> kernel_sizes;
  std::vector<Parameter*> kernels;  // each [d x d x k]
  std::vector<Parameter*> biases;   // each [d]
  Parameter* scale_logits = nullptr;
};

inline MultiScaleFfnParams make_multiscale_ffn(
    ParamSet& params, const std::string& prefix, std::size_t width,
    const std::vector<std::size_t>& kernel_sizes, Rng& rng) {
  if (kernel_sizes.empty()) {
    throw ConfigError("multiscale FFN needs at least one kernel size");
  }
  MultiScaleFfnParams p;
  p.kernel_sizes = kernel_sizes;
  for (std::size_t k : kernel_sizes) {
    if (k % 2 == 0) {
      throw ConfigError("multiscale kernels must be odd for same padding");
    }
    p.kernels.push_back(&params.add(
        prefix + ".k" + std::to_string(k) + ".w",
        detail::glorot({width, width, k}, width * k, width * k, rng)));
    p.biases.push_back(
        &params.add(prefix + ".k" + std::to_string(k) + ".b", Tensor({width})));
  }
  p.scale_logits = &params.add(prefix + ".scale",
                               Tensor({kernel_sizes.size()}));
  return p;
}

/// Parallel same-padded convolutions over the time axis, one branch per
/// kernel size, blended by softmaxed per-branch scale logits.
inline Var multiscale_cnn_ffn(const Var& x, const MultiScaleFfnParams& p,
                              const LayerCtx& ctx) {
  Var xt = transpose(x);  // [d x L]: channels convolve over time
  std::vector<Var> branches;
  branches.reserve(p.kernels.size());
  for (std::size_t i = 0; i < p.kernels.size(); ++i) {
    Var h = conv1d(xt, p.kernels[i]->var(), Padding::kSame);
    h = relu(add_colvec(h, p.biases[i]->var()));
    h = dropout(h, ctx.dropout, ctx.training, ctx.rng);
    branches.push_back(h);
  }
  Var weights = softmax(p.scale_logits->var(), 0);
  Var combined = scale_by_elem(branches[0], weights, 0);
  for (std::size_t i = 1; i < branches.size(); ++i) {
    combined = add(combined, scale_by_elem(branches[i], weights, i));
  }
  return transpose(combined);
}

// ---------------------------------------------------------------------------
// Encoder layers
// ---------------------------------------------------------------------------

enum class LayerKind {
  kVanillaFull,
  kInformerProbsparse,
  kAutoformerAutocorr,
  kBlockrecVertical,
  kBlockrecHorizontal,
  kThatTemporal,
  kThatChannel,
  kProposedTemporal,
  kProposedChannel,
  kProposedRecurrent,
};

inline bool is_recurrent_kind(LayerKind k) {
  return k == LayerKind::kBlockrecHorizontal || k == LayerKind::kProposedRecurrent;
}
inline bool is_blockrec_kind(LayerKind k) {
  return k == LayerKind::kBlockrecVertical || is_recurrent_kind(k);
}
inline bool uses_multiscale_ffn(LayerKind k) {
  switch (k) {
    case LayerKind::kThatTemporal:
    case LayerKind::kThatChannel:
    case LayerKind::kProposedTemporal:
    case LayerKind::kProposedChannel:
    case LayerKind::kProposedRecurrent:
      return true;
    default:
      return false;
  }
}

struct EncoderLayerParams {
  LayerKind kind = LayerKind::kVanillaFull;
  AttentionConfig attn_cfg;
  MultiHeadParams attn;
  // block-recurrent kinds only
  AttentionConfig cross_cfg;
  MultiHeadParams cross;        // tokens query the states
  MultiHeadParams state_cross;  // states query the tokens
  MultiHeadParams state_self;   // states attend among themselves
  RecurrentGateParams gate;
  std::size_t block_width = 0;
  // shared
  Parameter* ln1_gamma = nullptr;
  Parameter* ln1_beta = nullptr;
  Parameter* ln2_gamma = nullptr;
  Parameter* ln2_beta = nullptr;
  PointwiseFfnParams pw;
  MultiScaleFfnParams ms;
};

namespace detail {

inline Var layer_ffn(const Var& x, const EncoderLayerParams& p,
                     const LayerCtx& ctx) {
  return uses_multiscale_ffn(p.kind) ? multiscale_cnn_ffn(x, p.ms, ctx)
                                     : pointwise_ffn(x, p.pw, ctx);
}

/// Pre-norm token update of the block-recurrent family: masked self-attention
/// plus cross-attention to the states, both added back onto the residual
/// stream, then the FFN sub-layer. Dropout sits before the attention and
/// after the FFN.
inline Var blockrec_token_update(const Var& x, const Var& state,
                                 const EncoderLayerParams& p,
                                 const LayerCtx& ctx, std::size_t window) {
  Var a = layer_norm(x, p.ln1_gamma->var(), p.ln1_beta->var());
  a = dropout(a, ctx.dropout, ctx.training, ctx.rng);
  AttentionConfig self_cfg = p.attn_cfg;
  self_cfg.window = std::min<std::size_t>(window, x.value().rows());
  Var mixed = add(multi_head(a, a, self_cfg, p.attn),
                  multi_head(a, state, p.cross_cfg, p.cross));
  Var x1 = add(x, mixed);
  Var b = layer_norm(x1, p.ln2_gamma->var(), p.ln2_beta->var());
  Var f = dropout(layer_ffn(b, p, ctx), ctx.dropout, ctx.training, ctx.rng);
  return add(x1, f);
}

}  // namespace detail

/// Registers all parameters of one encoder layer. `block_width` is the
/// sliding window W of the block-recurrent kinds (ignored elsewhere).
inline EncoderLayerParams make_encoder_layer(
    ParamSet& params, const std::string& prefix, LayerKind kind,
    std::size_t width, std::size_t heads,
    const std::vector<std::size_t>& kernel_set, std::size_t block_width,
    double probsparse_factor, double autocorr_kappa, Rng& rng) {
  EncoderLayerParams layer;
  layer.kind = kind;
  layer.attn_cfg.heads = heads;
  layer.attn_cfg.probsparse_factor = probsparse_factor;
  layer.attn_cfg.autocorr_kappa = autocorr_kappa;
  switch (kind) {
    case LayerKind::kInformerProbsparse:
      layer.attn_cfg.mechanism = Mechanism::kProbSparse;
      break;
    case LayerKind::kAutoformerAutocorr:
    case LayerKind::kProposedTemporal:
    case LayerKind::kProposedChannel:
      layer.attn_cfg.mechanism = Mechanism::kAutoCorr;
      break;
    default:
      layer.attn_cfg.mechanism = Mechanism::kFull;
      break;
  }
  layer.attn = make_multi_head(params, prefix + ".attn", width, layer.attn_cfg, rng);
  if (is_blockrec_kind(kind)) {
    if (block_width < 1) throw ConfigError("block-recurrent layers need W >= 1");
    layer.block_width = block_width;
    layer.cross_cfg = layer.attn_cfg;
    layer.cross_cfg.mechanism = Mechanism::kCross;
    layer.cross_cfg.window = 0;
    layer.cross = make_multi_head(params, prefix + ".cross", width,
                                  layer.cross_cfg, rng);
    if (is_recurrent_kind(kind)) {
      layer.state_cross = make_multi_head(params, prefix + ".state_cross",
                                          width, layer.cross_cfg, rng);
      layer.state_self = make_multi_head(params, prefix + ".state_self", width,
                                         layer.cross_cfg, rng);
      layer.gate = make_recurrent_gate(params, prefix + ".gate", width, rng);
    }
  }
  layer.ln1_gamma = &params.add(prefix + ".ln1.gamma", Tensor({width}, 1.0));
  layer.ln1_beta = &params.add(prefix + ".ln1.beta", Tensor({width}));
  layer.ln2_gamma = &params.add(prefix + ".ln2.gamma", Tensor({width}, 1.0));
  layer.ln2_beta = &params.add(prefix + ".ln2.beta", Tensor({width}));
  if (uses_multiscale_ffn(kind)) {
    layer.ms = make_multiscale_ffn(params, prefix + ".ffn", width, kernel_set, rng);
  } else {
    layer.pw = make_pointwise_ffn(params, prefix + ".ffn", width, rng);
  }
  return layer;
}

/// One encoder layer. Post-norm kinds follow LayerNorm(X + Sublayer(X));
/// block-recurrent kinds normalize first and, for the recurrent kinds, sweep
/// the sequence in width-W blocks carrying the state across blocks. `state`
/// is required for the block-recurrent kinds and is updated in place by the
/// recurrent ones.
inline Var encoder_layer(const Var& x, const EncoderLayerParams& p,
                         const LayerCtx& ctx, Var* state = nullptr) {
  if (is_blockrec_kind(p.kind)) {
    if (state == nullptr || !state->defined()) {
      throw ContractError("block-recurrent layers need a recurrent state");
    }
    const std::size_t window = p.block_width;
    if (!is_recurrent_kind(p.kind)) {
      return detail::blockrec_token_update(x, *state, p, ctx, window);
    }
    // recurrent: process the tokens in consecutive width-W blocks
    const std::size_t length = x.value().rows();
    std::vector<Var> out_blocks;
    for (std::size_t start = 0; start < length; start += window) {
      const std::size_t stop = std::min(length, start + window);
      Var xb = slice_rows(x, start, stop);
      out_blocks.push_back(
          detail::blockrec_token_update(xb, *state, p, ctx, window));
      // state side: cross-attention into the block plus self-attention,
      // merged through the convex gate instead of a residual
      Var h = add(multi_head(*state, out_blocks.back(), p.cross_cfg, p.state_cross),
                  multi_head(*state, *state, p.cross_cfg, p.state_self));
      *state = recurrent_state_update(*state, h, p.gate);
    }
    return out_blocks.size() == 1 ? out_blocks[0] : concat_rows(out_blocks);
  }

  // post-norm family
  Var mixed = multi_head(x, x, p.attn_cfg, p.attn);
  Var y1 = layer_norm(add(x, mixed), p.ln1_gamma->var(), p.ln1_beta->var());
  Var f = detail::layer_ffn(y1, p, ctx);
  return layer_norm(add(y1, f), p.ln2_gamma->var(), p.ln2_beta->var());
}

}  // namespace gaitformer
