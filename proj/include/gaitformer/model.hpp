// Copyright (c) 2026 the gaitformer authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gaitformer/blocks.hpp"

namespace gaitformer {

// ---------------------------------------------------------------------------
// Shared classification head (transformer variants)
// ---------------------------------------------------------------------------

struct HeadParams {
  Parameter* conv1 = nullptr;
  Parameter* bias1 = nullptr;
  Parameter* conv2 = nullptr;
  Parameter* bias2 = nullptr;
  Parameter* out_w = nullptr;
  Parameter* out_b = nullptr;
  std::size_t kernel = 0;
};

/// Head geometry: two same-padded conv layers over the pooled feature vector
/// treated as a one-channel sequence. The nominal kernel size 128 is clamped
/// to the feature length and forced odd, since pooled features are shorter
/// than 128 at desk scale.
inline HeadParams make_classification_head(ParamSet& params,
                                           const std::string& prefix,
                                           std::size_t feature_len,
                                           std::size_t conv_channels,
                                           std::size_t num_subjects, Rng& rng) {
  if (feature_len < 2) throw ConfigError("classification head needs >= 2 features");
  HeadParams h;
  std::size_t k = std::min<std::size_t>(128, feature_len);
  if (k % 2 == 0) --k;
  h.kernel = std::max<std::size_t>(1, k);
  h.conv1 = &params.add(prefix + ".conv1.w",
                        detail::glorot({conv_channels, 1, h.kernel}, h.kernel,
                                       conv_channels * h.kernel, rng));
  h.bias1 = &params.add(prefix + ".conv1.b", Tensor({conv_channels}));
  h.conv2 = &params.add(prefix + ".conv2.w",
                        detail::glorot({conv_channels, conv_channels, h.kernel},
                                       conv_channels * h.kernel,
                                       conv_channels * h.kernel, rng));
  h.bias2 = &params.add(prefix + ".conv2.b", Tensor({conv_channels}));
  const std::size_t flat = conv_channels * (feature_len / 2);
  h.out_w = &params.add(prefix + ".out.w",
                        detail::glorot({flat, num_subjects}, flat, num_subjects, rng));
  h.out_b = &params.add(prefix + ".out.b", Tensor({num_subjects}));
  return h;
}

/// Pooled features -> logits. Softmax is applied only inside the loss or by
/// the evaluator; the head emits raw scores.
inline Var classification_head(const Var& features, const HeadParams& p,
                               const LayerCtx& ctx) {
  Var x = reshape(features, {1, features.size()});
  Var h = relu(add_colvec(conv1d(x, p.conv1->var(), Padding::kSame), p.bias1->var()));
  h = dropout(h, ctx.dropout, ctx.training, ctx.rng);
  h = relu(add_colvec(conv1d(h, p.conv2->var(), Padding::kSame), p.bias2->var()));
  h = dropout(h, ctx.dropout, ctx.training, ctx.rng);
  h = maxpool2(h);
  Var flat = reshape(h, {1, h.size()});
  return flatten(affine(flat, p.out_w->var(), p.out_b->var()));
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

namespace detail {

struct StreamParams {
  Parameter* proj_w = nullptr;
  Parameter* proj_b = nullptr;
  EncodingKind encoding = EncodingKind::kNone;
  GaussianRangeParams gaussian;
  std::vector<EncoderLayerParams> layers;
};

struct ConvBaselineParams {
  std::vector<Parameter*> kernels;  // [6 x c_in x 5] then [6 x 6 x 5]
  std::vector<Parameter*> biases;
};

struct LstmBaselineParams {
  struct Cell {
    Parameter* wx;
    Parameter* wh;
    Parameter* b;
  };
  std::vector<Cell> cells;
};

struct DenseHeadParams {
  Parameter* dense_w = nullptr;
  Parameter* dense_b = nullptr;
  Parameter* out_w = nullptr;
  Parameter* out_b = nullptr;
};

}  // namespace detail

/// One built architecture: an ordered parameter collection plus a forward
/// procedure from a [c x L] window to per-subject logits.
class Model {
 public:
  struct Forward {
    Var logits;           // [num_subjects]
    Var features;         // pooled pre-head features (transformers)
    Var temporal_tokens;  // temporal-stream tokens before pooling
  };

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  explicit Model(const ModelConfig& raw) : cfg_(raw.finalized()) {
    Rng rng(cfg_.seed);
    switch (cfg_.variant) {
      case Variant::kCnn:
        build_conv(rng);
        build_dense_head(conv_feature_len(), rng);
        break;
      case Variant::kRnn:
        build_lstm(rng);
        build_dense_head(3 * cfg_.seq_len, rng);
        break;
      case Variant::kCnnRnn:
        build_conv(rng);
        build_lstm(rng);
        build_dense_head(6 * cfg_.seq_len + 3 * cfg_.seq_len, rng);
        break;
      default: {
        build_temporal_stream(rng);
        std::size_t features = cfg_.temporal_width;
        if (is_two_stream(cfg_.variant)) {
          build_channel_stream(rng);
          features += cfg_.channel_width;
        }
        head_ = make_classification_head(params_, "head", features,
                                         cfg_.head_channels, cfg_.num_subjects,
                                         rng);
        break;
      }
    }
  }

  const ModelConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  std::size_t param_count() const { return params_.total_values(); }

  std::vector<LayerKind> temporal_layer_kinds() const {
    std::vector<LayerKind> kinds;
    kinds.reserve(temporal_.layers.size());
    for (const auto& l : temporal_.layers) kinds.push_back(l.kind);
    return kinds;
  }

  Forward forward(const Tensor& window, bool training = false,
                  Rng* rng = nullptr) {
    if (window.rank() != 2 || window.rows() != cfg_.channels ||
        window.cols() != cfg_.seq_len) {
      throw ShapeError("model expects a [" + std::to_string(cfg_.channels) +
                       " x " + std::to_string(cfg_.seq_len) +
                       "] window, got " + shape_str(window.shape()));
    }
    if (training && rng == nullptr && cfg_.dropout > 0.0) {
      throw ContractError("training forward needs an Rng for dropout");
    }
    LayerCtx ctx{training, rng, cfg_.dropout};
    Forward out;
    switch (cfg_.variant) {
      case Variant::kCnn: {
        Var f = conv_features(Var::constant(window), ctx);
        out.features = f;
        out.logits = dense_head(f);
        break;
      }
      case Variant::kRnn: {
        Var f = lstm_features(Var::constant(window));
        out.features = f;
        out.logits = dense_head(f);
        break;
      }
      case Variant::kCnnRnn: {
        Var f = concat_feature_vectors(conv_features(Var::constant(window), ctx),
                                       lstm_features(Var::constant(window)));
        out.features = f;
        out.logits = dense_head(f);
        break;
      }
      default: {
        Var tokens = run_stream(temporal_, Var::constant(window), true, ctx);
        out.temporal_tokens = tokens;
        Var pooled = mean_rows(tokens);
        if (is_two_stream(cfg_.variant)) {
          Var ctokens = run_stream(channel_, Var::constant(window), false, ctx);
          pooled = concat_feature_vectors(pooled, mean_rows(ctokens));
        }
        out.features = pooled;
        out.logits = classification_head(pooled, head_, ctx);
        break;
      }
    }
    if (!out.logits.value().all_finite()) {
      throw DivergenceError("forward produced non-finite logits");
    }
    return out;
  }

 private:
  static Var concat_feature_vectors(const Var& a, const Var& b) {
    Var ra = reshape(a, {1, a.size()});
    Var rb = reshape(b, {1, b.size()});
    return flatten(concat_cols({ra, rb}));
  }

  // ---- transformer streams -------------------------------------------------

  EncodingKind resolve_encoding(bool temporal_stream) const {
    if (cfg_.encoding != EncodingKind::kAuto) return cfg_.encoding;
    switch (cfg_.variant) {
      case Variant::kThat:
        return temporal_stream ? EncodingKind::kGaussian
                               : EncodingKind::kSinusoidal;
      case Variant::kProposed: return EncodingKind::kGaussian;
      default: return EncodingKind::kSinusoidal;
    }
  }

  EncoderLayerParams make_layer(const std::string& prefix, LayerKind kind,
                                std::size_t width, std::size_t heads, Rng& rng) {
    return make_encoder_layer(params_, prefix, kind, width, heads,
                              cfg_.kernel_set, cfg_.window,
                              cfg_.probsparse_factor, cfg_.autocorr_kappa, rng);
  }

  void build_temporal_stream(Rng& rng) {
    const std::size_t width = cfg_.temporal_width;
    temporal_.proj_w = &params_.add(
        "temporal.proj.w",
        detail::glorot({cfg_.channels, width}, cfg_.channels, width, rng));
    temporal_.proj_b = &params_.add("temporal.proj.b", Tensor({width}));
    temporal_.encoding = resolve_encoding(true);
    if (temporal_.encoding == EncodingKind::kGaussian) {
      temporal_.gaussian = make_gaussian_range(params_, "temporal.encoding",
                                               cfg_.ranges, cfg_.seq_len, width,
                                               rng);
    } else if (temporal_.encoding == EncodingKind::kSinusoidal && width % 2 != 0) {
      throw ConfigError("sinusoidal encoding needs an even temporal width");
    }

    std::vector<LayerKind> kinds;
    switch (cfg_.variant) {
      case Variant::kVanilla:
        kinds.assign(cfg_.layers, LayerKind::kVanillaFull);
        break;
      case Variant::kInformer:
        kinds.assign(cfg_.layers, LayerKind::kInformerProbsparse);
        break;
      case Variant::kAutoformer:
        kinds.assign(cfg_.layers, LayerKind::kAutoformerAutocorr);
        break;
      case Variant::kThat:
        kinds.assign(cfg_.layers, LayerKind::kThatTemporal);
        break;
      case Variant::kBlockRecurrent:
        kinds.assign(cfg_.layers, LayerKind::kBlockrecVertical);
        kinds.insert(kinds.end(), cfg_.recurrent_layers,
                     LayerKind::kBlockrecHorizontal);
        kinds.insert(kinds.end(), cfg_.post_layers, LayerKind::kBlockrecVertical);
        break;
      case Variant::kProposed:
        kinds.assign(cfg_.layers, LayerKind::kProposedTemporal);
        kinds.insert(kinds.end(), cfg_.recurrent_layers,
                     LayerKind::kProposedRecurrent);
        kinds.insert(kinds.end(), cfg_.post_layers, LayerKind::kProposedTemporal);
        break;
      default:
        throw ContractError("not a transformer variant");
    }
    for (std::size_t i = 0; i < kinds.size(); ++i) {
      temporal_.layers.push_back(make_layer("temporal.layer" + std::to_string(i),
                                            kinds[i], width,
                                            cfg_.temporal_heads, rng));
    }
  }

  void build_channel_stream(Rng& rng) {
    const std::size_t width = cfg_.channel_width;
    channel_.proj_w = &params_.add(
        "channel.proj.w",
        detail::glorot({cfg_.seq_len, width}, cfg_.seq_len, width, rng));
    channel_.proj_b = &params_.add("channel.proj.b", Tensor({width}));
    channel_.encoding = resolve_encoding(false);
    if (channel_.encoding == EncodingKind::kGaussian) {
      channel_.gaussian = make_gaussian_range(params_, "channel.encoding",
                                              cfg_.ranges, cfg_.channels, width,
                                              rng);
    } else if (channel_.encoding == EncodingKind::kSinusoidal && width % 2 != 0) {
      throw ConfigError("sinusoidal encoding needs an even channel width");
    }
    const LayerKind kind = cfg_.variant == Variant::kThat
                               ? LayerKind::kThatChannel
                               : LayerKind::kProposedChannel;
    for (std::size_t i = 0; i < cfg_.channel_layers; ++i) {
      channel_.layers.push_back(make_layer("channel.layer" + std::to_string(i),
                                           kind, width, cfg_.channel_heads, rng));
    }
  }

  /// Temporal stream tokenizes time steps (rows of the transposed window);
  /// the channel stream tokenizes the channels of the raw window.
  Var run_stream(detail::StreamParams& stream, const Var& window,
                 bool temporal_stream, const LayerCtx& ctx) {
    Var tokens = temporal_stream ? transpose(window) : window;
    tokens = affine(tokens, stream.proj_w->var(), stream.proj_b->var());
    switch (stream.encoding) {
      case EncodingKind::kSinusoidal: tokens = sinusoidal_encode(tokens); break;
      case EncodingKind::kGaussian:
        tokens = gaussian_range_encode(tokens, stream.gaussian);
        break;
      default: break;
    }
    // recurrent states start at zero for every forward pass
    Var state;
    if (has_recurrent_layer(cfg_.variant) && temporal_stream) {
      state = Var::constant(
          Tensor({cfg_.state_count, cfg_.temporal_width}));
    }
    for (auto& layer : stream.layers) {
      tokens = encoder_layer(tokens, layer, ctx,
                             state.defined() ? &state : nullptr);
    }
    return tokens;
  }

  // ---- baselines -----------------------------------------------------------

  std::size_t conv_feature_len() const {
    const std::size_t after_pools = (cfg_.seq_len / 2) / 2;
    return 6 * after_pools;
  }

  void build_conv(Rng& rng) {
    std::size_t in_ch = cfg_.channels;
    for (int i = 0; i < 4; ++i) {
      conv_.kernels.push_back(&params_.add(
          "cnn.conv" + std::to_string(i + 1) + ".w",
          detail::glorot({6, in_ch, 5}, in_ch * 5, 6 * 5, rng)));
      conv_.biases.push_back(
          &params_.add("cnn.conv" + std::to_string(i + 1) + ".b", Tensor({6})));
      in_ch = 6;
    }
  }

  /// Four width-5 conv layers, max-pool + dropout after every second one
  /// (cnn variant) or dropout after every conv with no pooling (cnn_rnn).
  Var conv_features(const Var& window, const LayerCtx& ctx) {
    const bool pooled = cfg_.variant == Variant::kCnn;
    Var h = window;
    for (std::size_t i = 0; i < conv_.kernels.size(); ++i) {
      h = relu(add_colvec(conv1d(h, conv_.kernels[i]->var(), Padding::kSame),
                          conv_.biases[i]->var()));
      if (pooled) {
        if (i % 2 == 1) {
          h = maxpool2(h);
          h = dropout(h, cfg_.dropout, ctx.training, ctx.rng);
        }
      } else {
        h = dropout(h, cfg_.dropout, ctx.training, ctx.rng);
      }
    }
    return flatten(h);
  }

  void build_lstm(Rng& rng) {
    std::size_t din = cfg_.channels;
    for (int i = 0; i < 3; ++i) {
      const std::string prefix = "rnn.lstm" + std::to_string(i + 1);
      lstm_.cells.push_back(
          {&params_.add(prefix + ".wx",
                        detail::glorot({din, 12}, din, 12, rng)),
           &params_.add(prefix + ".wh", detail::glorot({3, 12}, 3, 12, rng)),
           &params_.add(prefix + ".b", Tensor({12}))});
      din = 3;
    }
  }

  /// Three stacked 3-unit LSTM layers over the time-major window; the full
  /// hidden sequence is flattened into the feature vector.
  Var lstm_features(const Var& window) {
    Var h = transpose(window);
    for (auto& cell : lstm_.cells) {
      h = lstm_layer(h, cell.wx->var(), cell.wh->var(), cell.b->var(), 3);
    }
    return flatten(h);
  }

  void build_dense_head(std::size_t feature_len, Rng& rng) {
    const std::size_t dense = 3 * cfg_.seq_len / 2;
    dense_.dense_w = &params_.add(
        "head.dense.w", detail::glorot({feature_len, dense}, feature_len, dense, rng));
    dense_.dense_b = &params_.add("head.dense.b", Tensor({dense}));
    dense_.out_w = &params_.add(
        "head.out.w",
        detail::glorot({dense, cfg_.num_subjects}, dense, cfg_.num_subjects, rng));
    dense_.out_b = &params_.add("head.out.b", Tensor({cfg_.num_subjects}));
  }

  Var dense_head(const Var& features) {
    Var x = reshape(features, {1, features.size()});
    Var h = relu(affine(x, dense_.dense_w->var(), dense_.dense_b->var()));
    return flatten(affine(h, dense_.out_w->var(), dense_.out_b->var()));
  }

  ModelConfig cfg_;
  ParamSet params_;
  detail::StreamParams temporal_;
  detail::StreamParams channel_;
  HeadParams head_;
  detail::ConvBaselineParams conv_;
  detail::LstmBaselineParams lstm_;
  detail::DenseHeadParams dense_;
};

/// Validates the configuration and constructs the architecture it describes.
inline Model build_model(const ModelConfig& cfg) { return Model(cfg); }

}  // namespace gaitformer
