// Copyright (c) 2026 the gaitformer authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "gaitformer/fft.hpp"
#include "gaitformer/ops.hpp"

namespace gaitformer {

enum class Mechanism { kFull, kProbSparse, kAutoCorr, kCross };

inline const char* mechanism_name(Mechanism m) {
  switch (m) {
    case Mechanism::kFull: return "full";
    case Mechanism::kProbSparse: return "probsparse";
    case Mechanism::kAutoCorr: return "autocorr";
    case Mechanism::kCross: return "cross";
  }
  return "?";
}

/// Per-sub-layer attention settings. Per-head key/value dims default to
/// d/heads so the h heads tile the model width exactly.
struct AttentionConfig {
  std::size_t heads = 8;
  std::size_t key_dim = 0;    // per head; 0 = model_width / heads
  std::size_t value_dim = 0;  // per head; 0 = model_width / heads
  Mechanism mechanism = Mechanism::kFull;
  std::size_t window = 0;  // sliding causal window; 0 = unmasked
  double probsparse_factor = 5.0;
  double autocorr_kappa = 1.0;

  void validate(std::size_t model_width) const {
    if (heads == 0) throw ConfigError("attention needs at least one head");
    if (model_width % heads != 0 && (key_dim == 0 || value_dim == 0)) {
      throw ConfigError("heads " + std::to_string(heads) +
                        " do not divide model width " +
                        std::to_string(model_width));
    }
    const std::size_t dv = value_dim ? value_dim : model_width / heads;
    if (heads * dv != model_width) {
      throw ConfigError("head value dims must tile the model width: " +
                        std::to_string(heads) + " x " + std::to_string(dv) +
                        " != " + std::to_string(model_width));
    }
    if (probsparse_factor < 1.0) throw ConfigError("probsparse factor must be >= 1");
    if (autocorr_kappa < 1.0) throw ConfigError("autocorr top-k factor must be >= 1");
  }

  std::size_t kdim(std::size_t model_width) const {
    return key_dim ? key_dim : model_width / heads;
  }
  std::size_t vdim(std::size_t model_width) const {
    return value_dim ? value_dim : model_width / heads;
  }
};

/// Causal band mask: position i may attend to j iff i - W < j <= i.
/// Returned as a 0/1 tensor; 1 marks an allowed pair.
inline Tensor sliding_window_mask(std::size_t length, std::size_t window) {
  if (window < 1 || window > length) {
    throw ConfigError("sliding window must satisfy 1 <= W <= L, got W=" +
                      std::to_string(window) + " L=" + std::to_string(length));
  }
  Tensor mask({length, length});
  for (std::size_t i = 0; i < length; ++i) {
    const std::size_t lo = i + 1 > window ? i + 1 - window : 0;
    for (std::size_t j = lo; j <= i; ++j) mask(i, j) = 1.0;
  }
  return mask;
}

namespace attn_detail {

/// Scaled-dot-product forward shared by the tape op and the benchmark.
/// Masked pairs get exactly zero weight; a fully masked row is an error.
inline void full_forward(const Tensor& q, const Tensor& k, const Tensor& v,
                         const Tensor* mask, Tensor& weights, Tensor& out) {
  const std::size_t lq = q.rows(), lk = k.rows();
  const std::size_t dk = q.cols(), dv = v.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  weights = Tensor({lq, lk});
  out = Tensor({lq, dv});
  std::vector<double> scores(lk);
  for (std::size_t i = 0; i < lq; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < lk; ++j) {
      if (mask != nullptr && (*mask)(i, j) < 0.5) continue;
      double s = 0.0;
      for (std::size_t c = 0; c < dk; ++c) s += q(i, c) * k(j, c);
      scores[j] = s * scale;
      mx = std::max(mx, scores[j]);
    }
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw DegenerateMaskError("attention row " + std::to_string(i) +
                                " has every key masked");
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < lk; ++j) {
      if (mask != nullptr && (*mask)(i, j) < 0.5) continue;
      const double e = std::exp(scores[j] - mx);
      weights(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < lk; ++j) {
      if (weights(i, j) == 0.0) continue;
      weights(i, j) /= sum;
      const double w = weights(i, j);
      for (std::size_t c = 0; c < dv; ++c) out(i, c) += w * v(j, c);
    }
  }
}

/// Banded self-attention forward: query i sees keys (i-W, i]. O(L W d).
/// band(i, w) is the weight on key j = i - W + 1 + w.
inline void sliding_forward(const Tensor& q, const Tensor& k, const Tensor& v,
                            std::size_t window, Tensor& band, Tensor& out) {
  const std::size_t length = q.rows(), dk = q.cols(), dv = v.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  band = Tensor({length, window});
  out = Tensor({length, dv});
  std::vector<double> scores(window);
  for (std::size_t i = 0; i < length; ++i) {
    const std::size_t lo = i + 1 > window ? i + 1 - window : 0;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = lo; j <= i; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < dk; ++c) s += q(i, c) * k(j, c);
      scores[j - lo] = s * scale;
      mx = std::max(mx, scores[j - lo]);
    }
    double sum = 0.0;
    for (std::size_t j = lo; j <= i; ++j) {
      const double e = std::exp(scores[j - lo] - mx);
      scores[j - lo] = e;
      sum += e;
    }
    for (std::size_t j = lo; j <= i; ++j) {
      const double w = scores[j - lo] / sum;
      band(i, window - 1 - (i - j)) = w;  // most recent key in the last slot
      for (std::size_t c = 0; c < dv; ++c) out(i, c) += w * v(j, c);
    }
  }
}

/// Lag scores R(tau) = mean over channels of the circular correlation of the
/// matching Q/K columns, via the spectrum product.
inline Tensor autocorr_forward(const Tensor& q, const Tensor& k) {
  const std::size_t length = q.rows(), width = q.cols();
  std::vector<fft_detail::cd> acc(length, {0.0, 0.0});
  std::vector<fft_detail::cd> fq(length), fk(length);
  for (std::size_t c = 0; c < width; ++c) {
    for (std::size_t t = 0; t < length; ++t) {
      fq[t] = fft_detail::cd(q(t, c), 0.0);
      fk[t] = fft_detail::cd(k(t, c), 0.0);
    }
    fft_detail::fft(fq);
    fft_detail::fft(fk);
    for (std::size_t t = 0; t < length; ++t) acc[t] += fq[t] * std::conj(fk[t]);
  }
  fft_detail::ifft(acc);
  Tensor r({length});
  for (std::size_t t = 0; t < length; ++t)
    r(t) = acc[t].real() / static_cast<double>(width);
  return r;
}

}  // namespace attn_detail

/// softmax(Q K^T / sqrt(d_k)) V with an optional 0/1 mask. Masked positions
/// receive exactly zero attention weight. `weights_out`, when given, receives
/// the row-stochastic weight matrix (testing hook).
inline Var full_attention(const Var& q, const Var& k, const Var& v,
                          const Tensor* mask = nullptr,
                          Tensor* weights_out = nullptr) {
  if (q.value().rank() != 2 || k.value().rank() != 2 || v.value().rank() != 2 ||
      q.value().cols() != k.value().cols() ||
      k.value().rows() != v.value().rows()) {
    throw ShapeError("full_attention expects Q[Lq x dk], K[Lk x dk], V[Lk x dv]");
  }
  if (mask != nullptr && (mask->rank() != 2 || mask->rows() != q.value().rows() ||
                          mask->cols() != k.value().rows())) {
    throw ShapeError("attention mask must be [Lq x Lk]");
  }
  Tensor weights, out;
  attn_detail::full_forward(q.value(), k.value(), v.value(), mask, weights, out);
  if (weights_out != nullptr) *weights_out = weights;

  const std::size_t lq = q.value().rows(), lk = k.value().rows();
  const std::size_t dk = q.value().cols(), dv = v.value().cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  return ag::make_op(
      std::move(out), {q, k, v},
      [q, k, v, weights, lq, lk, dk, dv, scale](ag::Node& n) {
        Tensor gq({lq, dk}), gk({lk, dk}), gv({lk, dv});
        std::vector<double> dp(lk);
        for (std::size_t i = 0; i < lq; ++i) {
          double rowdot = 0.0;
          for (std::size_t j = 0; j < lk; ++j) {
            if (weights(i, j) == 0.0) {
              dp[j] = 0.0;
              continue;
            }
            double s = 0.0;
            for (std::size_t c = 0; c < dv; ++c)
              s += n.grad(i, c) * v.value()(j, c);
            dp[j] = s;
            rowdot += s * weights(i, j);
            for (std::size_t c = 0; c < dv; ++c)
              gv(j, c) += weights(i, j) * n.grad(i, c);
          }
          for (std::size_t j = 0; j < lk; ++j) {
            const double w = weights(i, j);
            if (w == 0.0) continue;
            const double ds = w * (dp[j] - rowdot) * scale;
            for (std::size_t c = 0; c < dk; ++c) {
              gq(i, c) += ds * k.value()(j, c);
              gk(j, c) += ds * q.value()(i, c);
            }
          }
        }
        ag::accumulate(*q.node(), gq);
        ag::accumulate(*k.node(), gk);
        ag::accumulate(*v.node(), gv);
      });
}

/// Causal sliding-window self-attention, computed over the band only, so the
/// cost is O(L W d) rather than O(L^2 d).
inline Var sliding_attention(const Var& q, const Var& k, const Var& v,
                             std::size_t window) {
  const std::size_t length = q.value().rows();
  if (q.value().rank() != 2 || k.value().rows() != length ||
      v.value().rows() != length || q.value().cols() != k.value().cols()) {
    throw ShapeError("sliding_attention expects same-length Q, K, V");
  }
  if (window < 1 || window > length) {
    throw ConfigError("sliding window must satisfy 1 <= W <= L");
  }
  Tensor band, out;
  attn_detail::sliding_forward(q.value(), k.value(), v.value(), window, band, out);

  const std::size_t dk = q.value().cols(), dv = v.value().cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  return ag::make_op(
      std::move(out), {q, k, v},
      [q, k, v, band, length, window, dk, dv, scale](ag::Node& n) {
        Tensor gq({length, dk}), gk({length, dk}), gv({length, dv});
        std::vector<double> dp(window);
        for (std::size_t i = 0; i < length; ++i) {
          const std::size_t lo = i + 1 > window ? i + 1 - window : 0;
          double rowdot = 0.0;
          for (std::size_t j = lo; j <= i; ++j) {
            const double w = band(i, window - 1 - (i - j));
            double s = 0.0;
            for (std::size_t c = 0; c < dv; ++c)
              s += n.grad(i, c) * v.value()(j, c);
            dp[j - lo] = s;
            rowdot += s * w;
            for (std::size_t c = 0; c < dv; ++c) gv(j, c) += w * n.grad(i, c);
          }
          for (std::size_t j = lo; j <= i; ++j) {
            const double w = band(i, window - 1 - (i - j));
            const double ds = w * (dp[j - lo] - rowdot) * scale;
            for (std::size_t c = 0; c < dk; ++c) {
              gq(i, c) += ds * k.value()(j, c);
              gk(j, c) += ds * q.value()(i, c);
            }
          }
        }
        ag::accumulate(*q.node(), gq);
        ag::accumulate(*k.node(), gk);
        ag::accumulate(*v.node(), gv);
      });
}

/// Lag-indexed correlation scores between same-shape Q and K series,
/// averaged over channels. Output R has length L, R(tau) pairs each position
/// with the position tau steps earlier (circularly).
inline Var autocorrelation_scores(const Var& q, const Var& k) {
  if (q.value().rank() != 2 || q.value().shape() != k.value().shape()) {
    throw ShapeError("autocorrelation_scores expects same-shape [L x d] Q, K");
  }
  Tensor r = attn_detail::autocorr_forward(q.value(), k.value());
  const std::size_t length = q.value().rows(), width = q.value().cols();
  return ag::make_op(
      std::move(r), {q, k}, [q, k, length, width](ag::Node& n) {
        using fft_detail::cd;
        std::vector<cd> fg(length);
        for (std::size_t t = 0; t < length; ++t) fg[t] = cd(n.grad(t), 0.0);
        fft_detail::fft(fg);
        const double inv_width = 1.0 / static_cast<double>(width);
        Tensor gq(q.value().shape()), gk(k.value().shape());
        std::vector<cd> buf(length), fq(length), fk(length);
        for (std::size_t c = 0; c < width; ++c) {
          for (std::size_t t = 0; t < length; ++t) {
            fq[t] = cd(q.value()(t, c), 0.0);
            fk[t] = cd(k.value()(t, c), 0.0);
          }
          fft_detail::fft(fq);
          fft_detail::fft(fk);
          // dQ_c = (1/d) ifft(fft(gR) . fft(k_c))      (circular convolution)
          for (std::size_t t = 0; t < length; ++t) buf[t] = fg[t] * fk[t];
          fft_detail::ifft(buf);
          for (std::size_t t = 0; t < length; ++t)
            gq(t, c) = buf[t].real() * inv_width;
          // dK_c = (1/d) ifft(fft(q_c) . conj(fft(gR))) (circular correlation)
          for (std::size_t t = 0; t < length; ++t)
            buf[t] = fq[t] * std::conj(fg[t]);
          fft_detail::ifft(buf);
          for (std::size_t t = 0; t < length; ++t)
            gk(t, c) = buf[t].real() * inv_width;
        }
        ag::accumulate(*q.node(), gq);
        ag::accumulate(*k.node(), gk);
      });
}

/// Lags ordered by score, largest first; equal scores break toward the
/// smaller lag so selection is deterministic.
inline std::vector<std::size_t> top_k_lags(const Tensor& r, std::size_t k) {
  std::vector<std::size_t> idx(r.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (r(a) != r(b)) return r(a) > r(b);
    return a < b;
  });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

namespace attn_detail {
inline std::size_t& tda_clamp_counter() {
  static std::size_t count = 0;
  return count;
}
}  // namespace attn_detail

inline std::size_t time_delay_clamp_count() {
  return attn_detail::tda_clamp_counter();
}

/// Auto-correlation mixing: pick the top-k lags of R(Q,K), softmax their raw
/// scores into weights, and blend the correspondingly rolled V series.
inline Var time_delay_aggregate(const Var& q, const Var& k, const Var& v,
                                std::size_t top_k) {
  const std::size_t length = q.value().rows();
  if (top_k < 1) throw ConfigError("time_delay_aggregate needs k >= 1");
  if (top_k > length) {
    top_k = length;
    ++attn_detail::tda_clamp_counter();
  }
  Var r = autocorrelation_scores(q, k);
  const std::vector<std::size_t> taus = top_k_lags(r.value(), top_k);
  Var weights = softmax(select_elems(r, taus), 0);
  Var out = scale_by_elem(roll_rows(v, static_cast<long>(taus[0])), weights, 0);
  for (std::size_t j = 1; j < taus.size(); ++j) {
    out = add(out, scale_by_elem(roll_rows(v, static_cast<long>(taus[j])),
                                 weights, j));
  }
  return out;
}

namespace attn_detail {

/// Shared query-selection step of the sparse attention: score each query by
/// max-minus-mean of its dot products against a sampled key subset, then keep
/// the top u = min(Lq, ceil(f ln Lq)) queries. Sampling is seeded purely by
/// the shapes so inference stays deterministic.
inline std::vector<std::size_t> probsparse_select(const Tensor& q,
                                                  const Tensor& k,
                                                  double factor) {
  const std::size_t lq = q.rows(), lk = k.rows(), dk = q.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  const std::size_t u_keys = std::min<std::size_t>(
      lk, std::max<std::size_t>(
              1, static_cast<std::size_t>(
                     std::ceil(factor * std::log(static_cast<double>(lk))))));
  const std::size_t u_queries = std::min<std::size_t>(
      lq, std::max<std::size_t>(
              1, static_cast<std::size_t>(
                     std::ceil(factor * std::log(static_cast<double>(lq))))));

  Rng rng(0x70b55eedULL ^ (lq * 0x9e3779b97f4a7c15ULL) ^ (lk << 17));
  std::vector<double> sparsity(lq);
  for (std::size_t i = 0; i < lq; ++i) {
    const auto keys = rng.sample_without_replacement(lk, u_keys);
    double mx = -std::numeric_limits<double>::infinity(), mean = 0.0;
    for (std::size_t j : keys) {
      double s = 0.0;
      for (std::size_t c = 0; c < dk; ++c) s += q(i, c) * k(j, c);
      s *= scale;
      mx = std::max(mx, s);
      mean += s;
    }
    mean /= static_cast<double>(keys.size());
    sparsity[i] = mx - mean;
  }

  std::vector<std::size_t> order(lq);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (sparsity[a] != sparsity[b]) return sparsity[a] > sparsity[b];
    return a < b;
  });
  order.resize(u_queries);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace attn_detail

/// Sparse attention: only the queries measured most informative attend over
/// the keys; the remaining rows fall back to the mean of V. Saturated
/// sampling (u >= Lq) reduces to plain full attention, exactly.
inline Var probsparse_attention(const Var& q, const Var& k, const Var& v,
                                double factor = 5.0) {
  if (factor < 1.0) throw ConfigError("probsparse factor must be >= 1");
  const std::size_t lq = q.value().rows();
  const auto selected = attn_detail::probsparse_select(q.value(), k.value(), factor);
  if (selected.size() == lq) {
    return full_attention(q, k, v);
  }
  Var attended = full_attention(select_rows(q, selected), k, v);
  Var fallback = mean_rows(v);
  return scatter_rows_fill(attended, fallback, selected, lq);
}

// ---------------------------------------------------------------------------
// Multi-head wrapper
// ---------------------------------------------------------------------------

struct MultiHeadParams {
  Parameter* wq = nullptr;
  Parameter* wk = nullptr;
  Parameter* wv = nullptr;
  Parameter* wo = nullptr;
};

namespace detail {
inline Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out,
                     Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t i = 0; i < t.size(); ++i) t(i) = rng.uniform(-bound, bound);
  return t;
}
}  // namespace detail

inline MultiHeadParams make_multi_head(ParamSet& params,
                                       const std::string& prefix,
                                       std::size_t model_width,
                                       const AttentionConfig& cfg, Rng& rng) {
  cfg.validate(model_width);
  const std::size_t dk = cfg.kdim(model_width) * cfg.heads;
  const std::size_t dv = cfg.vdim(model_width) * cfg.heads;
  MultiHeadParams p;
  p.wq = &params.add(prefix + ".wq",
                     detail::glorot({model_width, dk}, model_width, dk, rng));
  p.wk = &params.add(prefix + ".wk",
                     detail::glorot({model_width, dk}, model_width, dk, rng));
  p.wv = &params.add(prefix + ".wv",
                     detail::glorot({model_width, dv}, model_width, dv, rng));
  p.wo = &params.add(prefix + ".wo",
                     detail::glorot({dv, model_width}, dv, model_width, rng));
  return p;
}

/// h independent projected heads, each mixed by the configured mechanism,
/// concatenated and projected back to the model width. Self-attention when
/// x_q and x_kv alias, cross-attention otherwise (queries from x_q, keys and
/// values from x_kv).
inline Var multi_head(const Var& x_q, const Var& x_kv,
                      const AttentionConfig& cfg, const MultiHeadParams& p,
                      const Tensor* mask = nullptr) {
  const std::size_t d = x_q.value().cols();
  cfg.validate(d);
  if (x_kv.value().cols() != d) {
    throw ShapeError("multi_head: query and key/value streams must share width");
  }
  const std::size_t dk = cfg.kdim(d), dv = cfg.vdim(d);
  const std::size_t lq = x_q.value().rows(), lk = x_kv.value().rows();

  Var q = matmul(x_q, p.wq->var());
  Var k = matmul(x_kv, p.wk->var());
  Var v = matmul(x_kv, p.wv->var());

  std::vector<Var> heads;
  heads.reserve(cfg.heads);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    Var qh = slice_cols(q, h * dk, (h + 1) * dk);
    Var kh = slice_cols(k, h * dk, (h + 1) * dk);
    Var vh = slice_cols(v, h * dv, (h + 1) * dv);
    switch (cfg.mechanism) {
      case Mechanism::kFull:
      case Mechanism::kCross:
        if (cfg.window != 0 && mask == nullptr && lq == lk) {
          heads.push_back(sliding_attention(qh, kh, vh, cfg.window));
        } else {
          heads.push_back(full_attention(qh, kh, vh, mask));
        }
        break;
      case Mechanism::kProbSparse:
        heads.push_back(probsparse_attention(qh, kh, vh, cfg.probsparse_factor));
        break;
      case Mechanism::kAutoCorr: {
        if (lq != lk) {
          throw ConfigError("auto-correlation attention needs equal lengths");
        }
        const std::size_t top_k = std::max<std::size_t>(
            1, static_cast<std::size_t>(cfg.autocorr_kappa *
                                        std::log2(static_cast<double>(lq))));
        heads.push_back(time_delay_aggregate(qh, kh, vh, top_k));
        break;
      }
    }
  }
  Var cat = cfg.heads == 1 ? heads[0] : concat_cols(heads);
  return matmul(cat, p.wo->var());
}

// ---------------------------------------------------------------------------
// Block-recurrent gate
// ---------------------------------------------------------------------------

/// Gate parameters of one recurrent state update: S' = S.g + z.(1-g) with
/// g = sigmoid(b_g) per feature and z = h W_z + b_z.
struct RecurrentGateParams {
  Parameter* wz = nullptr;
  Parameter* bz = nullptr;
  Parameter* bg = nullptr;
};

inline RecurrentGateParams make_recurrent_gate(ParamSet& params,
                                               const std::string& prefix,
                                               std::size_t width, Rng& rng) {
  RecurrentGateParams g;
  g.wz = &params.add(prefix + ".wz",
                     detail::glorot({width, width}, width, width, rng));
  g.bz = &params.add(prefix + ".bz", Tensor({width}));
  g.bg = &params.add(prefix + ".bg", Tensor({width}));
  return g;
}

/// Convex-combination state update replacing the residual connection. The
/// gate is input-independent: a learned per-feature bias through a sigmoid.
inline Var recurrent_state_update(const Var& state, const Var& h,
                                  const RecurrentGateParams& gp) {
  if (state.value().shape() != h.value().shape()) {
    throw ShapeError("recurrent_state_update: state " + shape_str(state.shape()) +
                     " vs update " + shape_str(h.shape()));
  }
  Var z = affine(h, gp.wz->var(), gp.bz->var());
  Var gate = sigmoid(gp.bg->var());
  Var ones = Var::constant(Tensor({gate.size()}, 1.0));
  return add(mul_rowvec(state, gate), mul_rowvec(z, sub(ones, gate)));
}

}  // namespace gaitformer
