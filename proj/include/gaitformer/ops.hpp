// Copyright (c) 2026 the gaitformer authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "gaitformer/autograd.hpp"
#include "gaitformer/rng.hpp"

namespace gaitformer {

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add shape mismatch: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out(i) = a.value()(i) + b.value()(i);
  return ag::make_op(std::move(out), {a, b}, [a, b](ag::Node& n) {
    ag::accumulate(*a.node(), n.grad);
    ag::accumulate(*b.node(), n.grad);
  });
}

inline Var sub(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("sub shape mismatch: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out(i) = a.value()(i) - b.value()(i);
  return ag::make_op(std::move(out), {a, b}, [a, b](ag::Node& n) {
    ag::accumulate(*a.node(), n.grad);
    if (b.node()->requires_grad) {
      Tensor gb(n.grad.shape());
      for (std::size_t i = 0; i < gb.size(); ++i) gb(i) = -n.grad(i);
      ag::accumulate(*b.node(), gb);
    }
  });
}

inline Var mul(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul shape mismatch: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out(i) = a.value()(i) * b.value()(i);
  return ag::make_op(std::move(out), {a, b}, [a, b](ag::Node& n) {
    if (a.node()->requires_grad) {
      Tensor ga(n.grad.shape());
      for (std::size_t i = 0; i < ga.size(); ++i) ga(i) = n.grad(i) * b.value()(i);
      ag::accumulate(*a.node(), ga);
    }
    if (b.node()->requires_grad) {
      Tensor gb(n.grad.shape());
      for (std::size_t i = 0; i < gb.size(); ++i) gb(i) = n.grad(i) * a.value()(i);
      ag::accumulate(*b.node(), gb);
    }
  });
}

inline Var mul_scalar(const Var& a, double s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out(i) = a.value()(i) * s;
  return ag::make_op(std::move(out), {a}, [a, s](ag::Node& n) {
    Tensor g(n.grad.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g(i) = n.grad(i) * s;
    ag::accumulate(*a.node(), g);
  });
}

inline Var neg(const Var& a) { return mul_scalar(a, -1.0); }

/// X [n x d] + b [d], broadcast over rows.
inline Var add_rowvec(const Var& x, const Var& b) {
  if (x.value().rank() != 2 || b.value().rank() != 1 ||
      x.value().cols() != b.size()) {
    throw ShapeError("add_rowvec shape mismatch: " + shape_str(x.shape()) +
                     " vs " + shape_str(b.shape()));
  }
  const std::size_t nr = x.value().rows(), nc = x.value().cols();
  Tensor out({nr, nc});
  for (std::size_t i = 0; i < nr; ++i)
    for (std::size_t j = 0; j < nc; ++j) out(i, j) = x.value()(i, j) + b.value()(j);
  return ag::make_op(std::move(out), {x, b}, [x, b, nr, nc](ag::Node& n) {
    ag::accumulate(*x.node(), n.grad);
    if (b.node()->requires_grad) {
      Tensor gb({nc});
      for (std::size_t i = 0; i < nr; ++i)
        for (std::size_t j = 0; j < nc; ++j) gb(j) += n.grad(i, j);
      ag::accumulate(*b.node(), gb);
    }
  });
}

/// X [n x d] + c [n], broadcast over columns (per-channel conv bias).
inline Var add_colvec(const Var& x, const Var& c) {
  if (x.value().rank() != 2 || c.value().rank() != 1 ||
      x.value().rows() != c.size()) {
    throw ShapeError("add_colvec shape mismatch: " + shape_str(x.shape()) +
                     " vs " + shape_str(c.shape()));
  }
  const std::size_t nr = x.value().rows(), nc = x.value().cols();
  Tensor out({nr, nc});
  for (std::size_t i = 0; i < nr; ++i)
    for (std::size_t j = 0; j < nc; ++j) out(i, j) = x.value()(i, j) + c.value()(i);
  return ag::make_op(std::move(out), {x, c}, [x, c, nr, nc](ag::Node& n) {
    ag::accumulate(*x.node(), n.grad);
    if (c.node()->requires_grad) {
      Tensor gc({nr});
      for (std::size_t i = 0; i < nr; ++i)
        for (std::size_t j = 0; j < nc; ++j) gc(i) += n.grad(i, j);
      ag::accumulate(*c.node(), gc);
    }
  });
}

/// X [n x d] * g [d] elementwise, broadcast over rows.
inline Var mul_rowvec(const Var& x, const Var& v) {
  if (x.value().rank() != 2 || v.value().rank() != 1 ||
      x.value().cols() != v.size()) {
    throw ShapeError("mul_rowvec shape mismatch: " + shape_str(x.shape()) +
                     " vs " + shape_str(v.shape()));
  }
  const std::size_t nr = x.value().rows(), nc = x.value().cols();
  Tensor out({nr, nc});
  for (std::size_t i = 0; i < nr; ++i)
    for (std::size_t j = 0; j < nc; ++j) out(i, j) = x.value()(i, j) * v.value()(j);
  return ag::make_op(std::move(out), {x, v}, [x, v, nr, nc](ag::Node& n) {
    if (x.node()->requires_grad) {
      Tensor gx({nr, nc});
      for (std::size_t i = 0; i < nr; ++i)
        for (std::size_t j = 0; j < nc; ++j) gx(i, j) = n.grad(i, j) * v.value()(j);
      ag::accumulate(*x.node(), gx);
    }
    if (v.node()->requires_grad) {
      Tensor gv({nc});
      for (std::size_t i = 0; i < nr; ++i)
        for (std::size_t j = 0; j < nc; ++j) gv(j) += n.grad(i, j) * x.value()(i, j);
      ag::accumulate(*v.node(), gv);
    }
  });
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Var matmul(const Var& a, const Var& b) {
  Tensor out = matmul(a.value(), b.value());
  return ag::make_op(std::move(out), {a, b}, [a, b](ag::Node& n) {
    if (a.node()->requires_grad) {
      ag::accumulate(*a.node(), matmul(n.grad, b.value().transposed()));
    }
    if (b.node()->requires_grad) {
      ag::accumulate(*b.node(), matmul(a.value().transposed(), n.grad));
    }
  });
}

inline Var transpose(const Var& a) {
  return ag::make_op(a.value().transposed(), {a}, [a](ag::Node& n) {
    ag::accumulate(*a.node(), n.grad.transposed());
  });
}

/// Row-wise affine map: out_i = X_i * W + b.
inline Var affine(const Var& x, const Var& w, const Var& b) {
  if (x.value().rank() != 2 || w.value().rank() != 2 ||
      x.value().cols() != w.value().rows()) {
    throw ShapeError("affine dimension mismatch: X " + shape_str(x.shape()) +
                     " vs W " + shape_str(w.shape()));
  }
  if (b.value().rank() != 1 || b.size() != w.value().cols()) {
    throw ShapeError("affine dimension mismatch: W " + shape_str(w.shape()) +
                     " vs b " + shape_str(b.shape()));
  }
  return add_rowvec(matmul(x, w), b);
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

inline Var relu(const Var& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out(i) = a.value()(i) > 0.0 ? a.value()(i) : 0.0;
  return ag::make_op(std::move(out), {a}, [a](ag::Node& n) {
    Tensor g(n.grad.shape());
    for (std::size_t i = 0; i < g.size(); ++i)
      g(i) = a.value()(i) > 0.0 ? n.grad(i) : 0.0;
    ag::accumulate(*a.node(), g);
  });
}

namespace detail {
inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace detail

inline Var sigmoid(const Var& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out(i) = detail::stable_sigmoid(a.value()(i));
  Tensor saved = out;
  return ag::make_op(std::move(out), {a}, [a, saved](ag::Node& n) {
    Tensor g(n.grad.shape());
    for (std::size_t i = 0; i < g.size(); ++i)
      g(i) = n.grad(i) * saved(i) * (1.0 - saved(i));
    ag::accumulate(*a.node(), g);
  });
}

inline Var tanh_op(const Var& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out(i) = std::tanh(a.value()(i));
  Tensor saved = out;
  return ag::make_op(std::move(out), {a}, [a, saved](ag::Node& n) {
    Tensor g(n.grad.shape());
    for (std::size_t i = 0; i < g.size(); ++i)
      g(i) = n.grad(i) * (1.0 - saved(i) * saved(i));
    ag::accumulate(*a.node(), g);
  });
}

// ---------------------------------------------------------------------------
// Softmax and layer normalization
// ---------------------------------------------------------------------------

namespace detail {

/// Iterates the slices of a rank-1/rank-2 tensor along `axis` as
/// (base offset, stride, count).
struct SliceIter {
  std::size_t num_slices, count, stride, outer_stride;
};

inline SliceIter slice_layout(const Tensor& t, std::size_t axis) {
  if (t.rank() == 1) {
    if (axis != 0) throw ConfigError("softmax axis out of range for rank-1");
    return {1, t.size(), 1, 0};
  }
  if (t.rank() == 2) {
    if (axis == 1) return {t.rows(), t.cols(), 1, t.cols()};
    if (axis == 0) return {t.cols(), t.rows(), t.cols(), 1};
    throw ConfigError("softmax axis out of range for rank-2");
  }
  throw ConfigError("softmax supports rank-1 and rank-2 tensors");
}

}  // namespace detail

/// Numerically stable softmax along `axis` (max subtraction before exp).
inline Var softmax(const Var& a, std::size_t axis) {
  const auto it = detail::slice_layout(a.value(), axis);
  Tensor out(a.shape());
  for (std::size_t s = 0; s < it.num_slices; ++s) {
    const std::size_t base = s * it.outer_stride;
    double mx = a.value()(base);
    for (std::size_t i = 1; i < it.count; ++i)
      mx = std::max(mx, a.value()(base + i * it.stride));
    double sum = 0.0;
    for (std::size_t i = 0; i < it.count; ++i) {
      const double e = std::exp(a.value()(base + i * it.stride) - mx);
      out(base + i * it.stride) = e;
      sum += e;
    }
    for (std::size_t i = 0; i < it.count; ++i) out(base + i * it.stride) /= sum;
  }
  Tensor saved = out;
  return ag::make_op(std::move(out), {a}, [a, saved, it](ag::Node& n) {
    Tensor g(n.grad.shape());
    for (std::size_t s = 0; s < it.num_slices; ++s) {
      const std::size_t base = s * it.outer_stride;
      double dot = 0.0;
      for (std::size_t i = 0; i < it.count; ++i) {
        const std::size_t k = base + i * it.stride;
        dot += n.grad(k) * saved(k);
      }
      for (std::size_t i = 0; i < it.count; ++i) {
        const std::size_t k = base + i * it.stride;
        g(k) = saved(k) * (n.grad(k) - dot);
      }
    }
    ag::accumulate(*a.node(), g);
  });
}

/// Per-row normalization to zero mean / unit variance over the feature axis,
/// then scale by gamma and shift by beta.
inline Var layer_norm(const Var& x, const Var& gamma, const Var& beta,
                      double eps = 1e-5) {
  if (x.value().rank() != 2) throw ShapeError("layer_norm expects rank-2 input");
  const std::size_t nr = x.value().rows(), nc = x.value().cols();
  if (gamma.value().rank() != 1 || gamma.size() != nc || beta.size() != nc) {
    throw ShapeError("layer_norm parameter shape mismatch for input " +
                     shape_str(x.shape()));
  }
  Tensor xhat({nr, nc});
  Tensor inv_std({nr});
  Tensor out({nr, nc});
  for (std::size_t i = 0; i < nr; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < nc; ++j) mean += x.value()(i, j);
    mean /= static_cast<double>(nc);
    double var = 0.0;
    for (std::size_t j = 0; j < nc; ++j) {
      const double d = x.value()(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(nc);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std(i) = inv;
    for (std::size_t j = 0; j < nc; ++j) {
      xhat(i, j) = (x.value()(i, j) - mean) * inv;
      out(i, j) = gamma.value()(j) * xhat(i, j) + beta.value()(j);
    }
  }
  return ag::make_op(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat, inv_std, nr, nc](ag::Node& n) {
        if (gamma.node()->requires_grad) {
          Tensor gg({nc});
          for (std::size_t i = 0; i < nr; ++i)
            for (std::size_t j = 0; j < nc; ++j)
              gg(j) += n.grad(i, j) * xhat(i, j);
          ag::accumulate(*gamma.node(), gg);
        }
        if (beta.node()->requires_grad) {
          Tensor gb({nc});
          for (std::size_t i = 0; i < nr; ++i)
            for (std::size_t j = 0; j < nc; ++j) gb(j) += n.grad(i, j);
          ag::accumulate(*beta.node(), gb);
        }
        if (x.node()->requires_grad) {
          Tensor gx({nr, nc});
          for (std::size_t i = 0; i < nr; ++i) {
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < nc; ++j) {
              const double dxhat = n.grad(i, j) * gamma.value()(j);
              mean_dxhat += dxhat;
              mean_dxhat_xhat += dxhat * xhat(i, j);
            }
            mean_dxhat /= static_cast<double>(nc);
            mean_dxhat_xhat /= static_cast<double>(nc);
            for (std::size_t j = 0; j < nc; ++j) {
              const double dxhat = n.grad(i, j) * gamma.value()(j);
              gx(i, j) = inv_std(i) *
                         (dxhat - mean_dxhat - xhat(i, j) * mean_dxhat_xhat);
            }
          }
          ag::accumulate(*x.node(), gx);
        }
      });
}

// ---------------------------------------------------------------------------
// Convolution, pooling, dropout
// ---------------------------------------------------------------------------

enum class Padding { kSame, kValid };

/// 1-D cross-correlation over the trailing axis (no kernel flip; kernels are
/// learned so the flip convention is immaterial). X is [c_in x L], kernels
/// are [c_out x c_in x k]. Same mode zero-pads (k-1)/2 on each side.
inline Var conv1d(const Var& x, const Var& w, Padding padding) {
  if (x.value().rank() != 2 || w.value().rank() != 3 ||
      x.value().rows() != w.value().extent(1)) {
    throw ShapeError("conv1d shape mismatch: X " + shape_str(x.shape()) +
                     " vs kernels " + shape_str(w.shape()));
  }
  const std::size_t cin = x.value().rows(), L = x.value().cols();
  const std::size_t cout = w.value().extent(0), k = w.value().extent(2);
  std::size_t pad = 0, lout = 0;
  if (padding == Padding::kSame) {
    if (k % 2 == 0) {
      throw ConfigError("conv1d same-padding requires an odd kernel, got " +
                        std::to_string(k));
    }
    pad = (k - 1) / 2;
    lout = L;
  } else {
    if (k > L) {
      throw ConfigError("conv1d valid mode requires kernel size " +
                        std::to_string(k) + " <= input length " +
                        std::to_string(L));
    }
    lout = L - k + 1;
  }
  const std::size_t lpad = L + 2 * pad;
  Tensor xpad({cin, lpad});
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t t = 0; t < L; ++t) xpad(c, t + pad) = x.value()(c, t);

  Tensor out({cout, lout});
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* xrow = xpad.data() + ci * lpad;
      double* orow = out.data() + co * lout;
      for (std::size_t u = 0; u < k; ++u) {
        const double wv = w.value()(co, ci, u);
        if (wv == 0.0) continue;
        for (std::size_t t = 0; t < lout; ++t) orow[t] += wv * xrow[t + u];
      }
    }
  }
  return ag::make_op(
      std::move(out), {x, w},
      [x, w, xpad, cin, cout, k, L, lout, pad, lpad](ag::Node& n) {
        if (w.node()->requires_grad) {
          Tensor gw(w.value().shape());
          for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t ci = 0; ci < cin; ++ci)
              for (std::size_t u = 0; u < k; ++u) {
                double s = 0.0;
                const double* xrow = xpad.data() + ci * lpad;
                const double* grow = n.grad.data() + co * lout;
                for (std::size_t t = 0; t < lout; ++t) s += grow[t] * xrow[t + u];
                gw(co, ci, u) = s;
              }
          ag::accumulate(*w.node(), gw);
        }
        if (x.node()->requires_grad) {
          Tensor gpad({cin, lpad});
          for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t ci = 0; ci < cin; ++ci) {
              double* grow = gpad.data() + ci * lpad;
              const double* gout = n.grad.data() + co * lout;
              for (std::size_t u = 0; u < k; ++u) {
                const double wv = w.value()(co, ci, u);
                if (wv == 0.0) continue;
                for (std::size_t t = 0; t < lout; ++t) grow[t + u] += wv * gout[t];
              }
            }
          Tensor gx({cin, L});
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t t = 0; t < L; ++t) gx(c, t) = gpad(c, t + pad);
          ag::accumulate(*x.node(), gx);
        }
      });
}

/// Pairwise max along the trailing axis, halving it. An odd trailing length
/// drops its final element first.
inline Var maxpool2(const Var& x) {
  const Tensor& v = x.value();
  const bool mat = v.rank() == 2;
  if (!mat && v.rank() != 1) throw ShapeError("maxpool2 expects rank-1 or rank-2");
  const std::size_t rows = mat ? v.rows() : 1;
  const std::size_t len = mat ? v.cols() : v.size();
  if (len < 2) throw ConfigError("maxpool2 needs trailing length >= 2");
  const std::size_t half = len / 2;
  Tensor out(mat ? Shape{rows, half} : Shape{half});
  std::vector<std::size_t> arg(rows * half);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t t = 0; t < half; ++t) {
      const std::size_t i0 = r * len + 2 * t;
      const double a = v(i0), b = v(i0 + 1);
      // ties keep the earlier element
      if (a >= b) {
        out(r * half + t) = a;
        arg[r * half + t] = i0;
      } else {
        out(r * half + t) = b;
        arg[r * half + t] = i0 + 1;
      }
    }
  }
  return ag::make_op(std::move(out), {x}, [x, arg](ag::Node& n) {
    Tensor g(x.value().shape());
    for (std::size_t i = 0; i < arg.size(); ++i) g(arg[i]) += n.grad(i);
    ag::accumulate(*x.node(), g);
  });
}

/// Inverted dropout. Training: zero entries with probability p and scale the
/// survivors by 1/(1-p). Inference: identity (no tape node emitted).
inline Var dropout(const Var& x, double p, bool training, Rng* rng) {
  if (p < 0.0 || p >= 1.0) {
    throw ConfigError("dropout probability must be in [0,1), got " +
                      std::to_string(p));
  }
  if (!training || p == 0.0) return x;
  if (rng == nullptr) throw ContractError("training-mode dropout needs an Rng");
  Tensor mask(x.shape());
  const double scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask(i) = rng->uniform() < p ? 0.0 : scale;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out(i) = x.value()(i) * mask(i);
  return ag::make_op(std::move(out), {x}, [x, mask](ag::Node& n) {
    Tensor g(n.grad.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g(i) = n.grad(i) * mask(i);
    ag::accumulate(*x.node(), g);
  });
}

enum class Pool { kNone, kMax2 };

/// ReLU, optional pairwise max-pool, then dropout, in that order.
inline Var activation_pool_dropout(const Var& x, bool use_relu, Pool pool,
                                   double dropout_p, bool training,
                                   Rng* rng = nullptr) {
  Var h = x;
  if (use_relu) h = relu(h);
  if (pool == Pool::kMax2) h = maxpool2(h);
  return dropout(h, dropout_p, training, rng);
}

// ---------------------------------------------------------------------------
// Shape plumbing
// ---------------------------------------------------------------------------

inline Var reshape(const Var& a, Shape s) {
  Tensor out = a.value().reshaped(std::move(s));
  return ag::make_op(std::move(out), {a}, [a](ag::Node& n) {
    ag::accumulate(*a.node(), n.grad.reshaped(a.value().shape()));
  });
}

inline Var flatten(const Var& a) { return reshape(a, {a.size()}); }

inline Var slice_rows(const Var& x, std::size_t r0, std::size_t r1) {
  const Tensor& v = x.value();
  if (v.rank() != 2 || r1 > v.rows() || r0 >= r1) {
    throw ShapeError("slice_rows [" + std::to_string(r0) + "," +
                     std::to_string(r1) + ") out of range for " +
                     shape_str(v.shape()));
  }
  const std::size_t nc = v.cols();
  Tensor out({r1 - r0, nc});
  for (std::size_t i = r0; i < r1; ++i)
    for (std::size_t j = 0; j < nc; ++j) out(i - r0, j) = v(i, j);
  return ag::make_op(std::move(out), {x}, [x, r0, r1, nc](ag::Node& n) {
    Tensor g(x.value().shape());
    for (std::size_t i = r0; i < r1; ++i)
      for (std::size_t j = 0; j < nc; ++j) g(i, j) = n.grad(i - r0, j);
    ag::accumulate(*x.node(), g);
  });
}

inline Var slice_cols(const Var& x, std::size_t c0, std::size_t c1) {
  const Tensor& v = x.value();
  if (v.rank() != 2 || c1 > v.cols() || c0 >= c1) {
    throw ShapeError("slice_cols [" + std::to_string(c0) + "," +
                     std::to_string(c1) + ") out of range for " +
                     shape_str(v.shape()));
  }
  const std::size_t nr = v.rows();
  Tensor out({nr, c1 - c0});
  for (std::size_t i = 0; i < nr; ++i)
    for (std::size_t j = c0; j < c1; ++j) out(i, j - c0) = v(i, j);
  return ag::make_op(std::move(out), {x}, [x, c0, c1, nr](ag::Node& n) {
    Tensor g(x.value().shape());
    for (std::size_t i = 0; i < nr; ++i)
      for (std::size_t j = c0; j < c1; ++j) g(i, j) = n.grad(i, j - c0);
    ag::accumulate(*x.node(), g);
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_rows needs at least one part");
  const std::size_t nc = parts[0].value().cols();
  std::size_t nr = 0;
  for (const Var& p : parts) {
    if (p.value().rank() != 2 || p.value().cols() != nc) {
      throw ShapeError("concat_rows column mismatch");
    }
    nr += p.value().rows();
  }
  Tensor out({nr, nc});
  std::size_t row = 0;
  for (const Var& p : parts) {
    for (std::size_t i = 0; i < p.value().rows(); ++i, ++row)
      for (std::size_t j = 0; j < nc; ++j) out(row, j) = p.value()(i, j);
  }
  return ag::make_op(std::move(out), parts, [parts, nc](ag::Node& n) {
    std::size_t row = 0;
    for (const Var& p : parts) {
      const std::size_t pr = p.value().rows();
      if (p.node()->requires_grad) {
        Tensor g({pr, nc});
        for (std::size_t i = 0; i < pr; ++i)
          for (std::size_t j = 0; j < nc; ++j) g(i, j) = n.grad(row + i, j);
        ag::accumulate(*p.node(), g);
      }
      row += pr;
    }
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols needs at least one part");
  const std::size_t nr = parts[0].value().rows();
  std::size_t nc = 0;
  for (const Var& p : parts) {
    if (p.value().rank() != 2 || p.value().rows() != nr) {
      throw ShapeError("concat_cols row mismatch");
    }
    nc += p.value().cols();
  }
  Tensor out({nr, nc});
  std::size_t col = 0;
  for (const Var& p : parts) {
    for (std::size_t i = 0; i < nr; ++i)
      for (std::size_t j = 0; j < p.value().cols(); ++j)
        out(i, col + j) = p.value()(i, j);
    col += p.value().cols();
  }
  return ag::make_op(std::move(out), parts, [parts, nr](ag::Node& n) {
    std::size_t col = 0;
    for (const Var& p : parts) {
      const std::size_t pc = p.value().cols();
      if (p.node()->requires_grad) {
        Tensor g({nr, pc});
        for (std::size_t i = 0; i < nr; ++i)
          for (std::size_t j = 0; j < pc; ++j) g(i, j) = n.grad(i, col + j);
        ag::accumulate(*p.node(), g);
      }
      col += pc;
    }
  });
}

/// Gathers rows of X at `idx` (duplicates allowed).
inline Var select_rows(const Var& x, std::vector<std::size_t> idx) {
  const Tensor& v = x.value();
  if (v.rank() != 2) throw ShapeError("select_rows expects rank-2");
  const std::size_t nc = v.cols();
  Tensor out({idx.size(), nc});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= v.rows()) throw ShapeError("select_rows index out of range");
    for (std::size_t j = 0; j < nc; ++j) out(i, j) = v(idx[i], j);
  }
  return ag::make_op(std::move(out), {x}, [x, idx, nc](ag::Node& n) {
    Tensor g(x.value().shape());
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < nc; ++j) g(idx[i], j) += n.grad(i, j);
    ag::accumulate(*x.node(), g);
  });
}

/// Builds an [n x d] matrix whose rows at `idx` come from `rows` (in order)
/// and whose remaining rows are all `fill`. Indices must be distinct.
inline Var scatter_rows_fill(const Var& rows, const Var& fill,
                             std::vector<std::size_t> idx, std::size_t n) {
  const std::size_t d = rows.value().cols();
  if (rows.value().rank() != 2 || rows.value().rows() != idx.size() ||
      fill.value().rank() != 1 || fill.size() != d) {
    throw ShapeError("scatter_rows_fill shape mismatch");
  }
  std::vector<bool> taken(n, false);
  Tensor out({n, d});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= n || taken[idx[i]]) {
      throw ContractError("scatter_rows_fill needs distinct in-range indices");
    }
    taken[idx[i]] = true;
    for (std::size_t j = 0; j < d; ++j) out(idx[i], j) = rows.value()(i, j);
  }
  for (std::size_t r = 0; r < n; ++r) {
    if (taken[r]) continue;
    for (std::size_t j = 0; j < d; ++j) out(r, j) = fill.value()(j);
  }
  return ag::make_op(std::move(out), {rows, fill},
                     [rows, fill, idx, taken, n, d](ag::Node& node) {
                       if (rows.node()->requires_grad) {
                         Tensor g({idx.size(), d});
                         for (std::size_t i = 0; i < idx.size(); ++i)
                           for (std::size_t j = 0; j < d; ++j)
                             g(i, j) = node.grad(idx[i], j);
                         ag::accumulate(*rows.node(), g);
                       }
                       if (fill.node()->requires_grad) {
                         Tensor g({d});
                         for (std::size_t r = 0; r < n; ++r) {
                           if (taken[r]) continue;
                           for (std::size_t j = 0; j < d; ++j)
                             g(j) += node.grad(r, j);
                         }
                         ag::accumulate(*fill.node(), g);
                       }
                     });
}

/// Column means: [n x d] -> [d].
inline Var mean_rows(const Var& x) {
  const Tensor& v = x.value();
  if (v.rank() != 2) throw ShapeError("mean_rows expects rank-2");
  const std::size_t nr = v.rows(), nc = v.cols();
  Tensor out({nc});
  for (std::size_t i = 0; i < nr; ++i)
    for (std::size_t j = 0; j < nc; ++j) out(j) += v(i, j);
  for (std::size_t j = 0; j < nc; ++j) out(j) /= static_cast<double>(nr);
  return ag::make_op(std::move(out), {x}, [x, nr, nc](ag::Node& n) {
    Tensor g({nr, nc});
    for (std::size_t i = 0; i < nr; ++i)
      for (std::size_t j = 0; j < nc; ++j)
        g(i, j) = n.grad(j) / static_cast<double>(nr);
    ag::accumulate(*x.node(), g);
  });
}

inline Var sum_all(const Var& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x.value()(i);
  return ag::make_op(Tensor({1}, {s}), {x}, [x](ag::Node& n) {
    Tensor g(x.value().shape(), n.grad(0));
    ag::accumulate(*x.node(), g);
  });
}

/// Gathers elements of a rank-1 tensor.
inline Var select_elems(const Var& x, std::vector<std::size_t> idx) {
  if (x.value().rank() != 1) throw ShapeError("select_elems expects rank-1");
  Tensor out({idx.size()});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= x.size()) throw ShapeError("select_elems index out of range");
    out(i) = x.value()(idx[i]);
  }
  return ag::make_op(std::move(out), {x}, [x, idx](ag::Node& n) {
    Tensor g(x.value().shape());
    for (std::size_t i = 0; i < idx.size(); ++i) g(idx[i]) += n.grad(i);
    ag::accumulate(*x.node(), g);
  });
}

/// M * w(j) for a rank-1 weight vector w.
inline Var scale_by_elem(const Var& m, const Var& w, std::size_t j) {
  if (w.value().rank() != 1 || j >= w.size()) {
    throw ShapeError("scale_by_elem weight index out of range");
  }
  const double wj = w.value()(j);
  Tensor out(m.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out(i) = m.value()(i) * wj;
  return ag::make_op(std::move(out), {m, w}, [m, w, j, wj](ag::Node& n) {
    if (m.node()->requires_grad) {
      Tensor g(n.grad.shape());
      for (std::size_t i = 0; i < g.size(); ++i) g(i) = n.grad(i) * wj;
      ag::accumulate(*m.node(), g);
    }
    if (w.node()->requires_grad) {
      Tensor g(w.value().shape());
      double s = 0.0;
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        s += n.grad(i) * m.value()(i);
      g(j) = s;
      ag::accumulate(*w.node(), g);
    }
  });
}

/// Circular shift along the token axis: output row t = input row
/// (t + tau) mod L. This is the fixed alignment convention for lag
/// aggregation; tau outside [0, L) is normalized by mod.
inline Var roll_rows(const Var& x, long tau) {
  const Tensor& v = x.value();
  if (v.rank() != 2) throw ShapeError("roll_rows expects rank-2");
  const long n = static_cast<long>(v.rows());
  const std::size_t nc = v.cols();
  const long t0 = ((tau % n) + n) % n;
  Tensor out(v.shape());
  for (long t = 0; t < n; ++t) {
    const long src = (t + t0) % n;
    for (std::size_t j = 0; j < nc; ++j)
      out(static_cast<std::size_t>(t), j) = v(static_cast<std::size_t>(src), j);
  }
  return ag::make_op(std::move(out), {x}, [x, t0, n, nc](ag::Node& node) {
    Tensor g(x.value().shape());
    for (long t = 0; t < n; ++t) {
      const long src = (t + t0) % n;
      for (std::size_t j = 0; j < nc; ++j)
        g(static_cast<std::size_t>(src), j) += node.grad(static_cast<std::size_t>(t), j);
    }
    ag::accumulate(*x.node(), g);
  });
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// Mean of -log softmax(logits)[label], computed in log space. Accepts a
/// rank-1 [K] logit vector with one label or a rank-2 [n x K] batch.
inline Var softmax_cross_entropy(const Var& logits,
                                 const std::vector<std::size_t>& labels) {
  const Tensor& v = logits.value();
  const std::size_t n = v.rank() == 1 ? 1 : v.rows();
  const std::size_t k = v.rank() == 1 ? v.size() : v.cols();
  if (v.rank() > 2 || labels.size() != n) {
    throw ContractError("cross_entropy expects [n x K] logits and n labels");
  }
  Tensor probs({n, k});
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= k) {
      throw ContractError("label " + std::to_string(labels[i]) +
                          " out of range for " + std::to_string(k) + " classes");
    }
    const double* row = v.data() + i * k;
    double mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < k; ++j) probs(i, j) = std::exp(row[j] - lse);
    loss += lse - row[labels[i]];
  }
  loss /= static_cast<double>(n);
  return ag::make_op(Tensor({1}, {loss}), {logits},
                     [logits, labels, probs, n, k](ag::Node& node) {
                       Tensor g(logits.value().shape());
                       const double scale = node.grad(0) / static_cast<double>(n);
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < k; ++j)
                           g(i * k + j) = scale * (probs(i, j) -
                                                   (j == labels[i] ? 1.0 : 0.0));
                       ag::accumulate(*logits.node(), g);
                     });
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

/// Standard LSTM over a [L x d_in] sequence, zero initial hidden and cell
/// state, returning the full [L x units] hidden sequence. Gate preactivation
/// layout along the 4u axis is (input, forget, candidate, output).
inline Var lstm_layer(const Var& x, const Var& wx, const Var& wh, const Var& b,
                      std::size_t units) {
  if (units < 1) throw ConfigError("lstm_layer needs units >= 1");
  const std::size_t len = x.value().rows();
  if (x.value().rank() != 2 || wx.value().rows() != x.value().cols() ||
      wx.value().cols() != 4 * units || wh.value().rows() != units ||
      wh.value().cols() != 4 * units || b.size() != 4 * units) {
    throw ShapeError("lstm_layer weight shapes inconsistent with input " +
                     shape_str(x.shape()) + " and units " +
                     std::to_string(units));
  }
  Var h = Var::constant(Tensor({1, units}));
  Var c = Var::constant(Tensor({1, units}));
  std::vector<Var> outputs;
  outputs.reserve(len);
  for (std::size_t t = 0; t < len; ++t) {
    Var xt = slice_rows(x, t, t + 1);
    Var pre = add_rowvec(add(matmul(xt, wx), matmul(h, wh)), b);
    Var gi = sigmoid(slice_cols(pre, 0, units));
    Var gf = sigmoid(slice_cols(pre, units, 2 * units));
    Var gc = tanh_op(slice_cols(pre, 2 * units, 3 * units));
    Var go = sigmoid(slice_cols(pre, 3 * units, 4 * units));
    c = add(mul(gf, c), mul(gi, gc));
    h = mul(go, tanh_op(c));
    outputs.push_back(h);
  }
  return concat_rows(outputs);
}

}  // namespace gaitformer
