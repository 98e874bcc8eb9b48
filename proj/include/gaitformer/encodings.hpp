// Copyright (c) 2026 the gaitformer authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gaitformer/ops.hpp"

namespace gaitformer {

// ---------------------------------------------------------------------------
// Fixed sinusoidal positional encoding
// ---------------------------------------------------------------------------

/// The classic sin/cos table: row pos, channel 2l holds
/// sin(pos / 10000^(2l/d)) and channel 2l+1 the matching cosine. d must be
/// even. Entries are bounded by [-1, 1].
inline Tensor positional_table(std::size_t length, std::size_t width) {
  if (width % 2 != 0) {
    throw ConfigError("sinusoidal encoding requires an even width, got " +
                      std::to_string(width));
  }
  Tensor table({length, width});
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t l = 0; 2 * l < width; ++l) {
      const double freq =
          std::pow(10000.0, -2.0 * static_cast<double>(l) / width);
      const double angle = static_cast<double>(pos) * freq;
      table(pos, 2 * l) = std::sin(angle);
      table(pos, 2 * l + 1) = std::cos(angle);
    }
  }
  return table;
}

/// Adds the fixed positional table to a [L x d] token sequence.
inline Var sinusoidal_encode(const Var& x) {
  if (x.value().rank() != 2) {
    throw ShapeError("sinusoidal_encode expects a [L x d] sequence");
  }
  Tensor table = positional_table(x.value().rows(), x.value().cols());
  return add(x, Var::constant(std::move(table)));
}

// ---------------------------------------------------------------------------
// Learnable Gaussian range encoding
// ---------------------------------------------------------------------------

namespace detail {
inline std::size_t& gaussian_clamp_counter() {
  static std::size_t count = 0;
  return count;
}
}  // namespace detail

/// Number of times a Gaussian range width had to be clamped away from zero.
inline std::size_t gaussian_range_clamp_count() {
  return detail::gaussian_clamp_counter();
}

/// The learnable (mu, sigma, V) triple of one Gaussian range encoding.
/// sigma is stored through a softplus reparameterization (sigma =
/// softplus(rho)), which keeps widths positive under unconstrained updates.
struct GaussianRangeParams {
  Parameter* mu = nullptr;      // [G] centers in position units
  Parameter* rho = nullptr;     // [G] pre-softplus widths
  Parameter* values = nullptr;  // [G x d] range value vectors
};

inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

inline double inverse_softplus(double y) {
  return y > 30.0 ? y : std::log(std::expm1(y));
}

/// Registers mu/rho/values for one encoding. Centers start evenly spaced
/// over [0, L) with a small uniform jitter so the ranges cover the sequence
/// from the first step; widths start at L/G; values are Glorot-uniform.
inline GaussianRangeParams make_gaussian_range(ParamSet& params,
                                               const std::string& prefix,
                                               std::size_t ranges,
                                               std::size_t length,
                                               std::size_t width, Rng& rng) {
  if (ranges < 1) throw ConfigError("gaussian range encoding needs G >= 1");
  Tensor mu({ranges});
  const double spacing = static_cast<double>(length) / ranges;
  for (std::size_t g = 0; g < ranges; ++g) {
    const double jitter = rng.uniform(-spacing / 4.0, spacing / 4.0);
    mu(g) = (static_cast<double>(g) + 0.5) * spacing + jitter;
  }
  Tensor rho({ranges}, inverse_softplus(spacing));
  Tensor values({ranges, width});
  const double bound = std::sqrt(6.0 / static_cast<double>(ranges + width));
  for (std::size_t i = 0; i < values.size(); ++i)
    values(i) = rng.uniform(-bound, bound);

  GaussianRangeParams p;
  p.mu = &params.add(prefix + ".mu", std::move(mu));
  p.rho = &params.add(prefix + ".rho", std::move(rho));
  p.values = &params.add(prefix + ".values", std::move(values));
  return p;
}

/// Per-position range distribution: p(l, g) is the density of range g at
/// position l, normalized so each row sums to one.
inline Tensor gaussian_range_distribution(std::size_t length, const Tensor& mu,
                                          const Tensor& sigma) {
  const std::size_t ranges = mu.size();
  Tensor p({length, ranges});
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  for (std::size_t l = 0; l < length; ++l) {
    double zeta = 0.0;
    for (std::size_t g = 0; g < ranges; ++g) {
      const double z = (static_cast<double>(l) - mu(g)) / sigma(g);
      const double density = inv_sqrt_2pi / sigma(g) * std::exp(-0.5 * z * z);
      p(l, g) = density;
      zeta += density;
    }
    for (std::size_t g = 0; g < ranges; ++g) p(l, g) /= zeta;
  }
  return p;
}

/// x_l + V^T p_l where p_l is the normalized vector of the G range densities
/// at position l. Gradients flow to x, mu, rho (through sigma) and V.
inline Var gaussian_range_encode(const Var& x, const GaussianRangeParams& gp) {
  const Var mu = gp.mu->var();
  const Var rho = gp.rho->var();
  const Var values = gp.values->var();
  if (x.value().rank() != 2 || values.value().rank() != 2 ||
      values.value().cols() != x.value().cols() ||
      mu.size() != values.value().rows() || rho.size() != mu.size()) {
    throw ShapeError("gaussian_range_encode shape mismatch: x " +
                     shape_str(x.shape()) + ", V " +
                     shape_str(values.shape()));
  }
  const std::size_t length = x.value().rows();
  const std::size_t width = x.value().cols();
  const std::size_t ranges = mu.size();
  constexpr double sigma_floor = 1e-12;
  constexpr double inv_sqrt_2pi = 0.3989422804014327;

  Tensor sigma({ranges});
  for (std::size_t g = 0; g < ranges; ++g) {
    double s = softplus(rho.value()(g));
    if (s < sigma_floor) {
      s = sigma_floor;
      ++detail::gaussian_clamp_counter();
    }
    sigma(g) = s;
  }

  // densities a(l,g), row sums zeta(l), normalized p(l,g)
  Tensor a({length, ranges});
  Tensor zeta({length});
  Tensor p({length, ranges});
  for (std::size_t l = 0; l < length; ++l) {
    double sum = 0.0;
    for (std::size_t g = 0; g < ranges; ++g) {
      const double z = (static_cast<double>(l) - mu.value()(g)) / sigma(g);
      const double d = inv_sqrt_2pi / sigma(g) * std::exp(-0.5 * z * z);
      a(l, g) = d;
      sum += d;
    }
    zeta(l) = sum;
    for (std::size_t g = 0; g < ranges; ++g) p(l, g) = a(l, g) / sum;
  }

  Tensor out(x.value().shape());
  for (std::size_t l = 0; l < length; ++l)
    for (std::size_t j = 0; j < width; ++j) {
      double s = x.value()(l, j);
      for (std::size_t g = 0; g < ranges; ++g)
        s += p(l, g) * values.value()(g, j);
      out(l, j) = s;
    }

  return ag::make_op(
      std::move(out), {x, mu, rho, values},
      [x, mu, rho, values, a, zeta, p, sigma, length, width,
       ranges](ag::Node& n) {
        ag::accumulate(*x.node(), n.grad);
        if (values.node()->requires_grad) {
          Tensor gv({ranges, width});
          for (std::size_t l = 0; l < length; ++l)
            for (std::size_t g = 0; g < ranges; ++g)
              for (std::size_t j = 0; j < width; ++j)
                gv(g, j) += p(l, g) * n.grad(l, j);
          ag::accumulate(*values.node(), gv);
        }
        if (!mu.node()->requires_grad && !rho.node()->requires_grad) return;

        // dp(l,g) then da(l,g) through the row normalization
        Tensor gmu({ranges});
        Tensor gsigma({ranges});
        for (std::size_t l = 0; l < length; ++l) {
          double dot = 0.0;
          std::vector<double> dp(ranges);
          for (std::size_t g = 0; g < ranges; ++g) {
            double s = 0.0;
            for (std::size_t j = 0; j < width; ++j)
              s += n.grad(l, j) * values.value()(g, j);
            dp[g] = s;
            dot += s * p(l, g);
          }
          for (std::size_t g = 0; g < ranges; ++g) {
            const double da = (dp[g] - dot) / zeta(l);
            const double diff = static_cast<double>(l) - mu.value()(g);
            const double s2 = sigma(g) * sigma(g);
            gmu(g) += da * a(l, g) * diff / s2;
            gsigma(g) += da * a(l, g) * (diff * diff / (s2 * sigma(g)) -
                                         1.0 / sigma(g));
          }
        }
        ag::accumulate(*mu.node(), gmu);
        if (rho.node()->requires_grad) {
          Tensor grho({ranges});
          for (std::size_t g = 0; g < ranges; ++g)
            grho(g) = gsigma(g) * detail::stable_sigmoid(rho.value()(g));
          ag::accumulate(*rho.node(), grho);
        }
      });
}


}  // namespace gaitformer
