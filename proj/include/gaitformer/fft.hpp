// Copyright (c) 2026 the gaitformer authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "gaitformer/tensor.hpp"

namespace gaitformer {
namespace fft_detail {

using cd = std::complex<double>;
constexpr double kPi = 3.14159265358979323846;

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Iterative radix-2 Cooley-Tukey. Length must be a power of two.
inline void fft_pow2(std::vector<cd>& a, bool invert) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * kPi / static_cast<double>(len) * (invert ? 1 : -1);
    const cd wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cd w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const cd u = a[i + j];
        const cd v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (invert) {
    for (cd& x : a) x /= static_cast<double>(n);
  }
}

/// Forward DFT of arbitrary length via Bluestein's chirp-z transform.
/// X_k = w_k * sum_n (x_n w_n) conj(w)_{k-n},  w_n = exp(-i pi n^2 / L).
inline void fft_bluestein(std::vector<cd>& a) {
  const std::size_t n = a.size();
  std::vector<cd> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    // i^2 mod 2n keeps the chirp angle small and exact in double
    const std::uint64_t r = (static_cast<std::uint64_t>(i) * i) % (2 * n);
    const double ang = -kPi * static_cast<double>(r) / static_cast<double>(n);
    w[i] = cd(std::cos(ang), std::sin(ang));
  }
  const std::size_t m = next_pow2(2 * n - 1);
  std::vector<cd> u(m, cd(0, 0)), v(m, cd(0, 0));
  for (std::size_t i = 0; i < n; ++i) u[i] = a[i] * w[i];
  v[0] = std::conj(w[0]);
  for (std::size_t i = 1; i < n; ++i) {
    v[i] = std::conj(w[i]);
    v[m - i] = std::conj(w[i]);
  }
  fft_pow2(u, false);
  fft_pow2(v, false);
  for (std::size_t i = 0; i < m; ++i) u[i] *= v[i];
  fft_pow2(u, true);
  for (std::size_t i = 0; i < n; ++i) a[i] = u[i] * w[i];
}

/// In-place forward DFT, any length >= 1.
inline void fft(std::vector<cd>& a) {
  if (a.size() <= 1) return;
  if (is_pow2(a.size())) {
    fft_pow2(a, false);
  } else {
    fft_bluestein(a);
  }
}

/// In-place inverse DFT via the conjugation identity, any length >= 1.
inline void ifft(std::vector<cd>& a) {
  for (cd& x : a) x = std::conj(x);
  fft(a);
  const double inv = 1.0 / static_cast<double>(a.size());
  for (cd& x : a) x = std::conj(x) * inv;
}

}  // namespace fft_detail

/// Forward real FFT. Input is a rank-1 tensor of length L; output is the
/// half spectrum as an [floor(L/2)+1 x 2] tensor of (re, im) pairs. The full
/// spectrum of a real signal is conjugate-symmetric, so the half form is
/// lossless.
inline Tensor rfft(const Tensor& x) {
  if (x.rank() != 1) throw ShapeError("rfft expects a rank-1 tensor");
  const std::size_t n = x.size();
  std::vector<fft_detail::cd> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = fft_detail::cd(x(i), 0.0);
  fft_detail::fft(a);
  const std::size_t half = n / 2 + 1;
  Tensor out({half, 2});
  for (std::size_t k = 0; k < half; ++k) {
    out(k, 0) = a[k].real();
    out(k, 1) = a[k].imag();
  }
  return out;
}

/// Inverse of rfft: rebuilds the full conjugate-symmetric spectrum and
/// returns the length-L real signal.
inline Tensor irfft(const Tensor& spectrum, std::size_t length) {
  if (spectrum.rank() != 2 || spectrum.cols() != 2) {
    throw ShapeError("irfft expects an [n x 2] spectrum tensor");
  }
  const std::size_t half = length / 2 + 1;
  if (spectrum.rows() != half) {
    throw ShapeError("irfft spectrum rows " + std::to_string(spectrum.rows()) +
                     " inconsistent with length " + std::to_string(length));
  }
  std::vector<fft_detail::cd> a(length);
  for (std::size_t k = 0; k < half; ++k) {
    a[k] = fft_detail::cd(spectrum(k, 0), spectrum(k, 1));
  }
  for (std::size_t k = half; k < length; ++k) {
    a[k] = std::conj(a[length - k]);
  }
  fft_detail::ifft(a);
  Tensor out({length});
  for (std::size_t i = 0; i < length; ++i) out(i) = a[i].real();
  return out;
}

/// Circular correlation R[tau] = sum_t q[t] * k[(t - tau) mod L], computed in
/// O(L log L) as ifft(fft(q) * conj(fft(k))).
inline std::vector<double> circular_correlation(const std::vector<double>& q,
                                                const std::vector<double>& k) {
  if (q.size() != k.size()) {
    throw ShapeError("circular_correlation length mismatch");
  }
  const std::size_t n = q.size();
  std::vector<fft_detail::cd> fq(n), fk(n);
  for (std::size_t i = 0; i < n; ++i) {
    fq[i] = fft_detail::cd(q[i], 0.0);
    fk[i] = fft_detail::cd(k[i], 0.0);
  }
  fft_detail::fft(fq);
  fft_detail::fft(fk);
  for (std::size_t i = 0; i < n; ++i) fq[i] *= std::conj(fk[i]);
  fft_detail::ifft(fq);
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = fq[i].real();
  return r;
}

}  // namespace gaitformer
