// Copyright (c) 2026 the gaitformer authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <complex>
#include <vector>

#include "gaitformer/fft.hpp"
#include "gaitformer/rng.hpp"

using namespace gaitformer;

namespace {

// O(L^2) reference DFT.
std::vector<std::complex<double>> naive_dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> s(0.0, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * M_PI * static_cast<double>(k * t) / n;
      s += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = s;
  }
  return out;
}

// O(L^2) reference circular correlation R[tau] = sum_t q[t] k[(t-tau) mod L].
std::vector<double> naive_circular_correlation(const std::vector<double>& q,
                                               const std::vector<double>& k) {
  const std::size_t n = q.size();
  std::vector<double> r(n, 0.0);
  for (std::size_t tau = 0; tau < n; ++tau)
    for (std::size_t t = 0; t < n; ++t)
      r[tau] += q[t] * k[(t + n - tau) % n];
  return r;
}

Tensor random_signal(std::size_t n, Rng& rng) {
  Tensor x({n});
  for (std::size_t i = 0; i < n; ++i) x(i) = rng.uniform(-1.0, 1.0);
  return x;
}

}  // namespace

TEST_CASE("rfft of a constant signal is DC only") {
  Tensor x = Tensor::row({1, 1, 1, 1});
  Tensor s = rfft(x);
  REQUIRE(s.shape() == Shape{3, 2});
  CHECK(s(0, 0) == Catch::Approx(4.0).margin(1e-12));
  CHECK(std::fabs(s(0, 1)) < 1e-12);
  for (std::size_t k = 1; k < 3; ++k) {
    CHECK(std::fabs(s(k, 0)) < 1e-12);
    CHECK(std::fabs(s(k, 1)) < 1e-12);
  }
}

TEST_CASE("rfft of an impulse has unit magnitude everywhere") {
  Tensor x = Tensor::row({1, 0, 0, 0});
  Tensor s = rfft(x);
  for (std::size_t k = 0; k < s.rows(); ++k) {
    const double mag = std::hypot(s(k, 0), s(k, 1));
    CHECK(mag == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("rfft matches the naive DFT on a non-power-of-two length") {
  Rng rng(42);
  Tensor x = random_signal(12, rng);
  Tensor s = rfft(x);
  auto ref = naive_dft(std::vector<double>(x.data(), x.data() + x.size()));
  for (std::size_t k = 0; k < s.rows(); ++k) {
    CHECK(std::fabs(s(k, 0) - ref[k].real()) < 1e-9);
    CHECK(std::fabs(s(k, 1) - ref[k].imag()) < 1e-9);
  }
}

TEST_CASE("rfft/irfft round trip is exact to 1e-9 for L in 1..64") {
  Rng rng(7);
  for (std::size_t n = 1; n <= 64; ++n) {
    Tensor x = random_signal(n, rng);
    Tensor back = irfft(rfft(x), n);
    REQUIRE(back.size() == n);
    CHECK(max_abs_diff(x, back) < 1e-9);
  }
}

TEST_CASE("Parseval: signal energy equals spectrum energy over L") {
  Rng rng(99);
  for (std::size_t n : {4u, 7u, 16u, 33u, 50u}) {
    Tensor x = random_signal(n, rng);
    double sig = 0.0;
    for (std::size_t i = 0; i < n; ++i) sig += x(i) * x(i);

    Tensor s = rfft(x);
    // half-spectrum form: interior bins appear twice in the full spectrum
    double spec = 0.0;
    for (std::size_t k = 0; k < s.rows(); ++k) {
      const double e = s(k, 0) * s(k, 0) + s(k, 1) * s(k, 1);
      const bool shared = k == 0 || (n % 2 == 0 && k == n / 2);
      spec += shared ? e : 2.0 * e;
    }
    CHECK(std::fabs(sig - spec / static_cast<double>(n)) < 1e-8);
  }
}

TEST_CASE("FFT circular correlation matches the naive oracle for L in 2..32") {
  Rng rng(1234);
  for (std::size_t n = 2; n <= 32; ++n) {
    std::vector<double> q(n), k(n);
    for (std::size_t i = 0; i < n; ++i) {
      q[i] = rng.uniform(-1.0, 1.0);
      k[i] = rng.uniform(-1.0, 1.0);
    }
    const auto fast = circular_correlation(q, k);
    const auto slow = naive_circular_correlation(q, k);
    for (std::size_t tau = 0; tau < n; ++tau) {
      CHECK(std::fabs(fast[tau] - slow[tau]) < 1e-8);
    }
  }
}
