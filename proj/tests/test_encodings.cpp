// Copyright (c) 2026 the gaitformer authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "gaitformer/encodings.hpp"
#include "gaitformer/gradcheck.hpp"

using namespace gaitformer;

namespace {
Tensor random_tensor(Shape s, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(s));
  for (std::size_t i = 0; i < t.size(); ++i) t(i) = rng.uniform(-scale, scale);
  return t;
}
}  // namespace

TEST_CASE("positional table at position zero alternates 0,1,0,1") {
  Tensor table = positional_table(4, 6);
  for (std::size_t j = 0; j < 6; ++j) {
    CHECK(table(0, j) == (j % 2 == 0 ? 0.0 : 1.0));
  }
}

TEST_CASE("positional table first channel pair at position one") {
  Tensor table = positional_table(2, 4);
  CHECK(table(1, 0) == Catch::Approx(0.84147).margin(1e-5));
  CHECK(table(1, 1) == Catch::Approx(0.54030).margin(1e-5));
}

TEST_CASE("positional table entries stay within [-1, 1]") {
  Tensor table = positional_table(80, 64);
  for (std::size_t i = 0; i < table.size(); ++i) {
    CHECK(table(i) >= -1.0);
    CHECK(table(i) <= 1.0);
  }
}

TEST_CASE("sinusoidal encoding is additive and rejects odd widths") {
  Rng rng(4);
  Tensor x = random_tensor({5, 8}, rng);
  Tensor encoded = sinusoidal_encode(Var::constant(x)).value();
  Tensor table = positional_table(5, 8);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(encoded(i) == Catch::Approx(x(i) + table(i)).margin(1e-15));
  }
  // zero input reproduces the table exactly
  Tensor from_zero = sinusoidal_encode(Var::constant(Tensor({5, 8}))).value();
  CHECK(max_abs_diff(from_zero, table) == 0.0);

  CHECK_THROWS_AS(sinusoidal_encode(Var::constant(Tensor({5, 7}))), ConfigError);
}

TEST_CASE("gaussian range encoding with zero values is the identity") {
  Rng rng(9);
  ParamSet ps;
  GaussianRangeParams gp = make_gaussian_range(ps, "enc", 4, 16, 6, rng);
  gp.values->value().fill(0.0);
  Tensor x = random_tensor({16, 6}, rng);
  Tensor y = gaussian_range_encode(Var::constant(x), gp).value();
  CHECK(max_abs_diff(x, y) < 1e-15);
}

TEST_CASE("a single range forces p = 1 so every row shifts by v1") {
  Rng rng(10);
  ParamSet ps;
  GaussianRangeParams gp = make_gaussian_range(ps, "enc", 1, 12, 4, rng);
  Tensor x = random_tensor({12, 4}, rng);
  Tensor y = gaussian_range_encode(Var::constant(x), gp).value();
  for (std::size_t l = 0; l < 12; ++l)
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(y(l, j) == Catch::Approx(x(l, j) + gp.values->value()(0, j))
                           .margin(1e-12));
    }
}

TEST_CASE("two symmetric ranges split the midpoint half and half") {
  const std::size_t length = 9;  // midpoint at l = 4
  Tensor mu({2}, {0.0, 8.0});
  Tensor sigma({2}, {2.5, 2.5});
  Tensor p = gaussian_range_distribution(length, mu, sigma);
  CHECK(p(4, 0) == Catch::Approx(0.5).margin(1e-12));
  CHECK(p(4, 1) == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("range distribution rows are probability vectors") {
  Rng rng(12);
  Tensor mu({5});
  Tensor sigma({5});
  for (std::size_t g = 0; g < 5; ++g) {
    mu(g) = rng.uniform(-3.0, 20.0);
    sigma(g) = rng.uniform(0.3, 6.0);
  }
  Tensor p = gaussian_range_distribution(17, mu, sigma);
  for (std::size_t l = 0; l < 17; ++l) {
    double sum = 0.0;
    for (std::size_t g = 0; g < 5; ++g) {
      CHECK(p(l, g) >= 0.0);
      sum += p(l, g);
    }
    CHECK(std::fabs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("initialization covers the sequence with positive widths") {
  Rng rng(13);
  const std::size_t ranges = 10, length = 80;
  ParamSet ps;
  GaussianRangeParams gp = make_gaussian_range(ps, "enc", ranges, length, 8, rng);
  const double spacing = static_cast<double>(length) / ranges;
  for (std::size_t g = 0; g < ranges; ++g) {
    const double center = (static_cast<double>(g) + 0.5) * spacing;
    CHECK(std::fabs(gp.mu->value()(g) - center) <= spacing / 4.0 + 1e-12);
    CHECK(softplus(gp.rho->value()(g)) == Catch::Approx(spacing).margin(1e-9));
  }
}

TEST_CASE("gaussian range encoding passes grad_check in all inputs") {
  Rng rng(14);
  ParamSet ps;
  Parameter& x = ps.add("x", random_tensor({10, 5}, rng));
  GaussianRangeParams gp = make_gaussian_range(ps, "enc", 3, 10, 5, rng);
  auto loss = [&] {
    Rng w(55);
    Tensor weights({10, 5});
    for (std::size_t i = 0; i < weights.size(); ++i)
      weights(i) = w.uniform(0.5, 1.5);
    return sum_all(
        mul(gaussian_range_encode(x.var(), gp), Var::constant(weights)));
  };
  auto reports = grad_check(loss, ps);
  for (const auto& r : reports) {
    INFO(r.parameter << " rel err " << r.max_rel_error);
    CHECK(r.pass);
  }
}

TEST_CASE("sinusoidal encoding keeps gradient flow through x") {
  Rng rng(15);
  ParamSet ps;
  Parameter& x = ps.add("x", random_tensor({6, 4}, rng));
  auto loss = [&] { return sum_all(mul(sinusoidal_encode(x.var()), x.var())); };
  CHECK(all_pass(grad_check(loss, ps)));
}
