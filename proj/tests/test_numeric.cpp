// Copyright (c) 2026 the gaitformer authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <vector>

#include "gaitformer/gradcheck.hpp"
#include "gaitformer/ops.hpp"
#include "gaitformer/rng.hpp"

using namespace gaitformer;

namespace {

Tensor random_tensor(Shape s, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(s));
  for (std::size_t i = 0; i < t.size(); ++i)
    t(i) = rng.uniform(-scale, scale);
  return t;
}

// Forward x^2 with a deliberately wrong backward rule (3x instead of 2x);
// negative control for grad_check.
Var corrupted_square(const Var& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out(i) = a.value()(i) * a.value()(i);
  return ag::make_op(std::move(out), {a}, [a](ag::Node& n) {
    Tensor g(n.grad.shape());
    for (std::size_t i = 0; i < g.size(); ++i)
      g(i) = 3.0 * a.value()(i) * n.grad(i);
    ag::accumulate(*a.node(), g);
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor basics
// ---------------------------------------------------------------------------

TEST_CASE("tensor shape validation") {
  CHECK_THROWS_AS(Tensor({3, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor({4}).reshaped({3}), ShapeError);
  Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
  CHECK(m.transposed()(0, 1) == 3.0);
}

TEST_CASE("matmul against a scalar-loop oracle") {
  Rng rng(5);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  Tensor c = matmul(a, b);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s += a(i, k) * b(k, j);
      CHECK(c(i, j) == Catch::Approx(s).margin(1e-12));
    }
}

// ---------------------------------------------------------------------------
// affine
// ---------------------------------------------------------------------------

TEST_CASE("affine identity and zero-weight cases") {
  Var x = Var::constant(Tensor::matrix({{1, 2}}));
  Var wi = Var::constant(Tensor::matrix({{1, 0}, {0, 1}}));
  Var b0 = Var::constant(Tensor::row({0, 0}));
  Tensor y = affine(x, wi, b0).value();
  CHECK(y(0, 0) == 1.0);
  CHECK(y(0, 1) == 2.0);

  Var wz = Var::constant(Tensor::matrix({{0, 0}, {0, 0}}));
  Var b = Var::constant(Tensor::row({3, 4}));
  Tensor z = affine(x, wz, b).value();
  CHECK(z(0, 0) == 3.0);
  CHECK(z(0, 1) == 4.0);
}

TEST_CASE("affine random case matches hand-computed dot products") {
  Rng rng(11);
  Var x = Var::constant(random_tensor({3, 4}, rng));
  Var w = Var::constant(random_tensor({4, 2}, rng));
  Var b = Var::constant(random_tensor({2}, rng));
  Tensor y = affine(x, w, b).value();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double s = b.value()(j);
      for (std::size_t k = 0; k < 4; ++k)
        s += x.value()(i, k) * w.value()(k, j);
      CHECK(y(i, j) == Catch::Approx(s).margin(1e-12));
    }
}

TEST_CASE("affine shape mismatch names both shapes") {
  Var x = Var::constant(Tensor({2, 3}));
  Var w = Var::constant(Tensor({4, 2}));
  Var b = Var::constant(Tensor({2}));
  try {
    affine(x, w, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x2]") != std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// conv1d
// ---------------------------------------------------------------------------

TEST_CASE("conv1d identity kernel in same mode") {
  Var x = Var::constant(Tensor({1, 4}, {1, 2, 3, 4}));
  Var w = Var::constant(Tensor({1, 1, 1}, {1}));
  Tensor y = conv1d(x, w, Padding::kSame).value();
  REQUIRE(y.shape() == Shape{1, 4});
  for (std::size_t t = 0; t < 4; ++t) CHECK(y(0, t) == x.value()(0, t));
}

TEST_CASE("conv1d valid mode equals the sliding-window sum oracle") {
  Var x = Var::constant(Tensor({1, 4}, {1, 2, 3, 4}));
  Var w = Var::constant(Tensor({1, 1, 3}, {1, 1, 1}));
  Tensor y = conv1d(x, w, Padding::kValid).value();
  REQUIRE(y.shape() == Shape{1, 2});
  CHECK(y(0, 0) == 6.0);
  CHECK(y(0, 1) == 9.0);
}

TEST_CASE("conv1d impulse response follows the cross-correlation convention") {
  // Without a kernel flip, sliding the window over a centered impulse writes
  // the kernel out reversed: out(t) = sum_u w(u) x(t + u - pad).
  Var x = Var::constant(Tensor({1, 5}, {0, 0, 1, 0, 0}));
  Var w = Var::constant(Tensor({1, 1, 3}, {1, 2, 3}));
  Tensor y = conv1d(x, w, Padding::kSame).value();
  const double expect[5] = {0, 3, 2, 1, 0};
  for (std::size_t t = 0; t < 5; ++t) CHECK(y(0, t) == expect[t]);
}

TEST_CASE("conv1d length contracts and error paths") {
  Rng rng(3);
  for (std::size_t L : {5u, 9u, 16u}) {
    for (std::size_t k : {1u, 3u, 5u}) {
      Var x = Var::constant(random_tensor({2, L}, rng));
      Var w = Var::constant(random_tensor({3, 2, k}, rng));
      CHECK(conv1d(x, w, Padding::kSame).value().cols() == L);
      CHECK(conv1d(x, w, Padding::kValid).value().cols() == L - k + 1);
    }
  }
  Var x = Var::constant(Tensor({1, 3}));
  CHECK_THROWS_AS(conv1d(x, Var::constant(Tensor({1, 1, 5})), Padding::kValid),
                  ConfigError);
  CHECK_THROWS_AS(conv1d(x, Var::constant(Tensor({1, 1, 2})), Padding::kSame),
                  ConfigError);
}

// ---------------------------------------------------------------------------
// softmax
// ---------------------------------------------------------------------------

TEST_CASE("softmax symmetry, stability, and oracle values") {
  Tensor s0 = softmax(Var::constant(Tensor::row({0, 0, 0})), 0).value();
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(s0(i) == Catch::Approx(1.0 / 3.0).margin(1e-15));

  Tensor s1 = softmax(Var::constant(Tensor::row({1000, 0})), 0).value();
  CHECK(s1(0) == Catch::Approx(1.0).margin(1e-12));
  CHECK(s1(1) == Catch::Approx(0.0).margin(1e-12));
  CHECK(s1.all_finite());

  Tensor s2 = softmax(Var::constant(Tensor::row({1, 2, 3})), 0).value();
  CHECK(s2(0) == Catch::Approx(0.09003).margin(1e-5));
  CHECK(s2(1) == Catch::Approx(0.24473).margin(1e-5));
  CHECK(s2(2) == Catch::Approx(0.66524).margin(1e-5));
}

TEST_CASE("softmax slices are probability vectors on both axes") {
  Rng rng(21);
  Var x = Var::constant(random_tensor({5, 7}, rng, 30.0));
  for (std::size_t axis : {0u, 1u}) {
    Tensor y = softmax(x, axis).value();
    const std::size_t slices = axis == 1 ? 5 : 7;
    const std::size_t count = axis == 1 ? 7 : 5;
    for (std::size_t s = 0; s < slices; ++s) {
      double sum = 0.0;
      for (std::size_t i = 0; i < count; ++i) {
        const double v = axis == 1 ? y(s, i) : y(i, s);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        sum += v;
      }
      CHECK(std::fabs(sum - 1.0) < 1e-12);
    }
  }
}

// ---------------------------------------------------------------------------
// layer_norm
// ---------------------------------------------------------------------------

TEST_CASE("layer_norm maps constant rows to zero and zero gamma to beta") {
  Var gamma = Var::constant(Tensor({4}, 1.0));
  Var beta = Var::constant(Tensor({4}, 0.0));
  Var x = Var::constant(Tensor({2, 4}, 3.25));
  Tensor y = layer_norm(x, gamma, beta).value();
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y(i) == 0.0);

  Var g0 = Var::constant(Tensor({4}, 0.0));
  Var b5 = Var::constant(Tensor({4}, 5.0));
  Rng rng(2);
  Tensor z = layer_norm(Var::constant(random_tensor({2, 4}, rng)), g0, b5).value();
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(z(i) == 5.0);
}

TEST_CASE("layer_norm output rows have zero mean and unit variance") {
  Rng rng(17);
  Var x = Var::constant(random_tensor({2, 6}, rng, 5.0));
  Var gamma = Var::constant(Tensor({6}, 1.0));
  Var beta = Var::constant(Tensor({6}, 0.0));
  Tensor y = layer_norm(x, gamma, beta, 1e-8).value();
  for (std::size_t i = 0; i < 2; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < 6; ++j) mean += y(i, j);
    mean /= 6.0;
    CHECK(std::fabs(mean) < 1e-10);
    double var = 0.0;
    for (std::size_t j = 0; j < 6; ++j) var += (y(i, j) - mean) * (y(i, j) - mean);
    var /= 6.0;
    CHECK(std::fabs(var - 1.0) < 1e-6);
  }
}

// ---------------------------------------------------------------------------
// activation / pooling / dropout
// ---------------------------------------------------------------------------

TEST_CASE("relu, max2 pooling, and inference-mode dropout") {
  Var x = Var::constant(Tensor::row({-1, 2, -3, 4}));
  Tensor r = activation_pool_dropout(x, true, Pool::kNone, 0.0, false).value();
  const double er[4] = {0, 2, 0, 4};
  for (std::size_t i = 0; i < 4; ++i) CHECK(r(i) == er[i]);

  Var p = Var::constant(Tensor::row({1, 3, 2, 0}));
  Tensor pooled = activation_pool_dropout(p, false, Pool::kMax2, 0.0, false).value();
  REQUIRE(pooled.size() == 2);
  CHECK(pooled(0) == 3.0);
  CHECK(pooled(1) == 2.0);

  // odd trailing length: the final element is dropped
  Tensor odd = maxpool2(Var::constant(Tensor::row({1, 5, 3}))).value();
  REQUIRE(odd.size() == 1);
  CHECK(odd(0) == 5.0);

  Rng rng(1);
  Var any = Var::constant(random_tensor({3, 4}, rng));
  Tensor same = activation_pool_dropout(any, false, Pool::kNone, 0.5, false).value();
  CHECK(max_abs_diff(same, any.value()) == 0.0);

  CHECK_THROWS_AS(dropout(any, 1.0, true, &rng), ConfigError);
}

TEST_CASE("training-mode dropout zeroes and rescales") {
  Rng rng(8);
  Var x = Var::constant(Tensor({1000}, 1.0));
  Tensor y = dropout(x, 0.5, true, &rng).value();
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y(i) == 0.0) {
      ++zeros;
    } else {
      CHECK(y(i) == 2.0);
    }
  }
  CHECK(zeros > 400);
  CHECK(zeros < 600);
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

namespace {
struct LstmWeights {
  Var wx, wh, b;
};

LstmWeights zero_lstm(std::size_t din, std::size_t u) {
  return {Var::constant(Tensor({din, 4 * u})), Var::constant(Tensor({u, 4 * u})),
          Var::constant(Tensor({4 * u}))};
}

// One LSTM step on plain doubles; reference for the tape implementation.
void lstm_step_oracle(const std::vector<double>& x, std::vector<double>& h,
                      std::vector<double>& c, const Tensor& wx, const Tensor& wh,
                      const Tensor& b, std::size_t u) {
  std::vector<double> pre(4 * u, 0.0);
  for (std::size_t j = 0; j < 4 * u; ++j) {
    double s = b(j);
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * wx(i, j);
    for (std::size_t i = 0; i < u; ++i) s += h[i] * wh(i, j);
    pre[j] = s;
  }
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (std::size_t i = 0; i < u; ++i) {
    const double gi = sig(pre[i]);
    const double gf = sig(pre[u + i]);
    const double gc = std::tanh(pre[2 * u + i]);
    const double go = sig(pre[3 * u + i]);
    c[i] = gf * c[i] + gi * gc;
    h[i] = go * std::tanh(c[i]);
  }
}
}  // namespace

TEST_CASE("lstm_layer fixed point at zero") {
  auto w = zero_lstm(2, 3);
  Var x = Var::constant(Tensor({4, 2}));
  Tensor y = lstm_layer(x, w.wx, w.wh, w.b, 3).value();
  REQUIRE(y.shape() == Shape{4, 3});
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y(i) == 0.0);
}

TEST_CASE("lstm_layer matches the per-step cell oracle") {
  Rng rng(33);
  const std::size_t din = 2, u = 3;
  Tensor wx = random_tensor({din, 4 * u}, rng, 0.4);
  Tensor wh = random_tensor({u, 4 * u}, rng, 0.4);
  Tensor b = random_tensor({4 * u}, rng, 0.2);

  for (std::size_t len : {1u, 3u}) {
    Tensor x = random_tensor({len, din}, rng);
    Tensor y = lstm_layer(Var::constant(x), Var::constant(wx),
                          Var::constant(wh), Var::constant(b), u)
                   .value();
    std::vector<double> h(u, 0.0), c(u, 0.0);
    for (std::size_t t = 0; t < len; ++t) {
      std::vector<double> xt(din);
      for (std::size_t i = 0; i < din; ++i) xt[i] = x(t, i);
      lstm_step_oracle(xt, h, c, wx, wh, b, u);
      for (std::size_t i = 0; i < u; ++i)
        CHECK(std::fabs(y(t, i) - h[i]) < 1e-10);
    }
  }
}

// ---------------------------------------------------------------------------
// grad_check behaviour
// ---------------------------------------------------------------------------

TEST_CASE("grad_check confirms the quadratic analytic gradient") {
  ParamSet ps;
  Parameter& theta = ps.add("theta", Tensor::row({1, 2, 3}));
  auto loss = [&] { return sum_all(mul(theta.var(), theta.var())); };
  auto reports = grad_check(loss, ps);
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].pass);
  // analytic gradient itself is 2*theta
  ps.zero_grad_all();
  backward(loss());
  CHECK(theta.grad()(0) == Catch::Approx(2.0).margin(1e-12));
  CHECK(theta.grad()(1) == Catch::Approx(4.0).margin(1e-12));
  CHECK(theta.grad()(2) == Catch::Approx(6.0).margin(1e-12));
}

TEST_CASE("grad_check passes through softmax cross-entropy") {
  ParamSet ps;
  Parameter& logits = ps.add("logits", Tensor::row({0.3, -0.7, 1.2, 0.1}));
  auto loss = [&] { return softmax_cross_entropy(logits.var(), {2}); };
  CHECK(all_pass(grad_check(loss, ps)));
}

TEST_CASE("grad_check flags a corrupted backward rule") {
  ParamSet ps;
  Parameter& theta = ps.add("theta", Tensor::row({1.0, -2.0}));
  auto loss = [&] { return sum_all(corrupted_square(theta.var())); };
  auto reports = grad_check(loss, ps);
  REQUIRE(reports.size() == 1);
  CHECK_FALSE(reports[0].pass);
}

TEST_CASE("grad_check rejects a non-scalar loss") {
  ParamSet ps;
  Parameter& theta = ps.add("theta", Tensor::row({1.0, 2.0}));
  auto loss = [&] { return mul(theta.var(), theta.var()); };
  CHECK_THROWS_AS(grad_check(loss, ps), ContractError);
}

// ---------------------------------------------------------------------------
// every differentiable primitive passes grad_check on small random shapes
// ---------------------------------------------------------------------------

namespace {

// Reduce any tensor to a scalar with fixed random weights so the gradient is
// informative in every coordinate.
Var weighted_readout(const Var& x, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w(x.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w(i) = rng.uniform(0.5, 1.5);
  return sum_all(mul(x, Var::constant(w)));
}

}  // namespace

TEST_CASE("primitive operations pass grad_check") {
  Rng rng(1001);
  ParamSet ps;
  Parameter& a = ps.add("a", random_tensor({4, 5}, rng));
  Parameter& b = ps.add("b", random_tensor({4, 5}, rng));
  Parameter& w = ps.add("w", random_tensor({5, 3}, rng));
  Parameter& bias = ps.add("bias", random_tensor({3}, rng));
  Parameter& gamma = ps.add("gamma", random_tensor({5}, rng));
  Parameter& beta = ps.add("beta", random_tensor({5}, rng));
  Parameter& kern = ps.add("kern", random_tensor({2, 4, 3}, rng));
  Parameter& vec = ps.add("vec", random_tensor({6}, rng));
  Parameter& lstm_wx = ps.add("lstm_wx", random_tensor({2, 8}, rng, 0.5));
  Parameter& lstm_wh = ps.add("lstm_wh", random_tensor({2, 8}, rng, 0.5));
  Parameter& lstm_b = ps.add("lstm_b", random_tensor({8}, rng, 0.2));

  struct Case {
    const char* name;
    std::function<Var()> loss;
  };
  const std::vector<Case> cases = {
      {"add", [&] { return weighted_readout(add(a.var(), b.var()), 1); }},
      {"sub", [&] { return weighted_readout(sub(a.var(), b.var()), 2); }},
      {"mul", [&] { return weighted_readout(mul(a.var(), b.var()), 3); }},
      {"mul_scalar", [&] { return weighted_readout(mul_scalar(a.var(), -1.7), 4); }},
      {"add_rowvec", [&] {
         return weighted_readout(add_rowvec(matmul(a.var(), w.var()), bias.var()), 5);
       }},
      {"add_colvec", [&] {
         return weighted_readout(add_colvec(transpose(w.var()), bias.var()), 6);
       }},
      {"mul_rowvec", [&] { return weighted_readout(mul_rowvec(a.var(), gamma.var()), 7); }},
      {"matmul", [&] { return weighted_readout(matmul(a.var(), w.var()), 8); }},
      {"transpose", [&] { return weighted_readout(transpose(a.var()), 9); }},
      {"relu", [&] { return weighted_readout(relu(a.var()), 10); }},
      {"sigmoid", [&] { return weighted_readout(sigmoid(a.var()), 11); }},
      {"tanh", [&] { return weighted_readout(tanh_op(a.var()), 12); }},
      {"softmax_rows", [&] { return weighted_readout(softmax(a.var(), 1), 13); }},
      {"softmax_cols", [&] { return weighted_readout(softmax(a.var(), 0), 14); }},
      {"layer_norm", [&] {
         return weighted_readout(layer_norm(a.var(), gamma.var(), beta.var()), 15);
       }},
      {"conv1d_same", [&] {
         return weighted_readout(conv1d(a.var(), kern.var(), Padding::kSame), 16);
       }},
      {"conv1d_valid", [&] {
         return weighted_readout(conv1d(a.var(), kern.var(), Padding::kValid), 17);
       }},
      {"maxpool2", [&] { return weighted_readout(maxpool2(a.var()), 18); }},
      {"dropout", [&] {
         Rng drop(77);  // fresh mask RNG per evaluation keeps the loss smooth
         return weighted_readout(dropout(a.var(), 0.4, true, &drop), 19);
       }},
      {"reshape", [&] { return weighted_readout(reshape(a.var(), {2, 10}), 20); }},
      {"slice_rows", [&] { return weighted_readout(slice_rows(a.var(), 1, 3), 21); }},
      {"slice_cols", [&] { return weighted_readout(slice_cols(a.var(), 2, 5), 22); }},
      {"concat_rows", [&] {
         return weighted_readout(concat_rows({a.var(), b.var()}), 23);
       }},
      {"concat_cols", [&] {
         return weighted_readout(concat_cols({a.var(), b.var()}), 24);
       }},
      {"select_rows", [&] {
         return weighted_readout(select_rows(a.var(), {3, 0, 3}), 25);
       }},
      {"scatter_rows_fill", [&] {
         return weighted_readout(
             scatter_rows_fill(slice_rows(a.var(), 0, 2), gamma.var(), {1, 4}, 6), 26);
       }},
      {"mean_rows", [&] { return weighted_readout(mean_rows(a.var()), 27); }},
      {"select_elems", [&] {
         return weighted_readout(select_elems(vec.var(), {5, 1, 1}), 28);
       }},
      {"scale_by_elem", [&] {
         return weighted_readout(scale_by_elem(a.var(), vec.var(), 2), 29);
       }},
      {"roll_rows", [&] { return weighted_readout(roll_rows(a.var(), 3), 30); }},
      {"cross_entropy", [&] {
         return softmax_cross_entropy(matmul(a.var(), w.var()), {0, 2, 1, 2});
       }},
      {"lstm", [&] {
         return weighted_readout(
             lstm_layer(slice_cols(a.var(), 0, 2), lstm_wx.var(), lstm_wh.var(),
                        lstm_b.var(), 2),
             31);
       }},
  };

  for (const auto& c : cases) {
    INFO(c.name);
    auto reports = grad_check(c.loss, ps);
    for (const auto& r : reports) {
      INFO(c.name << " / " << r.parameter << " rel err " << r.max_rel_error);
      CHECK(r.pass);
    }
  }
}
