#include <doctest.h>

#include <functional>

#include "support.hpp"
#include "ucp/ops.hpp"

using namespace ucp;
using testing::max_abs_diff;
using testing::random_tensor;

namespace {

// Direct seven-loop convolution.
Tensor4d conv_naive(const Tensor4d& x, const Tensor4d& w, const Tensor4d* b, int stride, int pad) {
  const int ho = (x.h() + 2 * pad - w.h()) / stride + 1;
  const int wo = (x.w() + 2 * pad - w.w()) / stride + 1;
  Tensor4d y(x.n(), w.n(), ho, wo);
  for (int n = 0; n < x.n(); ++n)
    for (int o = 0; o < w.n(); ++o)
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j) {
          double acc = b ? (*b)[static_cast<std::size_t>(o)] : 0.0;
          for (int c = 0; c < x.c(); ++c)
            for (int ky = 0; ky < w.h(); ++ky)
              for (int kx = 0; kx < w.w(); ++kx) {
                const int yy = i * stride - pad + ky, xx = j * stride - pad + kx;
                if (yy < 0 || yy >= x.h() || xx < 0 || xx >= x.w()) continue;
                acc += x.at(n, c, yy, xx) * w.at(o, c, ky, kx);
              }
          y.at(n, o, i, j) = acc;
        }
  return y;
}

// Central-difference gradient of sum(dy * f(x)) with respect to x.
Tensor4d numeric_grad(Tensor4d x, const Tensor4d& dy, const std::function<Tensor4d(const Tensor4d&)>& f) {
  Tensor4d g(x.shape());
  const double eps = 1e-6;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    x[i] = v + eps;
    const Tensor4d up = f(x);
    x[i] = v - eps;
    const Tensor4d down = f(x);
    x[i] = v;
    double s = 0;
    for (std::size_t k = 0; k < dy.size(); ++k) s += dy[k] * (up[k] - down[k]);
    g[i] = s / (2 * eps);
  }
  return g;
}

}  // namespace

TEST_SUITE("ops") {
  TEST_CASE("conv2d matches the nested-loop definition") {
    std::mt19937_64 rng(1);
    for (auto [stride, pad, k] : {std::tuple{1, 1, 3}, {2, 1, 3}, {1, 0, 1}, {2, 0, 1}, {1, 0, 3}}) {
      const auto x = random_tensor<double>({2, 3, 7, 6}, rng);
      const auto w = random_tensor<double>({4, 3, k, k}, rng);
      const auto b = random_tensor<double>({4, 1, 1, 1}, rng);
      const auto y = ops::conv2d(x, w, &b, {stride, pad});
      const auto ref = conv_naive(x, w, &b, stride, pad);
      REQUIRE(y.shape() == ref.shape());
      CHECK(max_abs_diff(y, ref) < 1e-12);
    }
  }

  TEST_CASE("3x3 conv with padding 1 keeps a 32x32 map") {
    Tensor4 x(1, 3, 32, 32, 1.0f);
    Tensor4 w(16, 3, 3, 3, 0.5f);
    const auto y = ops::conv2d<float>(x, w, nullptr, {1, 1});
    CHECK(y.shape() == Shape4{1, 16, 32, 32});
    CHECK(y.at(0, 0, 5, 5) == doctest::Approx(13.5));
    CHECK(y.at(0, 0, 0, 0) == doctest::Approx(6.0));
  }

  TEST_CASE("conv2d backward matches finite differences") {
    std::mt19937_64 rng(2);
    for (auto [stride, pad] : {std::pair{1, 1}, {2, 1}, {1, 0}}) {
      const auto x = random_tensor<double>({2, 2, 5, 5}, rng);
      auto w = random_tensor<double>({3, 2, 3, 3}, rng);
      auto b = random_tensor<double>({3, 1, 1, 1}, rng);
      const auto y = ops::conv2d(x, w, &b, {stride, pad});
      const auto dy = random_tensor<double>(y.shape(), rng);
      Tensor4d dw(w.shape()), db(b.shape());
      const auto dx = ops::conv2d_backward(x, w, dy, {stride, pad}, dw, &db);
      CHECK(max_abs_diff(dx, numeric_grad(x, dy, [&](const Tensor4d& v) {
                           return ops::conv2d(v, w, &b, {stride, pad});
                         })) < 1e-7);
      CHECK(max_abs_diff(dw, numeric_grad(w, dy, [&](const Tensor4d& v) {
                           return ops::conv2d(x, v, &b, {stride, pad});
                         })) < 1e-7);
      CHECK(max_abs_diff(db, numeric_grad(b, dy, [&](const Tensor4d& v) {
                           return ops::conv2d(x, w, &v, {stride, pad});
                         })) < 1e-7);
    }
  }

  TEST_CASE("batchnorm train and eval against scalar loops") {
    std::mt19937_64 rng(3);
    const auto x = random_tensor<double>({4, 3, 3, 3}, rng);
    const auto gamma = random_tensor<double>({3, 1, 1, 1}, rng);
    const auto beta = random_tensor<double>({3, 1, 1, 1}, rng);
    Tensor4d rm(3, 1, 1, 1, 0.0), rv(3, 1, 1, 1, 1.0);
    ops::BatchNormCache<double> cache;
    const auto y = ops::batchnorm(x, gamma, beta, rm, rv, true, 1e-5, 0.1, cache);
    for (int c = 0; c < 3; ++c) {
      double mean = 0, var = 0;
      const double m = 4 * 9;
      for (int n = 0; n < 4; ++n)
        for (double v : x.channel(n, c)) mean += v;
      mean /= m;
      for (int n = 0; n < 4; ++n)
        for (double v : x.channel(n, c)) var += (v - mean) * (v - mean);
      const double inv = 1 / std::sqrt(var / m + 1e-5);
      for (int n = 0; n < 4; ++n)
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j)
            CHECK(y.at(n, c, i, j) ==
                  doctest::Approx(gamma[c] * (x.at(n, c, i, j) - mean) * inv + beta[c]).epsilon(1e-12));
      CHECK(rm[c] == doctest::Approx(0.1 * mean));
      CHECK(rv[c] == doctest::Approx(0.9 + 0.1 * var / (m - 1)));
    }
    const auto ye = ops::batchnorm(x, gamma, beta, rm, rv, false, 1e-5, 0.1, cache);
    CHECK(ye.at(1, 2, 0, 1) ==
          doctest::Approx(gamma[2] * (x.at(1, 2, 0, 1) - rm[2]) / std::sqrt(rv[2] + 1e-5) + beta[2]));
  }

  TEST_CASE("batchnorm backward matches finite differences") {
    std::mt19937_64 rng(4);
    const auto x = random_tensor<double>({3, 2, 2, 3}, rng);
    const auto gamma = random_tensor<double>({2, 1, 1, 1}, rng, 0.5, 1.5);
    const auto beta = random_tensor<double>({2, 1, 1, 1}, rng);
    for (bool train : {true, false}) {
      Tensor4d rm(2, 1, 1, 1, 0.1), rv(2, 1, 1, 1, 0.8);
      ops::BatchNormCache<double> cache;
      const auto y = ops::batchnorm(x, gamma, beta, rm, rv, train, 1e-5, 0.0, cache);
      const auto dy = random_tensor<double>(y.shape(), rng);
      Tensor4d dg(gamma.shape()), db(beta.shape());
      const auto dx = ops::batchnorm_backward(dy, gamma, cache, train, dg, db);
      auto f = [&](const Tensor4d& v, const Tensor4d& g, const Tensor4d& b) {
        Tensor4d m = rm, s = rv;
        ops::BatchNormCache<double> c;
        return ops::batchnorm(v, g, b, m, s, train, 1e-5, 0.0, c);
      };
      CHECK(max_abs_diff(dx, numeric_grad(x, dy, [&](const Tensor4d& v) { return f(v, gamma, beta); })) < 1e-6);
      CHECK(max_abs_diff(dg, numeric_grad(gamma, dy, [&](const Tensor4d& v) { return f(x, v, beta); })) < 1e-6);
      CHECK(max_abs_diff(db, numeric_grad(beta, dy, [&](const Tensor4d& v) { return f(x, gamma, v); })) < 1e-6);
    }
  }

  TEST_CASE("maxpool, relu, global average pool") {
    Tensor4d x(Shape4{1, 1, 4, 4}, std::vector<double>{1, 3, 2, 0, 4, 4, 1, 1, 0, 0, 5, 6, -1, 2, 7, 7});
    std::vector<std::size_t> arg;
    const auto y = ops::maxpool(x, 2, 2, arg);
    CHECK(y.vec() == std::vector<double>{4, 2, 2, 7});
    // Ties go to the first maximum.
    CHECK(arg[0] == x.index(0, 0, 1, 0));
    CHECK(arg[3] == x.index(0, 0, 3, 2));
    const auto dx = ops::maxpool_backward(x.shape(), Tensor4d(y.shape(), 1.0), arg);
    CHECK(dx.at(0, 0, 1, 0) == 1.0);
    CHECK(dx.at(0, 0, 1, 1) == 0.0);

    const auto r = ops::relu(x);
    CHECK(r.at(0, 0, 3, 0) == 0.0);
    CHECK(r.at(0, 0, 3, 1) == 2.0);

    const auto g = ops::global_avg_pool(x);
    double s = 0;
    for (double v : x.data()) s += v;
    CHECK(g[0] == doctest::Approx(s / 16));
    const auto dg = ops::global_avg_pool_backward(x.shape(), Tensor4d(1, 1, 1, 1, 2.0));
    CHECK(dg.at(0, 0, 2, 2) == doctest::Approx(2.0 / 16));
  }

  TEST_CASE("fully connected and softmax gradients") {
    std::mt19937_64 rng(5);
    const auto x = random_tensor<double>({3, 5, 1, 1}, rng);
    const auto w = random_tensor<double>({4, 5, 1, 1}, rng);
    const auto b = random_tensor<double>({4, 1, 1, 1}, rng);
    const auto y = ops::fully_connected(x, w, b);
    for (int n = 0; n < 3; ++n)
      for (int o = 0; o < 4; ++o) {
        double acc = b[o];
        for (int i = 0; i < 5; ++i) acc += w.at(o, i, 0, 0) * x.at(n, i, 0, 0);
        CHECK(y.at(n, o, 0, 0) == doctest::Approx(acc));
      }
    const auto dy = random_tensor<double>(y.shape(), rng);
    Tensor4d dw(w.shape()), db(b.shape());
    const auto dx = ops::fully_connected_backward(x, w, dy, dw, db);
    CHECK(max_abs_diff(dx, numeric_grad(x, dy, [&](const Tensor4d& v) { return ops::fully_connected(v, w, b); })) < 1e-7);
    CHECK(max_abs_diff(dw, numeric_grad(w, dy, [&](const Tensor4d& v) { return ops::fully_connected(x, v, b); })) < 1e-7);

    const auto p = ops::softmax(y);
    for (int n = 0; n < 3; ++n) {
      double s = 0;
      for (int o = 0; o < 4; ++o) s += p.at(n, o, 0, 0);
      CHECK(s == doctest::Approx(1.0));
    }
    const auto dp = random_tensor<double>(p.shape(), rng);
    CHECK(max_abs_diff(ops::softmax_backward(p, dp),
                       numeric_grad(y, dp, [&](const Tensor4d& v) { return ops::softmax(v); })) < 1e-7);
  }

  TEST_CASE("softmax is stable for large logits") {
    Tensor4 x(Shape4{1, 3, 1, 1}, std::vector<float>{1000.f, 1000.f, -1000.f});
    const auto p = ops::softmax(x);
    CHECK(p.all_finite());
    CHECK(p[0] == doctest::Approx(0.5));
  }

  TEST_CASE("mseb backward matches finite differences") {
    std::mt19937_64 rng(6);
    const auto u = random_tensor<double>({2, 6, 3, 3}, rng);
    const auto w1 = random_tensor<double>({3, 6, 1, 1}, rng);
    const auto w2 = random_tensor<double>({6, 3, 1, 1}, rng);
    ops::MsebCache<double> cache;
    const auto y = ops::mseb(u, w1, w2, false, cache);
    const auto dy = random_tensor<double>(y.shape(), rng);
    Tensor4d dw1(w1.shape()), dw2(w2.shape());
    const auto du = ops::mseb_backward(u, w1, w2, dy, false, cache, dw1, dw2);
    auto f = [&](const Tensor4d& a, const Tensor4d& b, const Tensor4d& c) {
      ops::MsebCache<double> k;
      return ops::mseb(a, b, c, false, k);
    };
    CHECK(max_abs_diff(du, numeric_grad(u, dy, [&](const Tensor4d& v) { return f(v, w1, w2); })) < 1e-7);
    CHECK(max_abs_diff(dw1, numeric_grad(w1, dy, [&](const Tensor4d& v) { return f(u, v, w2); })) < 1e-7);
    CHECK(max_abs_diff(dw2, numeric_grad(w2, dy, [&](const Tensor4d& v) { return f(u, w1, v); })) < 1e-7);
  }

  TEST_CASE("shape mismatches are structural errors") {
    Tensor4 x(1, 3, 8, 8), w(4, 2, 3, 3);
    CHECK_THROWS_AS(ops::conv2d<float>(x, w, nullptr, {1, 1}), StructuralError);
    Tensor4 a(1, 2, 2, 2), b(1, 3, 2, 2);
    CHECK_THROWS_AS(a += b, StructuralError);
    CHECK_THROWS_AS(Tensor4(0, 1, 1, 1), StructuralError);
  }
}
