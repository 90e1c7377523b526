#include "doctest.h"
#include "fan/ops.hpp"
#include "test_util.hpp"

using namespace fan;
using fan::test::numeric_grad;
using fan::test::random_tensor;

namespace {

// Direct six-loop convolution with explicit zero padding.
Tensor4<double> conv_oracle(const Tensor4<double>& x, const ConvParams<double>& p) {
  const std::size_t kh = p.k_h(), kw = p.k_w();
  const long pad_h = p.padding == Padding::same ? static_cast<long>(kh / 2) : 0;
  const long pad_w = p.padding == Padding::same ? static_cast<long>(kw / 2) : 0;
  const std::size_t oh = (x.h() + 2 * pad_h - kh) / p.stride + 1;
  const std::size_t ow = (x.w() + 2 * pad_w - kw) / p.stride + 1;
  Tensor4<double> out(x.n(), p.c_out(), oh, ow);
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t o = 0; o < p.c_out(); ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          double s = p.bias[o];
          for (std::size_t i = 0; i < p.c_in(); ++i)
            for (std::size_t a = 0; a < kh; ++a)
              for (std::size_t b = 0; b < kw; ++b) {
                const long sy = static_cast<long>(y * p.stride + a) - pad_h;
                const long sx = static_cast<long>(xx * p.stride + b) - pad_w;
                if (sy < 0 || sx < 0 || sy >= static_cast<long>(x.h()) || sx >= static_cast<long>(x.w())) continue;
                s += p.weight.at(o, i, a, b) * x.at(n, i, sy, sx);
              }
          out.at(n, o, y, xx) = s;
        }
  return out;
}

ConvParams<double> random_conv(std::size_t co, std::size_t ci, std::size_t k, Padding pad, std::size_t stride,
                               std::mt19937_64& rng) {
  ConvParams<double> p;
  p.weight = random_tensor({co, ci, k, k}, rng);
  const auto b = random_tensor({1, 1, 1, co}, rng);
  p.bias.assign(b.data().begin(), b.data().end());
  p.padding = pad;
  p.stride = stride;
  return p;
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("layout is NCHW row-major") {
    Tensor4<float> t(2, 3, 4, 5);
    CHECK(t.size() == 120);
    CHECK(t.index(1, 2, 3, 4) == 119);
    CHECK(t.index(0, 1, 0, 0) == 20);
    t.at(1, 0, 2, 3) = 7.0f;
    CHECK(t.plane(1, 0)[2 * 5 + 3] == 7.0f);
  }

  TEST_CASE("constructor rejects mismatched data") {
    CHECK_THROWS_AS(Tensor4<float>(Shape4{1, 1, 2, 2}, std::vector<float>(3)), ShapeError);
  }

  TEST_CASE("slice and concat are inverse") {
    std::mt19937_64 rng(1);
    const auto t = random_tensor<float>({4, 2, 3, 3}, rng);
    const std::vector<Tensor4<float>> parts = {t.slice_batch(0, 1), t.slice_batch(1, 3)};
    CHECK(concat_batch<float>(parts) == t);
    CHECK_THROWS_AS(t.slice_batch(3, 2), ShapeError);
    const std::vector<Tensor4<float>> bad = {Tensor4<float>(1, 2, 3, 3), Tensor4<float>(1, 2, 3, 4)};
    CHECK_THROWS_AS(concat_batch<float>(bad), ShapeError);
  }

  TEST_CASE("region intersection") {
    const Region a{2, 3, 10, 10}, b{5, 0, 10, 6};
    CHECK(intersect(a, b) == Region{5, 3, 7, 3});
    CHECK(intersect(a, Region{20, 20, 1, 1}).empty());
  }

  TEST_CASE("finiteness and cast") {
    Tensor4<float> t(1, 1, 1, 2, 1.5f);
    CHECK(t.all_finite());
    CHECK(t.cast<double>().at(0, 0, 0, 1) == 1.5);
    t.at(0, 0, 0, 0) = std::nanf("");
    CHECK_FALSE(t.all_finite());
  }
}

TEST_SUITE("ops") {
  TEST_CASE("conv2d matches the direct loop oracle") {
    std::mt19937_64 rng(2);
    struct Case { std::size_t k; Padding pad; std::size_t stride; std::size_t h, w; };
    for (const Case c : {Case{3, Padding::valid, 1, 7, 9}, Case{3, Padding::same, 1, 6, 5}, Case{1, Padding::valid, 1, 4, 4},
                         Case{5, Padding::same, 2, 9, 8}, Case{3, Padding::valid, 2, 8, 7}}) {
      const auto x = random_tensor({2, 3, c.h, c.w}, rng);
      const auto p = random_conv(4, 3, c.k, c.pad, c.stride, rng);
      const auto got = conv2d(x, p);
      const auto want = conv_oracle(x, p);
      REQUIRE(got.shape() == want.shape());
      CHECK(fan::test::max_abs_diff(got, want) < 1e-12);
    }
  }

  TEST_CASE("conv2d rejects bad shapes") {
    std::mt19937_64 rng(3);
    const auto p = random_conv(2, 3, 3, Padding::valid, 1, rng);
    CHECK_THROWS_AS(conv2d(Tensor4<double>(1, 2, 5, 5), p), ShapeError);
    CHECK_THROWS_AS(conv2d(Tensor4<double>(1, 3, 2, 5), p), ShapeError);
    auto even = random_conv(2, 3, 2, Padding::same, 1, rng);
    CHECK_THROWS_AS(conv2d(Tensor4<double>(1, 3, 5, 5), even), ShapeError);
  }

  TEST_CASE("conv2d backward matches finite differences") {
    std::mt19937_64 rng(4);
    for (auto [pad, stride] : {std::pair{Padding::valid, std::size_t{1}}, std::pair{Padding::same, std::size_t{1}},
                               std::pair{Padding::same, std::size_t{2}}}) {
      const auto x = random_tensor({2, 2, 6, 5}, rng);
      auto p = random_conv(3, 2, 3, pad, stride, rng);
      const auto r = random_tensor(conv2d_output_shape(x.shape(), p), rng);
      const auto g = conv2d_backward(r, x, p);

      const auto gx = numeric_grad(x, [&](const Tensor4<double>& v) { return fan::test::dot(conv2d(v, p), r); });
      CHECK(fan::test::max_abs_diff(g.input, gx) < 1e-7);
      const auto gw = numeric_grad(p.weight, [&](const Tensor4<double>& v) {
        auto q = p;
        q.weight = v;
        return fan::test::dot(conv2d(x, q), r);
      });
      CHECK(fan::test::max_abs_diff(g.weight, gw) < 1e-7);
      for (std::size_t o = 0; o < p.c_out(); ++o) {
        double s = 0.0;
        for (std::size_t n = 0; n < r.n(); ++n)
          for (double v : r.plane(n, o)) s += v;
        CHECK(g.bias[o] == doctest::Approx(s).epsilon(1e-12));
      }

      ConvCache<double> cache;
      conv2d(x, p, cache);
      const auto g2 = conv2d_backward(r, cache);
      CHECK(g2.weight == g.weight);
      CHECK(g2.input == g.input);
    }
    CHECK_THROWS_AS(conv2d_backward(Tensor4<double>(1, 1, 1, 1), ConvCache<double>{}), std::logic_error);
  }

  TEST_CASE("batch statistics and standardize") {
    std::mt19937_64 rng(5);
    const auto y = random_tensor({3, 2, 4, 5}, rng, -2.0, 5.0);
    const auto st = batch_stats(y);
    for (std::size_t c = 0; c < 2; ++c) {
      double m = 0.0;
      for (std::size_t n = 0; n < 3; ++n)
        for (double v : y.plane(n, c)) m += v;
      m /= 60.0;
      double var = 0.0;
      for (std::size_t n = 0; n < 3; ++n)
        for (double v : y.plane(n, c)) var += (v - m) * (v - m);
      var /= 60.0;
      CHECK(st.mean[c] == doctest::Approx(m).epsilon(1e-12));
      CHECK(st.var[c] == doctest::Approx(var).epsilon(1e-12));
    }
    const auto xhat = standardize(y, st, 1e-5);
    const auto s2 = batch_stats(xhat);
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(std::abs(s2.mean[c]) < 1e-12);
      CHECK(s2.var[c] == doctest::Approx(st.var[c] / (st.var[c] + 1e-5)).epsilon(1e-10));
    }
  }

  TEST_CASE("standardize backward matches finite differences through the statistics") {
    std::mt19937_64 rng(6);
    const auto y = random_tensor({2, 3, 3, 4}, rng);
    const auto r = random_tensor(y.shape(), rng);
    const auto st = batch_stats(y);
    const auto xhat = standardize(y, st, 1e-5);
    const auto g = standardize_backward(r, xhat, st, 1e-5);
    const auto num = numeric_grad(y, [&](const Tensor4<double>& v) {
      return fan::test::dot(standardize(v, batch_stats(v), 1e-5), r);
    });
    CHECK(fan::test::max_abs_diff(g, num) < 1e-7);
  }

  TEST_CASE("nearest upsampling index rule") {
    std::mt19937_64 rng(7);
    const auto z = random_tensor({1, 2, 3, 4}, rng);
    const auto u = upsample(z, 7, 10);
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 10; ++j) CHECK(u.at(0, c, i, j) == z.at(0, c, i * 3 / 7, j * 4 / 10));
    const auto same = upsample(z, 3, 4);
    CHECK(same == z);
    const auto r = random_tensor(u.shape(), rng);
    // adjoint identity <up(z), r> = <z, up^T(r)>
    CHECK(fan::test::dot(u, r) == doctest::Approx(fan::test::dot(z, upsample_backward(r, z.shape()))).epsilon(1e-12));
  }

  TEST_CASE("sigmoid and relu") {
    Tensor4<double> x(Shape4{1, 1, 1, 5}, std::vector<double>{-800.0, -1.0, 0.0, 2.0, 800.0});
    const auto s = sigmoid(x);
    CHECK(s.at(0, 0, 0, 0) == 0.0);
    CHECK(s.at(0, 0, 0, 2) == 0.5);
    CHECK(s.at(0, 0, 0, 3) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));
    CHECK(s.at(0, 0, 0, 4) == 1.0);
    CHECK(s.all_finite());
    const auto rl = relu(x);
    CHECK(rl.at(0, 0, 0, 1) == 0.0);
    CHECK(rl.at(0, 0, 0, 3) == 2.0);

    std::mt19937_64 rng(8);
    const auto y = random_tensor({1, 2, 3, 3}, rng, -3.0, 3.0);
    const auto r = random_tensor(y.shape(), rng);
    const auto gs = sigmoid_backward(r, sigmoid(y));
    CHECK(fan::test::max_abs_diff(gs, numeric_grad(y, [&](const auto& v) { return fan::test::dot(sigmoid(v), r); })) < 1e-9);
    const auto gr = relu_backward(r, relu(y));
    CHECK(fan::test::max_abs_diff(gr, numeric_grad(y, [&](const auto& v) { return fan::test::dot(relu(v), r); })) < 1e-9);
  }

  TEST_CASE("max pooling routes the gradient to the first maximum") {
    Tensor4<double> x(Shape4{1, 1, 2, 4}, std::vector<double>{1, 5, 2, 2, 3, 0, 2, 1});
    const auto m = maxpool2(x);
    CHECK(m.shape() == Shape4{1, 1, 1, 2});
    CHECK(m.at(0, 0, 0, 0) == 5.0);
    CHECK(m.at(0, 0, 0, 1) == 2.0);
    const auto g = maxpool2_backward(Tensor4<double>(Shape4{1, 1, 1, 2}, std::vector<double>{10, 20}), x);
    CHECK(g.storage() == std::vector<double>{0, 10, 20, 0, 0, 0, 0, 0});
    CHECK_THROWS_AS(maxpool2(Tensor4<double>(1, 1, 3, 4)), ShapeError);
  }

  TEST_CASE("crop and its adjoint") {
    std::mt19937_64 rng(9);
    const auto x = random_tensor({2, 1, 5, 6}, rng);
    const auto c = crop(x, 1, 2, 3, 3);
    CHECK(c.at(1, 0, 0, 0) == x.at(1, 0, 1, 2));
    CHECK(c.at(0, 0, 2, 2) == x.at(0, 0, 3, 4));
    const auto r = random_tensor(c.shape(), rng);
    CHECK(fan::test::dot(c, r) == doctest::Approx(fan::test::dot(x, crop_backward(r, x.shape(), 1, 2))));
    CHECK_THROWS_AS(crop(x, 3, 0, 3, 3), ShapeError);
  }

  TEST_CASE("mse and its gradient") {
    std::mt19937_64 rng(10);
    const auto a = random_tensor({2, 3, 2, 2}, rng);
    const auto b = random_tensor({2, 3, 2, 2}, rng);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
    CHECK(mse(a, b) == doctest::Approx(s / 24.0).epsilon(1e-14));
    CHECK(fan::test::max_abs_diff(mse_backward(a, b), numeric_grad(a, [&](const auto& v) { return mse(v, b); })) < 1e-9);
    CHECK_THROWS_AS(mse(a, Tensor4<double>(1, 3, 2, 2)), ShapeError);
  }
}
