#include "doctest.h"
#include "fan/adam.hpp"
#include "fan/tape.hpp"
#include "test_util.hpp"

using namespace fan;

TEST_SUITE("tape") {
  TEST_CASE("backward replays primitives in reverse order") {
    std::mt19937_64 rng(1);
    GradTape<double> tape;
    ConvParams<double> p;
    p.weight = fan::test::random_tensor({2, 2, 1, 1}, rng);
    p.bias = {0.1, -0.2};
    auto grads = zero_grads_like(p);
    const auto x = tape.leaf(fan::test::random_tensor({1, 2, 3, 3}, rng));
    auto h = tape_conv2d(tape, x, p, &grads);
    h = tape_relu(tape, h);
    h = tape_sigmoid(tape, h);
    const auto loss = tape_mse(tape, h, Tensor4<double>(1, 2, 3, 3));
    tape.backward(loss);
    const std::vector<std::string> fwd = tape.forward_log();
    std::vector<std::string> rev(fwd.rbegin(), fwd.rend());
    CHECK(fwd.size() == 4);
    CHECK(tape.backward_log() == rev);
    CHECK_FALSE(tape.grad(x).empty());
    CHECK_THROWS_AS(tape.backward(loss), std::logic_error);
  }

  TEST_CASE("chain gradient equals finite differences") {
    std::mt19937_64 rng(2);
    ConvParams<double> p;
    p.weight = fan::test::random_tensor({3, 2, 3, 3}, rng);
    p.bias = {0.1, 0.0, -0.1};
    p.padding = Padding::same;
    const auto x0 = fan::test::random_tensor({2, 2, 4, 4}, rng);
    const auto target = fan::test::random_tensor({2, 3, 4, 4}, rng, 0.0, 1.0);
    auto run = [&](const Tensor4<double>& x, ConvGrads<double>* g, Tensor4<double>* gx) {
      GradTape<double> tape;
      const auto in = tape.leaf(x);
      auto h = tape_sigmoid(tape, tape_conv2d(tape, in, p, g));
      const auto l = tape_mse(tape, h, target);
      const double v = tape.value(l).at(0, 0, 0, 0);
      if (g) {
        tape.backward(l);
        *gx = tape.grad(in);
      }
      return v;
    };
    auto g = zero_grads_like(p);
    Tensor4<double> gx;
    run(x0, &g, &gx);
    const auto num = fan::test::numeric_grad(x0, [&](const Tensor4<double>& v) { return run(v, nullptr, nullptr); });
    CHECK(fan::test::max_abs_diff(gx, num) < 1e-9);
    const auto numw = fan::test::numeric_grad(p.weight, [&](const Tensor4<double>& w) {
      const auto keep = p.weight;
      p.weight = w;
      const double v = run(x0, nullptr, nullptr);
      p.weight = keep;
      return v;
    });
    CHECK(fan::test::max_abs_diff(g.weight, numw) < 1e-9);
  }

  TEST_CASE("non-scalar target is rejected") {
    GradTape<float> tape;
    const auto x = tape.leaf(Tensor4<float>(1, 1, 2, 2));
    CHECK_THROWS_AS(tape.backward(x), ShapeError);
  }

  TEST_CASE("constants receive no gradient") {
    GradTape<double> tape;
    const auto c = tape.constant(Tensor4<double>(1, 1, 1, 1, 2.0));
    const auto l = tape_mse(tape, tape_relu(tape, c), Tensor4<double>(1, 1, 1, 1));
    tape.backward(l);
    CHECK(tape.grad(c).empty());
    CHECK_FALSE(tape.requires_grad(c));
  }
}

TEST_SUITE("adam") {
  TEST_CASE("two steps match the bias-corrected update by hand") {
    std::vector<double> x = {1.0, -2.0};
    std::vector<double> g(2);
    const std::vector<ParamSlot<double>> slots = {{"x", std::span<double>(x), std::span<const double>(g)}};
    AdamState<double> state;
    const AdamConfig cfg{0.1, 0.9, 0.999, 1e-8};

    g = {0.5, -4.0};
    adam_step<double>(slots, state, cfg);
    // step 1: mhat = g, vhat = g^2, so the move is lr * sign(g) up to eps
    CHECK(x[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));
    CHECK(x[1] == doctest::Approx(-2.0 + 0.1 * 4.0 / (4.0 + 1e-8)).epsilon(1e-14));

    g = {-0.2, 1.0};
    adam_step<double>(slots, state, cfg);
    const double m0 = 0.9 * 0.05 + 0.1 * -0.2, v0 = 0.999 * 0.00025 + 0.001 * 0.04;
    const double m1 = 0.9 * -0.4 + 0.1 * 1.0, v1 = 0.999 * 0.016 + 0.001 * 1.0;
    const double c1 = 1 - 0.81, c2 = 1 - 0.999 * 0.999;
    const double x0 = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8) - 0.1 * (m0 / c1) / (std::sqrt(v0 / c2) + 1e-8);
    const double x1 = -2.0 + 0.1 * 4.0 / (4.0 + 1e-8) - 0.1 * (m1 / c1) / (std::sqrt(v1 / c2) + 1e-8);
    CHECK(x[0] == doctest::Approx(x0).epsilon(1e-12));
    CHECK(x[1] == doctest::Approx(x1).epsilon(1e-12));
    CHECK(state.step == 2);
  }

  TEST_CASE("converges on a quadratic") {
    std::vector<float> x = {0.0f, 3.0f, -1.0f};
    const std::vector<float> c = {1.5f, -2.0f, 0.25f};
    std::vector<float> g(3);
    const std::vector<ParamSlot<float>> slots = {{"x", std::span<float>(x), std::span<const float>(g)}};
    AdamState<float> state;
    for (int s = 0; s < 500; ++s) {
      for (int i = 0; i < 3; ++i) g[i] = 2.0f * (x[i] - c[i]);
      adam_step<float>(slots, state, AdamConfig{0.05, 0.9, 0.999, 1e-8});
    }
    for (int i = 0; i < 3; ++i) CHECK(x[i] == doctest::Approx(c[i]).epsilon(0.02));
  }

  TEST_CASE("non-finite gradient leaves parameters and state untouched") {
    std::vector<float> a = {1.0f}, b = {2.0f};
    std::vector<float> ga = {0.1f}, gb = {std::numeric_limits<float>::infinity()};
    const std::vector<ParamSlot<float>> slots = {{"a", std::span<float>(a), std::span<const float>(ga)},
                                                 {"b", std::span<float>(b), std::span<const float>(gb)}};
    AdamState<float> state;
    CHECK_THROWS_AS(adam_step<float>(slots, state, AdamConfig{}), NonFiniteError);
    CHECK(a[0] == 1.0f);
    CHECK(b[0] == 2.0f);
    CHECK(state.step == 0);
  }
}
