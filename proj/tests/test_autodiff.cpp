#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "spindiff/autodiff.hpp"
#include "spindiff/rng.hpp"

using namespace spindiff;

namespace {

// central differences on a double->double function
template <class F>
double fd(F f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace

TEST_CASE("arithmetic gradients match analytic values") {
  ad::Tape tape;
  ad::Value x = tape.leaf(3.0);
  ad::Value y = tape.leaf(-2.0);
  ad::Value f = (x * y + x / y) * 2.0 - y + 5.0;
  // f = 2xy + 2x/y - y + 5; df/dx = 2y + 2/y; df/dy = 2x - 2x/y^2 - 1
  tape.backward(f);
  REQUIRE(f.val() == Catch::Approx(2.0 * 3 * -2 + 2.0 * 3 / -2 + 2 + 5));
  REQUIRE(tape.grad(x) == Catch::Approx(2.0 * -2 + 2.0 / -2));
  REQUIRE(tape.grad(y) == Catch::Approx(2.0 * 3 - 2.0 * 3 / 4.0 - 1.0));
}

TEST_CASE("fan-out accumulates") {
  ad::Tape tape;
  ad::Value x = tape.leaf(1.7);
  ad::Value f = x * x * x;
  tape.backward(f);
  REQUIRE(tape.grad(x) == Catch::Approx(3.0 * 1.7 * 1.7).epsilon(1e-12));
}

TEST_CASE("unary op derivatives match finite differences") {
  auto check = [](auto make, auto plain, double x0) {
    ad::Tape tape;
    ad::Value x = tape.leaf(x0);
    ad::Value f = make(x);
    tape.backward(f);
    double want = fd(plain, x0);
    REQUIRE(tape.grad(x) == Catch::Approx(want).margin(1e-6));
  };
  check([](ad::Value v) { return tanh(v); }, [](double v) { return std::tanh(v); }, 0.4);
  check([](ad::Value v) { return exp(v); }, [](double v) { return std::exp(v); }, -0.3);
  check([](ad::Value v) { return log(v); }, [](double v) { return std::log(v); }, 2.5);
  check([](ad::Value v) { return sqrt(v); }, [](double v) { return std::sqrt(v); }, 1.9);
}

TEST_CASE("clamp passes gradient strictly inside and blocks outside") {
  ad::Tape tape;
  ad::Value a = tape.leaf(0.5);
  ad::Value b = tape.leaf(3.0);
  ad::Value fa = clamp(a, -1.0, 1.0) * 2.0;
  tape.backward(fa);
  REQUIRE(tape.grad(a) == 2.0);
  ad::Value fb = clamp(b, -1.0, 1.0) * 2.0;
  tape.backward(fb);
  REQUIRE(tape.grad(b) == 0.0);
  REQUIRE(fb.val() == 2.0);
}

TEST_CASE("relu kink uses zero gradient") {
  ad::Tape tape;
  ad::Value x = tape.leaf(0.0);
  ad::Value f = relu(x);
  tape.backward(f);
  REQUIRE(tape.grad(x) == 0.0);
  ad::Value y = tape.leaf(0.25);
  ad::Value g = relu(y);
  tape.backward(g);
  REQUIRE(tape.grad(y) == 1.0);
}

TEST_CASE("non-differentiable operations signal") {
  ad::Tape tape;
  ad::Value x = tape.leaf(-1.0);
  REQUIRE_THROWS_AS(log(x), std::domain_error);
  REQUIRE_THROWS_AS(sqrt(x), std::domain_error);
  ad::Value z = tape.leaf(0.0);
  ad::Value one = tape.leaf(1.0);
  REQUIRE_THROWS_AS(one / z, std::domain_error);
  REQUIRE_THROWS_AS(sqrt(z), std::domain_error);
}

TEST_CASE("random expressions agree with finite differences") {
  CounterRng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    double a0 = rng.uniform(-2.0, 2.0);
    double b0 = rng.uniform(0.5, 2.0);
    double c0 = rng.uniform(-1.0, 1.0);
    auto eval = [&](double a, double b, double c) {
      return std::tanh(a * b) + std::exp(c - a) / b + std::log(b) * c - (a - c) * (a - c);
    };
    ad::Tape tape;
    ad::Value a = tape.leaf(a0);
    ad::Value b = tape.leaf(b0);
    ad::Value c = tape.leaf(c0);
    ad::Value f = tanh(a * b) + exp(c - a) / b + log(b) * c - (a - c) * (a - c);
    tape.backward(f);
    REQUIRE(f.val() == Catch::Approx(eval(a0, b0, c0)).epsilon(1e-12));
    double ga = fd([&](double v) { return eval(v, b0, c0); }, a0);
    double gb = fd([&](double v) { return eval(a0, v, c0); }, b0);
    double gc = fd([&](double v) { return eval(a0, b0, v); }, c0);
    REQUIRE(tape.grad(a) == Catch::Approx(ga).margin(1e-5));
    REQUIRE(tape.grad(b) == Catch::Approx(gb).margin(1e-5));
    REQUIRE(tape.grad(c) == Catch::Approx(gc).margin(1e-5));
  }
}

TEST_CASE("tape reuse after clear") {
  ad::Tape tape;
  ad::Value x = tape.leaf(2.0);
  tape.backward(x * x);
  REQUIRE(tape.grad(x) == 4.0);
  tape.clear();
  ad::Value y = tape.leaf(5.0);
  ad::Value f = y * 3.0;
  tape.backward(f);
  REQUIRE(tape.grad(y) == 3.0);
  REQUIRE(tape.size() == 2);
}
