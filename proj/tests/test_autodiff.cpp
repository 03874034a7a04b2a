#include <doctest.h>

#include "baris/grad_suite.hpp"

using namespace baris;

TEST_CASE("backward accumulates through branching graphs") {
  // y = sum(x*x + x) via two uses of x: dy/dx = 2x + 1
  Tape<double> tape;
  Tensor<double> x0({3}, {1.0, -2.0, 0.5});
  Var<double> x = make_param(x0);
  Var<double> y = sum(tape, add(tape, hadamard(tape, x, x), x));
  tape.backward(y);
  for (int64_t i = 0; i < 3; ++i)
    CHECK((*x.grad)[i] == doctest::Approx(2.0 * x0[i] + 1.0).epsilon(1e-12));
}

TEST_CASE("backward twice on one tape is an error") {
  Tape<double> tape;
  Var<double> x = make_param(Tensor<double>({2}, {1.0, 2.0}));
  Var<double> y = sum(tape, x);
  tape.backward(y);
  CHECK_THROWS_AS(tape.backward(y), std::runtime_error);
}

TEST_CASE("backward requires a scalar tracked loss") {
  Tape<double> tape;
  Var<double> x = make_param(Tensor<double>({2}, {1.0, 2.0}));
  Var<double> y = scale(tape, x, 2.0);
  CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);  // not scalar
  Var<double> c = make_constant(Tensor<double>({1}, {3.0}));
  CHECK_THROWS_AS(tape.backward(c), std::runtime_error);  // detached
}

TEST_CASE("frozen leaves receive no gradient and record no backward work") {
  Tape<double> tape;
  Var<double> frozen = make_constant(Tensor<double>({2}, {1.0, 2.0}));
  Var<double> live = make_param(Tensor<double>({2}, {3.0, 4.0}));
  Var<double> y = sum(tape, hadamard(tape, frozen, live));
  tape.backward(y);
  CHECK(frozen.grad == nullptr);
  CHECK((*live.grad)[0] == 1.0);
  CHECK((*live.grad)[1] == 2.0);
}

TEST_CASE("a graph of constants records nothing") {
  Tape<double> tape;
  Var<double> a = make_constant(Tensor<double>({2, 2}, {1, 2, 3, 4}));
  Var<double> y = relu(tape, add(tape, a, a));
  CHECK(tape.size() == 0);
  CHECK_FALSE(y.tracked());
}

TEST_CASE("zero_grad clears accumulated gradients") {
  Tape<double> tape;
  Var<double> x = make_param(Tensor<double>({2}, {1.0, 1.0}));
  Var<double> y = sum(tape, x);
  tape.backward(y);
  CHECK((*x.grad)[0] == 1.0);
  x.zero_grad();
  CHECK((*x.grad)[0] == 0.0);
}

TEST_CASE("gradient suite passes over 20 seeds") {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    auto cases = gradsuite::tensor_suite(seed);
    for (const auto& c : cases) {
      INFO(c.name << " seed " << seed << " err " << c.err);
      CHECK(c.err < c.threshold);
    }
  }
}

TEST_CASE("module gradient suites pass") {
  for (const char* module : {"decoder", "era", "bace"}) {
    auto cases = gradsuite::run_suite(module, 3);
    REQUIRE(!cases.empty());
    for (const auto& c : cases) {
      INFO(c.module << "/" << c.name << " err " << c.err);
      CHECK(c.err < c.threshold);
    }
  }
}
