#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "spt/grad_check.hpp"
#include "spt/ops.hpp"

using namespace spt;

TEST_CASE("finite differences recover analytic derivatives") {
  // f(x) = sum(x^2) -> 2x
  Tensor x = Tensor::from_data({2}, {1.0, 2.0});
  auto f_sq = [](const Tensor& t) {
    double acc = 0;
    for (int64_t i = 0; i < t.numel(); ++i) acc += t.data()[i] * t.data()[i];
    return acc;
  };
  Tensor g = finite_difference_grad(f_sq, x);
  CHECK(g.at(0) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(g.at(1) == doctest::Approx(4.0).epsilon(1e-6));

  // f(x) = sum(x) -> all ones
  Rng rng(5);
  Tensor y = Tensor::randn({3, 4}, rng, 2.0);
  auto f_sum = [](const Tensor& t) {
    double acc = 0;
    for (int64_t i = 0; i < t.numel(); ++i) acc += t.data()[i];
    return acc;
  };
  Tensor gs = finite_difference_grad(f_sum, y);
  for (int64_t i = 0; i < gs.numel(); ++i)
    CHECK(gs.data()[i] == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("finite differences reject a non-finite function") {
  Tensor x = Tensor::from_data({1}, {0.0});
  auto f = [](const Tensor&) { return std::nan(""); };
  CHECK_THROWS_AS(finite_difference_grad(f, x), std::domain_error);
}

TEST_CASE("matmul forward examples") {
  Tape tape = Tape::inference();
  Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor col = Tensor::from_data({2, 1}, {3, 4});
  Tensor r = ops::matmul(tape, eye, col);
  CHECK(r.at(0, 0) == 3.0);
  CHECK(r.at(1, 0) == 4.0);

  Tensor row = Tensor::from_data({1, 2}, {1, 2});
  Tensor r2 = ops::matmul(tape, row, col);
  CHECK(r2.numel() == 1);
  CHECK(r2.item() == 11.0);

  Tensor bad = Tensor::from_data({3, 1}, {1, 2, 3});
  CHECK_THROWS_WITH_AS(ops::matmul(tape, eye, bad),
                       "matmul: inner dimensions disagree: [2 x 2] vs [3 x 1]",
                       std::invalid_argument);
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(7);
  Tensor a = Tensor::randn({3, 4}, rng, 1.0, true);
  Tensor b = Tensor::randn({4, 2}, rng, 1.0, true);
  auto fwd = [&](Tape& t) { return ops::sum(t, ops::matmul(t, a, b)); };
  CHECK(gradient_check(fwd, a) < 1e-6);
  CHECK(gradient_check(fwd, b) < 1e-6);
}

TEST_CASE("tape accumulates gradients across reuse of the same tensor") {
  Rng rng(11);
  Tensor x = Tensor::randn({5}, rng, 1.0, true);
  Tensor a = Tensor::randn({5}, rng, 1.0);
  Tensor b = Tensor::randn({5}, rng, 1.0);
  // loss = sum(x*a) + sum(x*b) + sum(x*x): three paths through x
  auto fwd = [&](Tape& t) {
    Tensor p1 = ops::sum(t, ops::mul(t, x, a));
    Tensor p2 = ops::sum(t, ops::mul(t, x, b));
    Tensor p3 = ops::sum(t, ops::mul(t, x, x));
    return ops::add(t, ops::add(t, p1, p2), p3);
  };
  CHECK(gradient_check(fwd, x) < 1e-6);

  // And the analytic value: a + b + 2x.
  Tape tape;
  Tensor loss = fwd(tape);
  tape.backward(loss);
  for (int i = 0; i < 5; ++i)
    CHECK(x.grad()[i] ==
          doctest::Approx(a.at(i) + b.at(i) + 2 * x.at(i)).epsilon(1e-12));
}

TEST_CASE("backward requires a scalar") {
  Tape tape;
  Tensor x = Tensor::zeros({2, 2}, true);
  CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
}

TEST_CASE("frozen tensors receive no gradient buffer") {
  Rng rng(13);
  Tensor frozen = Tensor::randn({3, 3}, rng, 1.0, false);
  Tensor live = Tensor::randn({3, 3}, rng, 1.0, true);
  Tape tape;
  Tensor loss = ops::sum(tape, ops::matmul(tape, frozen, live));
  tape.backward(loss);
  CHECK(!frozen.has_grad());
  CHECK(live.has_grad());
}

TEST_CASE("same seed produces bit-identical forward values") {
  auto run_once = [](uint64_t seed) {
    Rng rng(seed);
    Tensor w1 = Tensor::randn({8, 8}, rng, 0.3, true);
    Tensor w2 = Tensor::randn({8, 4}, rng, 0.3, true);
    Tensor x = Tensor::randn({2, 8}, rng, 1.0);
    Tape tape;
    Tensor h = ops::gelu(tape, ops::matmul(tape, x, w1));
    Tensor out = ops::matmul(tape, h, w2);
    return out.vec();
  };
  CHECK(run_once(99) == run_once(99));
}

TEST_CASE("reshape round-trips exactly and validates sizes") {
  Rng rng(17);
  Tensor v = Tensor::randn({320}, rng, 1.0);
  Tape tape = Tape::inference();
  Tensor m = ops::reshape(tape, v, {20, 16});
  Tensor back = ops::reshape(tape, m, {320});
  CHECK(back.vec() == v.vec());
  CHECK_THROWS_AS(ops::reshape(tape, v, {20, 17}), std::invalid_argument);
}

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::zeros({0, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::zeros({-1}), std::invalid_argument);
  Tensor t = Tensor::zeros({2, 3});
  CHECK(t.numel() == 6);
  CHECK(shape_str(t.shape()) == "[2 x 3]");
}

TEST_CASE("oracle self-consistency on a two-layer MLP loss") {
  Rng rng(19);
  Tensor w1 = Tensor::randn({6, 8}, rng, 0.5, true);
  Tensor b1 = Tensor::randn({8}, rng, 0.1, true);
  Tensor w2 = Tensor::randn({8, 3}, rng, 0.5, true);
  Tensor x = Tensor::randn({4, 6}, rng, 1.0);
  std::vector<int> targets{0, 2, 1, 2};
  auto fwd = [&](Tape& t) {
    Tensor h = ops::gelu(t, ops::add_rowwise(t, ops::matmul(t, x, w1), b1));
    Tensor logits = ops::matmul(t, h, w2);
    return ops::softmax_cross_entropy(t, logits, targets);
  };
  CHECK(gradient_check(fwd, w1) < 1e-5);
  CHECK(gradient_check(fwd, b1) < 1e-5);
  CHECK(gradient_check(fwd, w2) < 1e-5);
}
