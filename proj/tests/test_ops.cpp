#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "spt/grad_check.hpp"
#include "spt/ops.hpp"

using namespace spt;

TEST_CASE("gelu matches its defining values") {
  Tape tape = Tape::inference();
  Tensor x = Tensor::from_data({4}, {0.0, -10.0, 10.0, 1.0});
  Tensor y = ops::gelu(tape, x);
  CHECK(y.at(0) == 0.0);
  CHECK(std::fabs(y.at(1)) < 1e-6);
  CHECK(y.at(2) == doctest::Approx(10.0).epsilon(1e-9));
  // x·Φ(x) at 1: Φ(1) = 0.841344746...
  CHECK(y.at(3) == doctest::Approx(0.8413447460685429).epsilon(1e-12));
}

TEST_CASE("gelu backward matches finite differences on 100 random points") {
  Rng rng(21);
  Tensor x = Tensor::randn({100}, rng, 2.0, true);
  auto fwd = [&](Tape& t) { return ops::sum(t, ops::gelu(t, x)); };
  CHECK(gradient_check(fwd, x) < 1e-6);
}

TEST_CASE("softmax_cross_entropy on uniform and saturated logits") {
  Tape tape = Tape::inference();
  const int V = 17;
  Tensor uniform = Tensor::full({3, V}, 0.25);
  Tensor loss = ops::softmax_cross_entropy(tape, uniform, {0, 5, 16});
  CHECK(loss.item() == doctest::Approx(std::log(V)).epsilon(1e-12));

  Tensor hot = Tensor::zeros({1, V});
  hot.data()[4] = 1000.0;
  Tensor loss2 = ops::softmax_cross_entropy(tape, hot, {4});
  CHECK(loss2.item() == doctest::Approx(0.0).epsilon(1e-9));

  CHECK_THROWS_AS(ops::softmax_cross_entropy(tape, uniform, {0, 5, V}),
                  std::out_of_range);
  CHECK_THROWS_AS(ops::softmax_cross_entropy(tape, uniform, {0, -1, 3}),
                  std::out_of_range);
}

TEST_CASE("cross-entropy gradient equals softmax minus one-hot") {
  Rng rng(23);
  const int B = 4, V = 9;
  Tensor logits = Tensor::randn({B, V}, rng, 1.0, true);
  std::vector<int> targets{1, 0, 8, 3};
  Tape tape;
  Tensor loss = ops::softmax_cross_entropy(tape, logits, targets);
  tape.backward(loss);

  for (int i = 0; i < B; ++i) {
    // softmax of the row
    double mx = -1e300, sum = 0;
    for (int j = 0; j < V; ++j) mx = std::max(mx, logits.at(i, j));
    std::vector<double> p(V);
    for (int j = 0; j < V; ++j) {
      p[static_cast<size_t>(j)] = std::exp(logits.at(i, j) - mx);
      sum += p[static_cast<size_t>(j)];
    }
    for (int j = 0; j < V; ++j) {
      const double expect =
          (p[static_cast<size_t>(j)] / sum -
           (j == targets[static_cast<size_t>(i)] ? 1.0 : 0.0)) /
          B;
      CHECK(logits.grad()[static_cast<size_t>(i) * V + j] ==
            doctest::Approx(expect).epsilon(1e-12));
    }
  }

  auto fwd = [&](Tape& t) {
    return ops::softmax_cross_entropy(t, logits, targets);
  };
  CHECK(gradient_check(fwd, logits) < 1e-6);
}

TEST_CASE("layer_norm handles constant rows and is identity on normalized input") {
  Tape tape = Tape::inference();
  Tensor x = Tensor::full({2, 4}, 3.75);
  Tensor gain = Tensor::full({4}, 2.0);
  Tensor bias = Tensor::from_data({4}, {0.5, -0.5, 1.0, 0.0});
  Tensor y = ops::layer_norm(tape, x, gain, bias);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(y.at(i, j) == doctest::Approx(bias.at(j)).epsilon(1e-12));

  // Rows already zero-mean unit-variance, gain 1, bias 0.
  Tensor z = Tensor::from_data({2, 2}, {-1.0, 1.0, 1.0, -1.0});
  Tensor ones = Tensor::full({2}, 1.0);
  Tensor zero = Tensor::zeros({2});
  Tensor out = ops::layer_norm(tape, z, ones, zero);
  for (int64_t i = 0; i < 4; ++i)
    CHECK(out.data()[i] == doctest::Approx(z.data()[i]).epsilon(1e-5));
}

TEST_CASE("layer_norm backward matches finite differences") {
  Rng rng(29);
  for (auto [m, d] : {std::pair{1, 3}, {4, 6}, {7, 5}}) {
    Tensor x = Tensor::randn({m, d}, rng, 1.3, true);
    Tensor g = Tensor::randn({d}, rng, 0.7, true);
    Tensor b = Tensor::randn({d}, rng, 0.7, true);
    Tensor probe = Tensor::randn({m, d}, rng, 1.0);
    auto fwd = [&](Tape& t) {
      return ops::sum(t, ops::mul(t, ops::layer_norm(t, x, g, b), probe));
    };
    CHECK(gradient_check(fwd, x) < 1e-5);
    CHECK(gradient_check(fwd, g) < 1e-5);
    CHECK(gradient_check(fwd, b) < 1e-5);
  }
}

TEST_CASE("embedding lookup gathers rows and scatter-adds gradients") {
  Rng rng(31);
  Tensor table = Tensor::randn({5, 3}, rng, 1.0, true);
  Tape tape;
  std::vector<int> ids{2, 2, 4};
  Tensor out = ops::embedding_lookup(tape, table, ids);
  for (int j = 0; j < 3; ++j) {
    CHECK(out.at(0, j) == table.at(2, j));
    CHECK(out.at(1, j) == table.at(2, j));
    CHECK(out.at(2, j) == table.at(4, j));
  }
  Tensor loss = ops::sum(tape, out);
  tape.backward(loss);
  // Row 2 used twice, row 4 once, others untouched.
  for (int j = 0; j < 3; ++j) {
    CHECK(table.grad()[2 * 3 + j] == 2.0);
    CHECK(table.grad()[4 * 3 + j] == 1.0);
    CHECK(table.grad()[0 * 3 + j] == 0.0);
  }
  CHECK_THROWS_AS(ops::embedding_lookup(tape, table, {5}), std::out_of_range);

  auto fwd = [&](Tape& t) {
    return ops::sum(t, ops::embedding_lookup(t, table, ids));
  };
  CHECK(gradient_check(fwd, table) < 1e-6);
}

TEST_CASE("structural ops route gradients correctly") {
  Rng rng(37);
  Tensor a = Tensor::randn({3, 4}, rng, 1.0, true);
  Tensor b = Tensor::randn({2, 4}, rng, 1.0, true);
  Tensor probe = Tensor::randn({5, 4}, rng, 1.0);
  auto fwd = [&](Tape& t) {
    return ops::sum(t, ops::mul(t, ops::concat_rows(t, a, b), probe));
  };
  CHECK(gradient_check(fwd, a) < 1e-6);
  CHECK(gradient_check(fwd, b) < 1e-6);

  Tensor wide = Tensor::randn({3, 6}, rng, 1.0, true);
  auto fwd2 = [&](Tape& t) {
    Tensor left = ops::slice_cols(t, wide, 0, 2);
    Tensor right = ops::slice_cols(t, wide, 2, 4);
    Tensor glued = ops::concat_cols(t, {right, left});
    return ops::sum(t, ops::mul(t, glued, ops::scale(t, glued, 0.5)));
  };
  CHECK(gradient_check(fwd2, wide) < 1e-6);

  Tape inf = Tape::inference();
  CHECK_THROWS_AS(ops::slice_cols(inf, wide, 5, 3), std::invalid_argument);
}

TEST_CASE("add_rowwise broadcasts bias over rows") {
  Rng rng(41);
  Tensor x = Tensor::randn({4, 3}, rng, 1.0, true);
  Tensor bias = Tensor::randn({3}, rng, 1.0, true);
  Tape tape = Tape::inference();
  Tensor y = ops::add_rowwise(tape, x, bias);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(y.at(i, j) == x.at(i, j) + bias.at(j));
  auto fwd = [&](Tape& t) {
    return ops::sum(t, ops::gelu(t, ops::add_rowwise(t, x, bias)));
  };
  CHECK(gradient_check(fwd, x) < 1e-6);
  CHECK(gradient_check(fwd, bias) < 1e-6);
}

TEST_CASE("mean_stack averages scalars and splits gradient evenly") {
  Rng rng(43);
  Tensor a = Tensor::scalar(2.0, true);
  Tensor b = Tensor::scalar(4.0, true);
  Tape tape;
  Tensor m = ops::mean_stack(tape, {a, b});
  CHECK(m.item() == 3.0);
  tape.backward(m);
  CHECK(a.grad()[0] == 0.5);
  CHECK(b.grad()[0] == 0.5);
}

TEST_CASE("softmax_rows is a row distribution; causal rejects bad shapes") {
  Rng rng(47);
  Tensor x = Tensor::randn({4, 6}, rng, 2.0, true);
  Tape tape = Tape::inference();
  Tensor p = ops::softmax_rows(tape, x);
  for (int i = 0; i < 4; ++i) {
    double sum = 0;
    for (int j = 0; j < 6; ++j) sum += p.at(i, j);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(ops::softmax_rows(tape, x, /*causal=*/true),
                  std::invalid_argument);

  Tensor sq = Tensor::randn({5, 5}, rng, 1.0, true);
  Tensor probe = Tensor::randn({5, 5}, rng, 1.0);
  auto fwd = [&](Tape& t) {
    return ops::sum(t, ops::mul(t, ops::softmax_rows(t, sq, true), probe));
  };
  CHECK(gradient_check(fwd, sq) < 1e-5);
}
