#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "spt/generators.hpp"
#include "spt/grad_check.hpp"
#include "spt/trainer.hpp"

using namespace spt;

namespace {

// Test-only singular value oracle: Jacobi eigenvalue iteration on WᵀW.
std::vector<double> singular_values(const Tensor& w) {
  const int rows = w.dim(0), cols = w.dim(1);
  std::vector<double> g(static_cast<size_t>(cols) * cols, 0.0);
  for (int i = 0; i < cols; ++i)
    for (int j = 0; j < cols; ++j) {
      double acc = 0;
      for (int r = 0; r < rows; ++r) acc += w.at(r, i) * w.at(r, j);
      g[static_cast<size_t>(i) * cols + j] = acc;
    }
  auto at = [&](int i, int j) -> double& {
    return g[static_cast<size_t>(i) * cols + j];
  };
  for (int sweep = 0; sweep < 60; ++sweep) {
    double off = 0;
    for (int i = 0; i < cols; ++i)
      for (int j = i + 1; j < cols; ++j) off += at(i, j) * at(i, j);
    if (off < 1e-30) break;
    for (int p = 0; p < cols; ++p) {
      for (int q = p + 1; q < cols; ++q) {
        if (std::fabs(at(p, q)) < 1e-300) continue;
        const double theta = (at(q, q) - at(p, p)) / (2 * at(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1.0 / std::sqrt(t * t + 1), s = t * c;
        for (int k = 0; k < cols; ++k) {
          const double gkp = at(k, p), gkq = at(k, q);
          at(k, p) = c * gkp - s * gkq;
          at(k, q) = s * gkp + c * gkq;
        }
        for (int k = 0; k < cols; ++k) {
          const double gpk = at(p, k), gqk = at(q, k);
          at(p, k) = c * gpk - s * gqk;
          at(q, k) = s * gpk + c * gqk;
        }
      }
    }
  }
  std::vector<double> sv(static_cast<size_t>(cols));
  for (int i = 0; i < cols; ++i) sv[static_cast<size_t>(i)] = std::sqrt(std::max(0.0, at(i, i)));
  std::sort(sv.rbegin(), sv.rend());
  return sv;
}

}  // namespace

TEST_CASE("matricize is row-major and validates length") {
  Tape tape = Tape::inference();
  Tensor v = Tensor::from_data({6}, {1, 2, 3, 4, 5, 6});
  Tensor m = matricize(tape, v, {2, 3});
  CHECK(m.shape() == Shape{2, 3});
  CHECK(m.at(0, 0) == 1);
  CHECK(m.at(0, 2) == 3);
  CHECK(m.at(1, 0) == 4);
  CHECK(m.at(1, 2) == 6);

  Tensor one = Tensor::from_data({1}, {7});
  Tensor m1 = matricize(tape, one, {1, 1});
  CHECK(m1.at(0, 0) == 7);

  CHECK_THROWS_AS(matricize(tape, v, {2, 4}), std::invalid_argument);

  // Round trip at the paper scale n=20, d=16.
  Rng rng(51);
  Tensor big = Tensor::randn({320}, rng, 1.0);
  Tensor mat = matricize(tape, big, {20, 16});
  Tensor back = ops::reshape(tape, mat, {320});
  CHECK(back.vec() == big.vec());
}

TEST_CASE("linear generator with zero weight returns its bias as the prompt") {
  Rng rng(53);
  const PromptShape shape{3, 4};
  LinearGenerator gen(shape, 5, rng);
  Tensor target = Tensor::randn({3, 4}, rng, 1.0);
  std::fill(gen.weight().vec().begin(), gen.weight().vec().end(), 0.0);
  std::copy(target.data(), target.data() + target.numel(),
            gen.bias().data());
  TaskEmbedding e = make_task_embedding("t", 5, rng);
  Tape tape = Tape::inference();
  Tensor r = gen.generate(tape, e.e);
  CHECK(r.vec() == target.vec());
}

TEST_CASE("full-rank lowrank generator reproduces the linear generator") {
  Rng rng(59);
  const PromptShape shape{4, 5};  // nd = 20
  const int k = 6;
  LinearGenerator linear(shape, k, rng);
  LowRankGenerator lowrank(shape, k, k, rng);  // r = k = min(nd, k)
  // C = W, F = identity, b matching.
  std::copy(linear.weight().data(),
            linear.weight().data() + linear.weight().numel(),
            lowrank.left().data());
  std::fill(lowrank.right().vec().begin(), lowrank.right().vec().end(), 0.0);
  for (int i = 0; i < k; ++i)
    lowrank.right().data()[static_cast<int64_t>(i) * k + i] = 1.0;
  std::copy(linear.bias().data(), linear.bias().data() + linear.bias().numel(),
            lowrank.bias().data());

  TaskEmbedding e = make_task_embedding("t", k, rng);
  Tape tape = Tape::inference();
  Tensor r1 = linear.generate(tape, e.e);
  Tensor r2 = lowrank.generate(tape, e.e);
  CHECK(max_rel_diff(r1, r2) < 1e-12);
}

TEST_CASE("mlp generator gradient w.r.t. the task embedding") {
  Rng rng(61);
  MLPGenerator gen({4, 8}, 16, 32, rng);
  TaskEmbedding e = make_task_embedding("t", 16, rng);
  Tensor probe = Tensor::randn({4, 8}, rng, 1.0);
  auto fwd = [&](Tape& t) {
    return ops::sum(t, ops::mul(t, gen.generate(t, e.e), probe));
  };
  CHECK(gradient_check(fwd, e.e) < 1e-5);
}

TEST_CASE("every generator output is exactly (n, d) and differentiable") {
  Rng rng(67);
  for (auto [n, d, k] : {std::tuple{1, 4, 3}, {5, 8, 6}, {2, 16, 4}}) {
    const PromptShape shape{n, d};
    Tensor probe = Tensor::randn({n, d}, rng, 1.0);
    for (const char* kind : {"direct", "linear", "lowrank", "mlp"}) {
      auto gen = make_generator(kind, shape, k, 2, 0, rng);
      TaskEmbedding e = make_task_embedding("t", k, rng);
      Tape tape;
      Tensor r = gen->generate(tape, e.e);
      CHECK(r.shape() == Shape{n, d});
      auto fwd = [&](Tape& t) {
        return ops::sum(t, ops::mul(t, gen->generate(t, e.e), probe));
      };
      for (const auto& [name, param] : gen->parameters()) {
        CHECK_MESSAGE(gradient_check(fwd, param) < 1e-5,
                      kind << "/" << name << " at n=" << n);
      }
    }
  }
}

TEST_CASE("generator embedding width is validated") {
  Rng rng(71);
  LinearGenerator gen({2, 3}, 4, rng);
  TaskEmbedding wrong = make_task_embedding("t", 5, rng);
  Tape tape = Tape::inference();
  CHECK_THROWS_AS(gen.generate(tape, wrong.e), std::invalid_argument);

  DirectGenerator direct({2, 3}, rng);
  CHECK_NOTHROW(direct.generate(tape, wrong.e));  // ignores its input
  CHECK_NOTHROW(direct.generate(tape, Tensor()));
}

TEST_CASE("lowrank effective matrix has numerical rank at most r") {
  Rng rng(73);
  for (auto [n, d, k, r] : {std::tuple{5, 8, 12, 3}, {4, 4, 10, 2}}) {
    LowRankGenerator gen({n, d}, k, r, rng);
    // Effective W = C·F
    Tape tape = Tape::inference();
    Tensor w = ops::matmul(tape, gen.left(), gen.right());
    const auto sv = singular_values(w);
    REQUIRE(static_cast<int>(sv.size()) == k);
    for (int i = r; i < k; ++i) CHECK(sv[static_cast<size_t>(i)] < 1e-8);
    CHECK(sv[0] > 0.0);
  }
}

TEST_CASE("parameter counts match the closed-form formulas") {
  Rng rng(79);
  for (auto [n, d, k, r, h] :
       {std::tuple{20, 16, 64, 8, 64}, {1, 1, 1, 1, 1}, {8, 16, 16, 4, 64},
        {5, 7, 11, 3, 13}}) {
    const PromptShape shape{n, d};
    const int64_t nd = static_cast<int64_t>(n) * d;
    DirectGenerator direct(shape, rng);
    CHECK(parameter_count(direct) == nd);
    LinearGenerator linear(shape, k, rng);
    CHECK(parameter_count(linear) == nd * k + nd);
    LowRankGenerator lowrank(shape, k, r, rng);
    CHECK(parameter_count(lowrank) == nd * r + static_cast<int64_t>(r) * k + nd);
    MLPGenerator mlp(shape, k, h, rng);
    CHECK(parameter_count(mlp) ==
          static_cast<int64_t>(h) * k + h + nd * h + nd);
  }
  // The paper-scale spot values: n=20, d=16, k=64, r=8.
  DirectGenerator direct({20, 16}, rng);
  CHECK(parameter_count(direct) == 320);
  LinearGenerator linear({20, 16}, 64, rng);
  CHECK(parameter_count(linear) == 20800);
  LowRankGenerator lowrank({20, 16}, 64, 8, rng);
  CHECK(parameter_count(lowrank) == 3392);
}

TEST_CASE("reduce_to_standard produces the k=1 special case") {
  Rng rng(83);
  const PromptShape shape{3, 5};
  auto [gen, e] = reduce_to_standard(shape, rng);
  CHECK(gen->embed_dim() == 1);
  CHECK(e.e.numel() == 1);
  CHECK(e.e.at(0) == 1.0);
  // 2·nd generator parameters plus the scalar embedding.
  CHECK(parameter_count(*gen) == 2 * shape.flat());
  CHECK(parameter_count(*gen) + e.e.numel() == 2 * shape.flat() + 1);

  // With b = 0 and e = [1] the prompt is the matricized W column.
  std::fill(gen->bias().vec().begin(), gen->bias().vec().end(), 0.0);
  Tape tape = Tape::inference();
  Tensor r = gen->generate(tape, e.e);
  for (int i = 0; i < shape.n; ++i)
    for (int j = 0; j < shape.d; ++j)
      CHECK(r.at(i, j) == gen->weight().at(i * shape.d + j, 0));
}

TEST_CASE("reduced generator walks the same trajectory as direct prompt tuning") {
  Rng rng(89);
  const PromptShape shape{2, 3};
  DirectGenerator direct(shape, rng);
  auto [reduced, e] = reduce_to_standard(shape, rng);
  // Matched initial prompts: W = 0, b = flatten(direct's prompt).
  std::fill(reduced->weight().vec().begin(), reduced->weight().vec().end(), 0.0);
  std::copy(direct.prompt().data(),
            direct.prompt().data() + direct.prompt().numel(),
            reduced->bias().data());
  // Only b updates; W and e stay frozen.
  reduced->weight().set_requires_grad(false);
  e.e.set_requires_grad(false);

  Tensor target = Tensor::randn({2, 3}, rng, 1.0);
  const double lr = 0.2;
  for (int step = 0; step < 10; ++step) {
    auto loss_of = [&](Tape& t, const Tensor& r) {
      Tensor diff = ops::add(t, r, ops::scale(t, target, -1.0));
      return ops::sum(t, ops::mul(t, diff, diff));
    };
    Tape t1;
    Tensor r1 = direct.generate(t1, Tensor());
    t1.backward(loss_of(t1, r1));
    Tape t2;
    Tensor r2 = reduced->generate(t2, e.e);
    t2.backward(loss_of(t2, r2));

    CHECK(r1.vec() == r2.vec());  // identical prompts, bit for bit

    auto p1 = direct.parameters();
    auto p2 = reduced->parameters();
    sgd_step(p1, lr);
    sgd_step(p2, lr);
    for (auto& [name, t] : p1) t.drop_grad();
    for (auto& [name, t] : p2) t.drop_grad();
  }
}
