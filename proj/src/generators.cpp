#include "spt/generators.hpp"

#include <stdexcept>

#include "spt/errors.hpp"

namespace spt {

namespace {
constexpr double kInitStd = 0.02;
}

TaskEmbedding make_task_embedding(std::string task_id, int k, Rng& rng) {
  return TaskEmbedding{std::move(task_id),
                       Tensor::randn({k}, rng, kInitStd, true)};
}

Tensor matricize(Tape& tape, const Tensor& v, PromptShape shape) {
  if (v.ndim() != 1 || v.numel() != shape.flat())
    throw std::invalid_argument(
        "matricize: vector " + shape_str(v.shape()) + " does not fill " +
        std::to_string(shape.n) + " x " + std::to_string(shape.d));
  return ops::reshape(tape, v, {shape.n, shape.d});
}

void PromptGenerator::check_embedding(const Tensor& e) const {
  const int k = embed_dim();
  if (k < 0) return;
  if (!e.defined() || e.ndim() != 1 || e.dim(0) != k)
    throw std::invalid_argument(
        kind() + " generator expects a task embedding of dimension " +
        std::to_string(k) +
        (e.defined() ? ", got " + shape_str(e.shape()) : ", got none"));
}

int64_t parameter_count(const PromptGenerator& g) {
  int64_t total = 0;
  for (const auto& [name, t] : g.parameters()) total += t.numel();
  return total;
}

DirectGenerator::DirectGenerator(PromptShape shape, Rng& rng)
    : PromptGenerator(shape),
      prompt_(Tensor::randn({shape.n, shape.d}, rng, kInitStd, true)) {}

Tensor DirectGenerator::generate(Tape&, const Tensor&) const {
  return prompt_;
}

std::vector<NamedTensor> DirectGenerator::parameters() const {
  return {{"prompt", prompt_}};
}

LinearGenerator::LinearGenerator(PromptShape shape, int k, Rng& rng)
    : PromptGenerator(shape),
      k_(k),
      w_(Tensor::randn({static_cast<int>(shape.flat()), k}, rng, kInitStd,
                       true)),
      b_(Tensor::zeros({static_cast<int>(shape.flat())}, true)) {}

Tensor LinearGenerator::generate(Tape& tape, const Tensor& e) const {
  check_embedding(e);
  Tensor e_col = ops::reshape(tape, e, {k_, 1});
  Tensor v = ops::reshape(tape, ops::matmul(tape, w_, e_col),
                          {static_cast<int>(shape_.flat())});
  return matricize(tape, ops::add(tape, v, b_), shape_);
}

std::vector<NamedTensor> LinearGenerator::parameters() const {
  return {{"W", w_}, {"b", b_}};
}

LowRankGenerator::LowRankGenerator(PromptShape shape, int k, int rank,
                                   Rng& rng)
    : PromptGenerator(shape), k_(k), rank_(rank) {
  if (rank < 1)
    throw ConfigError("low-rank generator needs rank >= 1, got " +
                      std::to_string(rank));
  c_ = Tensor::randn({static_cast<int>(shape.flat()), rank}, rng, kInitStd,
                     true);
  f_ = Tensor::randn({rank, k}, rng, kInitStd, true);
  b_ = Tensor::zeros({static_cast<int>(shape.flat())}, true);
}

Tensor LowRankGenerator::generate(Tape& tape, const Tensor& e) const {
  check_embedding(e);
  Tensor e_col = ops::reshape(tape, e, {k_, 1});
  Tensor fe = ops::matmul(tape, f_, e_col);  // [r, 1]
  Tensor v = ops::reshape(tape, ops::matmul(tape, c_, fe),
                          {static_cast<int>(shape_.flat())});
  return matricize(tape, ops::add(tape, v, b_), shape_);
}

std::vector<NamedTensor> LowRankGenerator::parameters() const {
  return {{"C", c_}, {"F", f_}, {"b", b_}};
}

MLPGenerator::MLPGenerator(PromptShape shape, int k, int hidden, Rng& rng)
    : PromptGenerator(shape), k_(k), hidden_(hidden) {
  if (hidden < 1)
    throw ConfigError("mlp generator needs hidden >= 1, got " +
                      std::to_string(hidden));
  w1_ = Tensor::randn({hidden, k}, rng, kInitStd, true);
  b1_ = Tensor::zeros({hidden}, true);
  w2_ = Tensor::randn({static_cast<int>(shape.flat()), hidden}, rng, kInitStd,
                      true);
  b2_ = Tensor::zeros({static_cast<int>(shape.flat())}, true);
}

Tensor MLPGenerator::generate(Tape& tape, const Tensor& e) const {
  check_embedding(e);
  Tensor e_col = ops::reshape(tape, e, {k_, 1});
  Tensor h = ops::add(tape, ops::reshape(tape, ops::matmul(tape, w1_, e_col),
                                         {hidden_}),
                      b1_);
  Tensor act = ops::gelu(tape, h);
  Tensor v = ops::add(
      tape,
      ops::reshape(tape, ops::matmul(tape, w2_, ops::reshape(tape, act, {hidden_, 1})),
                   {static_cast<int>(shape_.flat())}),
      b2_);
  return matricize(tape, v, shape_);
}

std::vector<NamedTensor> MLPGenerator::parameters() const {
  return {{"W1", w1_}, {"b1", b1_}, {"W2", w2_}, {"b2", b2_}};
}

std::pair<std::unique_ptr<LinearGenerator>, TaskEmbedding> reduce_to_standard(
    PromptShape shape, Rng& rng) {
  auto gen = std::make_unique<LinearGenerator>(shape, 1, rng);
  TaskEmbedding e{"standard", Tensor::from_data({1}, {1.0}, true)};
  return {std::move(gen), std::move(e)};
}

std::unique_ptr<PromptGenerator> make_generator(const std::string& kind,
                                                PromptShape shape, int k,
                                                int rank, int hidden,
                                                Rng& rng) {
  if (kind == "direct") return std::make_unique<DirectGenerator>(shape, rng);
  if (kind == "linear") return std::make_unique<LinearGenerator>(shape, k, rng);
  if (kind == "lowrank")
    return std::make_unique<LowRankGenerator>(shape, k, rank, rng);
  if (kind == "mlp")
    return std::make_unique<MLPGenerator>(shape, k, hidden > 0 ? hidden : 4 * k,
                                          rng);
  throw ConfigError("unknown generator kind '" + kind + "'");
}

}  // namespace spt
