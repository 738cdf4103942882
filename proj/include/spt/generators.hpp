#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "spt/ops.hpp"
#include "spt/tensor.hpp"

namespace spt {

struct PromptShape {
  int n = 20;  // prompt length in soft tokens
  int d = 16;  // model embedding dimension
  int64_t flat() const { return static_cast<int64_t>(n) * d; }
};

// Trainable per-task vector; the one piece of state that is unique to a task
// in multi-task training.
struct TaskEmbedding {
  std::string task_id;
  Tensor e;  // [k]
};

TaskEmbedding make_task_embedding(std::string task_id, int k, Rng& rng);

// Length-nd vector -> n×d prompt matrix, row-major: row i is v[i·d, (i+1)·d).
Tensor matricize(Tape& tape, const Tensor& v, PromptShape shape);

// A generator maps a task embedding to the prompt matrix prepended to the
// frozen model's input. The four variants share this surface; only their
// parameterization differs.
class PromptGenerator {
 public:
  explicit PromptGenerator(PromptShape shape) : shape_(shape) {}
  virtual ~PromptGenerator() = default;

  const PromptShape& prompt_shape() const { return shape_; }
  virtual std::string kind() const = 0;
  // Required task-embedding width; -1 accepts any.
  virtual int embed_dim() const = 0;
  // Prompt matrix [n, d], differentiable w.r.t. the generator parameters and
  // (where used) the task embedding.
  virtual Tensor generate(Tape& tape, const Tensor& e) const = 0;
  // Trainable tensors in a stable order, names unique within the generator.
  virtual std::vector<NamedTensor> parameters() const = 0;

 protected:
  void check_embedding(const Tensor& e) const;
  PromptShape shape_;
};

// Trainable scalar count, task embedding excluded.
int64_t parameter_count(const PromptGenerator& g);

// Standard prompt tuning: the prompt matrix itself is the parameter; the
// task embedding input is ignored.
class DirectGenerator : public PromptGenerator {
 public:
  DirectGenerator(PromptShape shape, Rng& rng);
  std::string kind() const override { return "direct"; }
  int embed_dim() const override { return -1; }
  Tensor generate(Tape& tape, const Tensor& e) const override;
  std::vector<NamedTensor> parameters() const override;
  Tensor& prompt() { return prompt_; }

 private:
  Tensor prompt_;  // [n, d]
};

// R = M(W·e + b)
class LinearGenerator : public PromptGenerator {
 public:
  LinearGenerator(PromptShape shape, int k, Rng& rng);
  std::string kind() const override { return "linear"; }
  int embed_dim() const override { return k_; }
  Tensor generate(Tape& tape, const Tensor& e) const override;
  std::vector<NamedTensor> parameters() const override;
  Tensor& weight() { return w_; }
  Tensor& bias() { return b_; }

 private:
  int k_;
  Tensor w_;  // [nd, k]
  Tensor b_;  // [nd]
};

// R = M(C·F·e + b); the effective projection C·F has rank at most r.
class LowRankGenerator : public PromptGenerator {
 public:
  LowRankGenerator(PromptShape shape, int k, int rank, Rng& rng);
  std::string kind() const override { return "lowrank"; }
  int embed_dim() const override { return k_; }
  int rank() const { return rank_; }
  Tensor generate(Tape& tape, const Tensor& e) const override;
  std::vector<NamedTensor> parameters() const override;
  Tensor& left() { return c_; }
  Tensor& right() { return f_; }
  Tensor& bias() { return b_; }

 private:
  int k_;
  int rank_;
  Tensor c_;  // [nd, r]
  Tensor f_;  // [r, k]
  Tensor b_;  // [nd]
};

// R = M(W2·gelu(W1·e + b1) + b2)
class MLPGenerator : public PromptGenerator {
 public:
  MLPGenerator(PromptShape shape, int k, int hidden, Rng& rng);
  std::string kind() const override { return "mlp"; }
  int embed_dim() const override { return k_; }
  int hidden() const { return hidden_; }
  Tensor generate(Tape& tape, const Tensor& e) const override;
  std::vector<NamedTensor> parameters() const override;

 private:
  int k_;
  int hidden_;
  Tensor w1_;  // [h, k]
  Tensor b1_;  // [h]
  Tensor w2_;  // [nd, h]
  Tensor b2_;  // [nd]
};

// Standard prompt tuning expressed inside the structured family: a linear
// generator with k = 1 and the scalar task embedding fixed at [1], so the
// generated prompt is M(W + b).
std::pair<std::unique_ptr<LinearGenerator>, TaskEmbedding> reduce_to_standard(
    PromptShape shape, Rng& rng);

// kind in {direct, linear, lowrank, mlp}; hidden == 0 picks 4·k.
std::unique_ptr<PromptGenerator> make_generator(const std::string& kind,
                                                PromptShape shape, int k,
                                                int rank, int hidden, Rng& rng);

}  // namespace spt
