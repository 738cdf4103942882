#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spt/generators.hpp"
#include "spt/lm.hpp"
#include "spt/tasks.hpp"

namespace spt {

enum class TrainMode { Single, Multi, FullFinetune };

std::string train_mode_name(TrainMode mode);
TrainMode train_mode_from_string(const std::string& name);

struct TrainConfig {
  double lr = 0.1;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 32;
  int steps = 3000;
  int eval_every = 200;
  int checkpoint_every = 0;  // 0: resume state only at the end of the run
  uint64_t seed = 0;
  TrainMode mode = TrainMode::Single;
  int prompt_len = 20;
  int task_embed_dim = 64;
  std::string generator = "linear";
  int lowrank_rank = 8;
  int mlp_hidden = 0;  // 0 = 4 * task_embed_dim
};

struct AdamWConfig {
  double lr = 0.1;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Per-parameter moments keyed by name; a parameter's step counter advances
// only when it actually receives an update.
struct AdamWState {
  struct Slot {
    std::vector<double> m, v;
    int64_t step = 0;
  };
  std::map<std::string, Slot> slots;
};

// Decoupled-weight-decay Adam with bias correction:
//   p -= lr · m̂ / (√v̂ + eps) + lr · wd · p
// Parameters without a grad buffer are skipped entirely (no decay, no moment
// update), so tensors untouched by the loss stay bit-identical. Throws on a
// non-finite gradient, naming the parameter.
void adamw_step(std::vector<NamedTensor>& params, AdamWState& state,
                const AdamWConfig& cfg);

// Plain gradient descent on whichever parameters hold grads.
void sgd_step(std::vector<NamedTensor>& params, double lr);

struct EvalPoint {
  int64_t step;
  std::string split;
  std::string task_id;
  std::string metric;
  double value;
};

struct RunRecord {
  std::string run_id;
  std::string experiment;
  std::string generator;
  std::vector<std::string> task_ids;
  double lr = 0;
  uint64_t seed = 0;
  nlohmann::json config_snapshot;
  std::vector<double> losses;  // per optimization step, append-only
  std::vector<EvalPoint> evals;
  int64_t best_step = -1;
  double best_dev = 0;
  std::map<std::string, double> test_scores;
  double wall_clock_sec = 0;
  std::string status = "incomplete";
  std::string checkpoint_path;

  nlohmann::json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);
  // Everything except wall-clock time.
  bool same_results(const RunRecord& other) const;
};

// Greedy-decodes every example and scores it with the task metric
// (exact_match or token_accuracy), in [0, 1].
double evaluate(const Seq2SeqLM& lm, const PromptGenerator& gen,
                const TaskEmbedding& embedding,
                const std::vector<StringExample>& data,
                const std::string& metric);

double score_decode(const std::string& decoded, const std::string& target,
                    const std::string& metric);

// Copies the prompt rows of a DirectGenerator from the model's embedding
// table at the most frequent training-corpus tokens.
void init_direct_prompt_from_corpus(
    DirectGenerator& gen, const Seq2SeqLM& lm,
    const std::vector<const TaskDataset*>& tasks);

// One optimization run: batches from the mixer, per-task prompt generation,
// teacher-forced NLL, AdamW over exactly the trainable set for the mode.
class Trainer {
 public:
  Trainer(TrainConfig cfg, Seq2SeqLM& lm, PromptGenerator& gen,
          std::vector<TaskEmbedding>& embeddings,
          std::vector<const TaskDataset*> tasks);

  // Mean NLL over one batch of (task index, example) pairs, followed by an
  // optimizer step. Exposed for the gradient-isolation tests.
  double step(const std::vector<std::pair<int, const StringExample*>>& batch);

  // Full loop. run_dir may be empty (no files written). resume_from, when
  // set, restores parameters, optimizer and mixer state and continues from
  // the recorded step.
  RunRecord run(const std::string& run_dir = "",
                const std::optional<std::string>& resume_from = std::nullopt);

  // Tensors the optimizer may update in the current mode.
  std::vector<NamedTensor> trainable_parameters() const;

  const TrainConfig& config() const { return cfg_; }
  RunRecord& record() { return record_; }

 private:
  double eval_dev(int64_t step_index);
  void save_resume_state(const std::string& path, int64_t step_index,
                         const MultiTaskMixer& mixer) const;
  int64_t load_resume_state(const std::string& path, MultiTaskMixer& mixer);
  std::vector<NamedTensor> snapshot_trainables() const;

  TrainConfig cfg_;
  Seq2SeqLM& lm_;
  PromptGenerator& gen_;
  std::vector<TaskEmbedding>& embeddings_;
  std::vector<const TaskDataset*> tasks_;
  AdamWState opt_state_;
  RunRecord record_;
  std::vector<NamedTensor> best_params_;
};

}  // namespace spt
