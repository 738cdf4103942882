#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spt/lm.hpp"
#include "spt/rng.hpp"

namespace spt {

enum class TaskKind { Copy, Reverse, SortDigits, ParityClassify, KeyValueLookup };

TaskKind task_kind_from_string(const std::string& name);
std::string task_kind_name(TaskKind kind);

struct TaskSpec {
  std::string task_id;  // defaults to the kind name
  TaskKind kind = TaskKind::Copy;
  uint64_t seed = 0;
  int min_len = 0;  // 0 = kind default
  int max_len = 0;
  std::string alphabet;  // generation alphabet; empty = kind default
  int train_size = 2000;
  int dev_size = 200;
  int test_size = 200;
  std::string metric = "exact_match";  // or token_accuracy

  void apply_kind_defaults();
};

struct StringExample {
  std::string input;
  std::string target;
};

// Disjoint splits by construction: inputs are deduplicated across the whole
// dataset before partitioning.
struct TaskDataset {
  TaskSpec spec;
  std::vector<StringExample> train, dev, test;
};

// Deterministic: bytes are a pure function of the spec.
TaskDataset make_task(const TaskSpec& spec);

// Line-oriented "input<TAB>target" files train.tsv/dev.tsv/test.tsv plus a
// task.json spec snapshot, one directory per task.
void write_dataset(const TaskDataset& ds, const std::filesystem::path& dir);
TaskDataset load_dataset(const std::filesystem::path& dir);

// Byte-level tokenizer: each char maps to its byte value (all < 256).
std::vector<int> tokenize(const std::string& text);
std::string detokenize(const std::vector<int>& ids);
Example to_example(const StringExample& ex);

// Most frequent token ids over inputs+targets; ties go to the lower id.
std::vector<int> top_frequent_tokens(const std::vector<StringExample>& data,
                                     int n);

// Batch composer for multi-task training: every batch takes floor(B/T) or
// ceil(B/T) examples from each task, remainder rotating round-robin; per-task
// streams are without-replacement epochs, reshuffled per epoch. Permutations
// derive from (seed, task, epoch), so the resumable state is just the
// cursor/epoch counters and the batch index.
class MultiTaskMixer {
 public:
  struct Item {
    int task_index;
    int64_t example_index;
  };
  struct State {
    std::vector<int64_t> epoch;
    std::vector<int64_t> cursor;
    int64_t batch_index = 0;
  };

  MultiTaskMixer(std::vector<int64_t> task_sizes, int batch_size,
                 uint64_t seed);

  std::vector<Item> next_batch();
  int64_t num_tasks() const { return static_cast<int64_t>(sizes_.size()); }
  const State& state() const { return state_; }
  void restore(const State& s);

 private:
  void refresh_perm(size_t task);

  std::vector<int64_t> sizes_;
  int batch_size_;
  uint64_t seed_;
  State state_;
  std::vector<std::vector<int64_t>> perms_;
};

}  // namespace spt
