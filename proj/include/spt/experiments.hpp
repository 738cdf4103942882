#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spt/report.hpp"
#include "spt/tasks.hpp"
#include "spt/trainer.hpp"

namespace spt {

struct GeneratorSpec {
  std::string kind = "linear";
  int rank = 8;    // lowrank
  int hidden = 0;  // mlp; 0 = 4·k
};

// Recipe for the frozen model: architecture plus the pretraining run that
// produces it. The model is trained once on all five synthetic task families
// with per-task prefix tokens occupying the prompt positions (dropped with
// probability prefix_drop so a blank prompt is in-distribution), then frozen
// and cached; prompt tuning only ever sees the frozen result.
struct LMExperimentConfig {
  LMConfig arch;
  uint64_t seed = 7;
  int prompt_slots = 8;
  int pretrain_steps = 4000;
  int pretrain_batch = 32;
  double pretrain_lr = 3e-3;
  double pretrain_weight_decay = 1e-4;
  double prefix_drop = 0.25;
  int examples_per_task = 3000;

  nlohmann::json to_json() const;
  static LMExperimentConfig from_json(const nlohmann::json& j);
};

struct ExperimentConfig {
  std::string name = "experiment";
  TrainMode mode = TrainMode::Single;
  LMExperimentConfig lm;
  std::vector<TaskSpec> tasks;
  std::vector<GeneratorSpec> generators;
  TrainConfig train;
  std::vector<uint64_t> seeds{1};
  std::vector<double> sweep_lrs;  // lr-sweep axis

  nlohmann::json to_json() const;  // fully resolved, no hidden defaults
};

ExperimentConfig parse_experiment_config(const std::filesystem::path& path);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

// Prefix token id for a task kind during pretraining.
int prefix_token_id(TaskKind kind);
// The prompt the pretrained model associates with a task: its prefix token
// embedding repeated over the prompt slots.
Tensor prefix_prompt(const Seq2SeqLM& lm, TaskKind kind, int slots);

// Full pretraining run; returns the model already frozen.
std::unique_ptr<Seq2SeqLM> pretrain_lm(const LMExperimentConfig& cfg,
                                       bool verbose = false);

struct RunPlan {
  GeneratorSpec gen;
  std::vector<size_t> task_indices;
  double lr = 0.1;
  uint64_t seed = 1;
  std::string run_id;
};

struct MatrixResult {
  std::vector<RunRecord> records;
  int executed = 0;
  int skipped = 0;
  bool partial = false;
  std::string markdown;
};

struct SweepDispersion {
  std::string generator;
  int n = 0;
  double min = 0, max = 0, range = 0, stddev = 0;
};

struct SweepResult {
  std::vector<RunRecord> records;
  std::vector<SweepDispersion> dispersion;
  bool partial = false;
  std::string markdown;
};

// Runs experiments against an output directory: datasets, the cached frozen
// model, one run directory per (cell × seed) with its RunRecord. Completed
// runs are detected by their records and skipped, so any invocation is
// resumable.
class ExperimentEngine {
 public:
  ExperimentEngine(ExperimentConfig cfg, std::filesystem::path out_dir,
                   int jobs = 1, bool verbose = false);

  void ensure_datasets();
  std::shared_ptr<Seq2SeqLM> ensure_frozen_lm();

  std::vector<RunPlan> matrix_plans() const;
  std::vector<RunPlan> sweep_plans() const;

  // Executes one plan (or loads its existing record). `fresh` reports
  // whether a new run actually happened.
  RunRecord execute_plan(const RunPlan& plan, bool* fresh = nullptr);

  MatrixResult run_matrix();
  SweepResult lr_sweep();

  const ExperimentConfig& config() const { return cfg_; }
  const std::filesystem::path& out_dir() const { return out_dir_; }
  const std::vector<TaskDataset>& datasets() const { return datasets_; }

 private:
  std::vector<RunRecord> execute_all(const std::vector<RunPlan>& plans,
                                     int* executed, int* skipped,
                                     bool* partial);

  ExperimentConfig cfg_;
  std::filesystem::path out_dir_;
  int jobs_;
  bool verbose_;
  std::vector<TaskDataset> datasets_;
  std::shared_ptr<Seq2SeqLM> frozen_lm_;
};

std::string format_lr(double lr);

}  // namespace spt
