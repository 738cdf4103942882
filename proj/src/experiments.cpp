#include "spt/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "spt/checkpoint.hpp"
#include "spt/errors.hpp"
#include "spt/ops.hpp"

namespace spt {

using json = nlohmann::json;

namespace {

constexpr int kPrefixTokenBase = 3;  // ids 3..7; 0 unused, 1 EOS, 2 BOS

constexpr TaskKind kAllKinds[] = {TaskKind::Copy, TaskKind::Reverse,
                                  TaskKind::SortDigits,
                                  TaskKind::ParityClassify,
                                  TaskKind::KeyValueLookup};

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

std::string format_lr(double lr) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", lr);
  return buf;
}

int prefix_token_id(TaskKind kind) {
  return kPrefixTokenBase + static_cast<int>(kind);
}

Tensor prefix_prompt(const Seq2SeqLM& lm, TaskKind kind, int slots) {
  const int d = lm.config().embed_dim;
  const int id = prefix_token_id(kind);
  Tensor prompt = Tensor::zeros({slots, d});
  for (int i = 0; i < slots; ++i)
    std::copy(lm.embedding().data() + static_cast<int64_t>(id) * d,
              lm.embedding().data() + static_cast<int64_t>(id) * d + d,
              prompt.data() + static_cast<int64_t>(i) * d);
  return prompt;
}

json LMExperimentConfig::to_json() const {
  return json{{"vocab_size", arch.vocab_size},
              {"embed_dim", arch.embed_dim},
              {"enc_layers", arch.enc_layers},
              {"dec_layers", arch.dec_layers},
              {"heads", arch.heads},
              {"ff_dim", arch.ff_dim},
              {"max_seq_len", arch.max_seq_len},
              {"seed", seed},
              {"prompt_slots", prompt_slots},
              {"pretrain_steps", pretrain_steps},
              {"pretrain_batch", pretrain_batch},
              {"pretrain_lr", pretrain_lr},
              {"pretrain_weight_decay", pretrain_weight_decay},
              {"prefix_drop", prefix_drop},
              {"examples_per_task", examples_per_task}};
}

LMExperimentConfig LMExperimentConfig::from_json(const json& j) {
  LMExperimentConfig cfg;
  cfg.arch.vocab_size = get_or(j, "vocab_size", cfg.arch.vocab_size);
  cfg.arch.embed_dim = get_or(j, "embed_dim", cfg.arch.embed_dim);
  cfg.arch.enc_layers = get_or(j, "enc_layers", cfg.arch.enc_layers);
  cfg.arch.dec_layers = get_or(j, "dec_layers", cfg.arch.dec_layers);
  cfg.arch.heads = get_or(j, "heads", cfg.arch.heads);
  cfg.arch.ff_dim = get_or(j, "ff_dim", cfg.arch.ff_dim);
  cfg.arch.max_seq_len = get_or(j, "max_seq_len", cfg.arch.max_seq_len);
  cfg.seed = get_or(j, "seed", cfg.seed);
  cfg.prompt_slots = get_or(j, "prompt_slots", cfg.prompt_slots);
  cfg.pretrain_steps = get_or(j, "pretrain_steps", cfg.pretrain_steps);
  cfg.pretrain_batch = get_or(j, "pretrain_batch", cfg.pretrain_batch);
  cfg.pretrain_lr = get_or(j, "pretrain_lr", cfg.pretrain_lr);
  cfg.pretrain_weight_decay =
      get_or(j, "pretrain_weight_decay", cfg.pretrain_weight_decay);
  cfg.prefix_drop = get_or(j, "prefix_drop", cfg.prefix_drop);
  cfg.examples_per_task = get_or(j, "examples_per_task", cfg.examples_per_task);
  return cfg;
}

json ExperimentConfig::to_json() const {
  json tasks_j = json::array();
  for (const auto& t : tasks) {
    tasks_j.push_back({{"task_id", t.task_id},
                       {"kind", task_kind_name(t.kind)},
                       {"seed", t.seed},
                       {"min_len", t.min_len},
                       {"max_len", t.max_len},
                       {"alphabet", t.alphabet},
                       {"train_size", t.train_size},
                       {"dev_size", t.dev_size},
                       {"test_size", t.test_size},
                       {"metric", t.metric}});
  }
  json gens_j = json::array();
  for (const auto& g : generators)
    gens_j.push_back({{"kind", g.kind}, {"rank", g.rank}, {"hidden", g.hidden}});
  return json{{"name", name},
              {"mode", train_mode_name(mode)},
              {"lm", lm.to_json()},
              {"tasks", tasks_j},
              {"generators", gens_j},
              {"train",
               {{"lr", train.lr},
                {"weight_decay", train.weight_decay},
                {"beta1", train.beta1},
                {"beta2", train.beta2},
                {"eps", train.eps},
                {"batch_size", train.batch_size},
                {"steps", train.steps},
                {"eval_every", train.eval_every},
                {"checkpoint_every", train.checkpoint_every},
                {"prompt_len", train.prompt_len},
                {"task_embed_dim", train.task_embed_dim}}},
              {"seeds", seeds},
              {"sweep_lrs", sweep_lrs}};
}

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig cfg;
  cfg.name = get_or<std::string>(j, "name", cfg.name);
  cfg.mode = train_mode_from_string(get_or<std::string>(j, "mode", "single"));
  if (j.contains("lm")) cfg.lm = LMExperimentConfig::from_json(j.at("lm"));

  if (!j.contains("tasks") || !j.at("tasks").is_array() || j.at("tasks").empty())
    throw ConfigError("experiment config needs a nonempty 'tasks' array");
  for (const auto& tj : j.at("tasks")) {
    TaskSpec t;
    t.kind = task_kind_from_string(get_or<std::string>(tj, "kind", "copy"));
    t.task_id = get_or<std::string>(tj, "task_id", "");
    t.seed = get_or<uint64_t>(tj, "seed", 0);
    t.min_len = get_or(tj, "min_len", 0);
    t.max_len = get_or(tj, "max_len", 0);
    t.alphabet = get_or<std::string>(tj, "alphabet", "");
    t.train_size = get_or(tj, "train_size", 2000);
    t.dev_size = get_or(tj, "dev_size", 200);
    t.test_size = get_or(tj, "test_size", 200);
    t.metric = get_or<std::string>(tj, "metric", "exact_match");
    t.apply_kind_defaults();
    cfg.tasks.push_back(std::move(t));
  }
  for (size_t i = 0; i < cfg.tasks.size(); ++i)
    for (size_t k = i + 1; k < cfg.tasks.size(); ++k)
      if (cfg.tasks[i].task_id == cfg.tasks[k].task_id)
        throw ConfigError("duplicate task id '" + cfg.tasks[i].task_id + "'");

  if (j.contains("generators")) {
    for (const auto& gj : j.at("generators")) {
      GeneratorSpec g;
      g.kind = get_or<std::string>(gj, "kind", "linear");
      if (g.kind != "direct" && g.kind != "linear" && g.kind != "lowrank" &&
          g.kind != "mlp")
        throw ConfigError("unknown generator kind '" + g.kind + "'");
      g.rank = get_or(gj, "rank", 8);
      g.hidden = get_or(gj, "hidden", 0);
      cfg.generators.push_back(g);
    }
  }
  if (cfg.generators.empty())
    cfg.generators = {{"direct", 8, 0}, {"linear", 8, 0}, {"lowrank", 8, 0},
                      {"mlp", 8, 0}};

  if (j.contains("train")) {
    const auto& tj = j.at("train");
    cfg.train.lr = get_or(tj, "lr", cfg.train.lr);
    cfg.train.weight_decay = get_or(tj, "weight_decay", cfg.train.weight_decay);
    cfg.train.beta1 = get_or(tj, "beta1", cfg.train.beta1);
    cfg.train.beta2 = get_or(tj, "beta2", cfg.train.beta2);
    cfg.train.eps = get_or(tj, "eps", cfg.train.eps);
    cfg.train.batch_size = get_or(tj, "batch_size", cfg.train.batch_size);
    cfg.train.steps = get_or(tj, "steps", cfg.train.steps);
    cfg.train.eval_every = get_or(tj, "eval_every", cfg.train.eval_every);
    cfg.train.checkpoint_every =
        get_or(tj, "checkpoint_every", cfg.train.checkpoint_every);
    cfg.train.prompt_len = get_or(tj, "prompt_len", cfg.train.prompt_len);
    cfg.train.task_embed_dim =
        get_or(tj, "task_embed_dim", cfg.train.task_embed_dim);
  }
  if (cfg.train.lr <= 0) throw ConfigError("train.lr must be positive");
  if (cfg.train.prompt_len < 1 || cfg.train.task_embed_dim < 1)
    throw ConfigError("prompt_len and task_embed_dim must be >= 1");

  cfg.seeds = get_or(j, "seeds", std::vector<uint64_t>{1});
  if (cfg.seeds.empty()) throw ConfigError("'seeds' may not be empty");
  cfg.sweep_lrs = get_or(j, "sweep_lrs", std::vector<double>{});
  cfg.train.mode = cfg.mode;
  return cfg;
}

ExperimentConfig parse_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j);
}

std::unique_ptr<Seq2SeqLM> pretrain_lm(const LMExperimentConfig& cfg,
                                       bool verbose) {
  Rng init_rng(Rng::mix(cfg.seed, 0x6C6D696Eull));  // "lmin"
  auto lm = std::make_unique<Seq2SeqLM>(cfg.arch, init_rng);
  lm->unfreeze();

  // One dataset per task family, seeds derived from the model seed so the
  // pretraining corpus is independent of any experiment's task datasets.
  std::vector<TaskDataset> corpora;
  std::vector<int64_t> sizes;
  for (size_t i = 0; i < std::size(kAllKinds); ++i) {
    TaskSpec spec;
    spec.kind = kAllKinds[i];
    spec.seed = Rng::mix(cfg.seed, 0xC0 + i);
    spec.train_size = cfg.examples_per_task;
    spec.dev_size = 0;
    spec.test_size = 0;
    spec.apply_kind_defaults();
    corpora.push_back(make_task(spec));
    sizes.push_back(static_cast<int64_t>(corpora.back().train.size()));
  }

  MultiTaskMixer mixer(sizes, cfg.pretrain_batch, Rng::mix(cfg.seed, 0x70726531ull));
  Rng drop_rng(Rng::mix(cfg.seed, 0x64726F70ull));  // "drop"
  AdamWState opt;
  auto params = lm->parameters();
  const AdamWConfig opt_cfg{cfg.pretrain_lr, cfg.pretrain_weight_decay, 0.9,
                            0.999, 1e-8};

  for (int step = 1; step <= cfg.pretrain_steps; ++step) {
    Tape tape;
    std::vector<Tensor> nlls;
    auto items = mixer.next_batch();
    for (const auto& it : items) {
      const auto& corpus = corpora[static_cast<size_t>(it.task_index)];
      const auto& ex = corpus.train[static_cast<size_t>(it.example_index)];
      const bool drop = drop_rng.uniform() < cfg.prefix_drop;
      Tensor prompt;
      if (drop) {
        prompt = Tensor::zeros({cfg.prompt_slots, cfg.arch.embed_dim});
      } else {
        const std::vector<int> prefix(
            static_cast<size_t>(cfg.prompt_slots),
            prefix_token_id(corpus.spec.kind));
        prompt = ops::embedding_lookup(tape, lm->embedding(), prefix);
      }
      nlls.push_back(lm->conditional_nll(tape, prompt, to_example(ex)));
    }
    Tensor loss = ops::mean_stack(tape, nlls);
    const double value = loss.item();
    if (!std::isfinite(value))
      throw NumericAbort("non-finite pretraining loss at step " +
                         std::to_string(step));
    tape.backward(loss);
    adamw_step(params, opt, opt_cfg);
    for (auto& [name, t] : params) t.drop_grad();
    if (verbose && step % 200 == 0)
      std::fprintf(stderr, "[pretrain] step %d loss %.4f\n", step, value);
  }
  lm->freeze();
  return lm;
}

ExperimentEngine::ExperimentEngine(ExperimentConfig cfg,
                                   std::filesystem::path out_dir, int jobs,
                                   bool verbose)
    : cfg_(std::move(cfg)), out_dir_(std::move(out_dir)),
      jobs_(jobs < 1 ? 1 : jobs), verbose_(verbose) {
  if (cfg_.mode != TrainMode::Multi && cfg_.tasks.empty())
    throw ConfigError("no tasks configured");
}

void ExperimentEngine::ensure_datasets() {
  if (!datasets_.empty()) return;
  for (const auto& spec : cfg_.tasks) {
    const auto dir = out_dir_ / "tasks" / spec.task_id;
    if (std::filesystem::exists(dir / "task.json")) {
      datasets_.push_back(load_dataset(dir));
    } else {
      datasets_.push_back(make_task(spec));
      write_dataset(datasets_.back(), dir);
    }
  }
}

std::shared_ptr<Seq2SeqLM> ExperimentEngine::ensure_frozen_lm() {
  if (frozen_lm_) return frozen_lm_;
  const std::string cfg_json = cfg_.lm.to_json().dump();
  char tag[16];
  std::snprintf(tag, sizeof(tag), "%08x",
                crc32(reinterpret_cast<const uint8_t*>(cfg_json.data()),
                      cfg_json.size()));
  const auto path = out_dir_ / "lm" / ("lm_" + std::string(tag) + ".ckpt");
  if (std::filesystem::exists(path)) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.config_json != cfg_json)
      throw FormatError("cached model at " + path.string() +
                        " was built from a different configuration");
    Rng rng(Rng::mix(cfg_.lm.seed, 0x6C6D696Eull));
    auto lm = std::make_shared<Seq2SeqLM>(cfg_.lm.arch, rng);
    load_parameters(lm->parameters(), ck.tensors);
    lm->freeze();
    frozen_lm_ = std::move(lm);
  } else {
    if (verbose_) std::fprintf(stderr, "[lm] pretraining frozen model...\n");
    std::unique_ptr<Seq2SeqLM> lm = pretrain_lm(cfg_.lm, verbose_);
    std::vector<NamedTensor> tensors;
    for (const auto& [name, t] : lm->parameters())
      tensors.emplace_back(name, t);
    save_checkpoint(path, tensors, cfg_json, cfg_.lm.seed);
    frozen_lm_ = std::move(lm);
  }
  return frozen_lm_;
}

std::vector<RunPlan> ExperimentEngine::matrix_plans() const {
  std::vector<RunPlan> plans;
  for (const auto& gen : cfg_.generators) {
    if (cfg_.mode == TrainMode::Multi) {
      std::vector<size_t> all;
      for (size_t t = 0; t < cfg_.tasks.size(); ++t) all.push_back(t);
      for (uint64_t seed : cfg_.seeds) {
        RunPlan p{gen, all, cfg_.train.lr, seed, ""};
        p.run_id = cfg_.name + "__" + gen.kind + "__all__lr" +
                   format_lr(p.lr) + "__seed" + std::to_string(seed);
        plans.push_back(std::move(p));
      }
    } else {
      for (size_t t = 0; t < cfg_.tasks.size(); ++t) {
        for (uint64_t seed : cfg_.seeds) {
          RunPlan p{gen, {t}, cfg_.train.lr, seed, ""};
          p.run_id = cfg_.name + "__" + gen.kind + "__" +
                     cfg_.tasks[t].task_id + "__lr" + format_lr(p.lr) +
                     "__seed" + std::to_string(seed);
          plans.push_back(std::move(p));
        }
      }
    }
  }
  return plans;
}

std::vector<RunPlan> ExperimentEngine::sweep_plans() const {
  if (cfg_.sweep_lrs.empty())
    throw ConfigError("lr-sweep needs a nonempty 'sweep_lrs' axis");
  std::vector<GeneratorSpec> gens;
  for (const auto& g : cfg_.generators)
    if (g.kind == "direct" || g.kind == "lowrank") gens.push_back(g);
  if (gens.empty())
    throw ConfigError(
        "lr-sweep compares the direct and lowrank generators; configure at "
        "least one of them");
  std::vector<RunPlan> plans;
  for (const auto& gen : gens) {
    for (size_t t = 0; t < cfg_.tasks.size(); ++t) {
      for (double lr : cfg_.sweep_lrs) {
        for (uint64_t seed : cfg_.seeds) {
          RunPlan p{gen, {t}, lr, seed, ""};
          p.run_id = cfg_.name + "__" + gen.kind + "__" +
                     cfg_.tasks[t].task_id + "__lr" + format_lr(lr) +
                     "__seed" + std::to_string(seed);
          plans.push_back(std::move(p));
        }
      }
    }
  }
  return plans;
}

RunRecord ExperimentEngine::execute_plan(const RunPlan& plan, bool* fresh) {
  const auto run_dir = out_dir_ / "runs" / plan.run_id;
  const auto record_path = run_dir / "record.json";
  if (std::filesystem::exists(record_path)) {
    std::ifstream in(record_path, std::ios::binary);
    json j;
    in >> j;
    if (fresh) *fresh = false;
    return RunRecord::from_json(j);
  }
  if (fresh) *fresh = true;

  ensure_datasets();
  auto shared_lm = ensure_frozen_lm();

  // Full-finetune runs mutate the model, so they train a private copy.
  Seq2SeqLM* lm = shared_lm.get();
  std::unique_ptr<Seq2SeqLM> private_lm;
  if (cfg_.mode == TrainMode::FullFinetune) {
    Rng rng(Rng::mix(cfg_.lm.seed, 0x6C6D696Eull));
    private_lm = std::make_unique<Seq2SeqLM>(cfg_.lm.arch, rng);
    load_parameters(private_lm->parameters(), shared_lm->parameters());
    lm = private_lm.get();
  }

  TrainConfig tc = cfg_.train;
  tc.mode = cfg_.mode;
  tc.lr = plan.lr;
  tc.seed = plan.seed;
  tc.generator = plan.gen.kind;
  tc.lowrank_rank = plan.gen.rank;
  tc.mlp_hidden = plan.gen.hidden;

  const PromptShape shape{tc.prompt_len, cfg_.lm.arch.embed_dim};
  const uint32_t kind_tag =
      crc32(reinterpret_cast<const uint8_t*>(plan.gen.kind.data()),
            plan.gen.kind.size());
  Rng gen_rng(Rng::mix(plan.seed, Rng::mix(0x67656Eull, kind_tag)));
  auto generator = make_generator(plan.gen.kind, shape, tc.task_embed_dim,
                                  plan.gen.rank, plan.gen.hidden, gen_rng);

  std::vector<const TaskDataset*> tasks;
  for (size_t t : plan.task_indices) tasks.push_back(&datasets_[t]);

  if (auto* direct = dynamic_cast<DirectGenerator*>(generator.get()))
    init_direct_prompt_from_corpus(*direct, *lm, tasks);

  std::vector<TaskEmbedding> embeddings;
  Rng emb_rng(Rng::mix(plan.seed, 0x656D62ull));
  for (const auto* t : tasks)
    embeddings.push_back(
        make_task_embedding(t->spec.task_id, tc.task_embed_dim, emb_rng));

  RunRecord record;
  try {
    Trainer trainer(tc, *lm, *generator, embeddings, tasks);
    trainer.record().run_id = plan.run_id;
    trainer.record().experiment = cfg_.name;
    json snapshot = cfg_.to_json();
    snapshot["cell"] = {{"generator", plan.gen.kind},
                        {"lr", plan.lr},
                        {"seed", plan.seed},
                        {"rank", plan.gen.rank},
                        {"hidden", plan.gen.hidden}};
    snapshot["train"]["lr"] = plan.lr;
    trainer.record().config_snapshot = snapshot;
    record = trainer.run(run_dir.string());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    record.run_id = plan.run_id;
    record.experiment = cfg_.name;
    record.generator = plan.gen.kind;
    for (const auto* t : tasks) record.task_ids.push_back(t->spec.task_id);
    record.lr = plan.lr;
    record.seed = plan.seed;
    record.status = std::string("failed: ") + e.what();
    std::filesystem::create_directories(run_dir);
    std::ofstream out(record_path, std::ios::binary);
    out << record.to_json().dump(2) << '\n';
  }
  return record;
}

std::vector<RunRecord> ExperimentEngine::execute_all(
    const std::vector<RunPlan>& plans, int* executed, int* skipped,
    bool* partial) {
  ensure_datasets();
  ensure_frozen_lm();
  std::vector<RunRecord> records(plans.size());
  std::atomic<size_t> next{0};
  std::atomic<int> fresh_count{0}, skip_count{0};
  std::mutex log_mutex;
  auto worker = [&]() {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= plans.size()) break;
      bool fresh = false;
      records[i] = execute_plan(plans[i], &fresh);
      (fresh ? fresh_count : skip_count).fetch_add(1);
      if (verbose_) {
        std::lock_guard<std::mutex> lock(log_mutex);
        std::fprintf(stderr, "[run] %s %s (%s)\n", plans[i].run_id.c_str(),
                     records[i].status.c_str(), fresh ? "new" : "cached");
      }
    }
  };
  const int n_workers =
      std::min<int>(jobs_, static_cast<int>(plans.size()));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (executed) *executed = fresh_count.load();
  if (skipped) *skipped = skip_count.load();
  bool any_failed = false;
  for (const auto& r : records)
    if (r.status.rfind("failed", 0) == 0) any_failed = true;
  if (partial) *partial = any_failed;
  return records;
}

MatrixResult ExperimentEngine::run_matrix() {
  MatrixResult result;
  result.records = execute_all(matrix_plans(), &result.executed,
                               &result.skipped, &result.partial);
  result.markdown = render_report(result.records);
  std::filesystem::create_directories(out_dir_);
  {
    std::ofstream out(out_dir_ / "report.md", std::ios::binary);
    out << result.markdown;
  }
  write_metrics_csv(out_dir_ / "metrics.csv", collect_rows(result.records));
  return result;
}

SweepResult ExperimentEngine::lr_sweep() {
  SweepResult result;
  int executed = 0, skipped = 0;
  result.records =
      execute_all(sweep_plans(), &executed, &skipped, &result.partial);

  // Dispersion of the final (test) score per generator across every
  // (lr × seed) run; the learning-rate sensitivity summary.
  std::map<std::string, std::vector<double>> by_gen;
  for (const auto& r : result.records) {
    if (r.status.rfind("failed", 0) == 0) continue;
    double mean = 0;
    int n = 0;
    for (const auto& [task, v] : r.test_scores) {
      mean += v;
      ++n;
    }
    if (n > 0) by_gen[r.generator].push_back(mean / n);
  }
  for (const auto& [gen, values] : by_gen) {
    SweepDispersion d;
    d.generator = gen;
    d.n = static_cast<int>(values.size());
    d.min = *std::min_element(values.begin(), values.end());
    d.max = *std::max_element(values.begin(), values.end());
    d.range = d.max - d.min;
    const CellStats stats = cell_stats(values);
    d.stddev = stats.stddev.value_or(0.0);
    result.dispersion.push_back(d);
  }

  std::ostringstream md;
  md << "# Learning-rate sensitivity\n\n";
  md << "Scores per (generator, lr, seed):\n\n";
  md << "| generator | task | lr | seed | score |\n|---|---|---|---|---|\n";
  std::vector<const RunRecord*> sorted;
  for (const auto& r : result.records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const RunRecord* a, const RunRecord* b) {
              return std::tie(a->generator, a->task_ids, a->lr, a->seed) <
                     std::tie(b->generator, b->task_ids, b->lr, b->seed);
            });
  for (const auto* r : sorted) {
    double mean = 0;
    int n = 0;
    for (const auto& [task, v] : r->test_scores) {
      mean += v;
      ++n;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", n > 0 ? mean / n : 0.0);
    md << "| " << r->generator << " | "
       << (r->task_ids.empty() ? "?" : r->task_ids.front()) << " | "
       << format_lr(r->lr) << " | " << r->seed << " | "
       << (n > 0 ? buf : "failed") << " |\n";
  }
  md << "\nDispersion across all runs per generator (range and std):\n\n";
  md << "| generator | n | min | max | range | std |\n|---|---|---|---|---|---|\n";
  for (const auto& d : result.dispersion) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "| %s | %d | %.4f | %.4f | %.4f | %.4f |",
                  d.generator.c_str(), d.n, d.min, d.max, d.range, d.stddev);
    md << buf << "\n";
  }
  auto find_disp = [&](const std::string& g) -> const SweepDispersion* {
    for (const auto& d : result.dispersion)
      if (d.generator == g) return &d;
    return nullptr;
  };
  const auto* direct = find_disp("direct");
  const auto* lowrank = find_disp("lowrank");
  if (direct && lowrank) {
    md << "\nObserved: lowrank std " << (lowrank->stddev <= direct->stddev
                                             ? "<="
                                             : ">")
       << " direct std (" << lowrank->stddev << " vs " << direct->stddev
       << ").\n";
  }
  result.markdown = md.str();

  std::filesystem::create_directories(out_dir_);
  write_metrics_csv(out_dir_ / "sweep_scores.csv", collect_rows(result.records));
  {
    std::ofstream out(out_dir_ / "sweep_dispersion.csv", std::ios::binary);
    out << "generator,n,min,max,range,std\n";
    for (const auto& d : result.dispersion) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%s,%d,%.17g,%.17g,%.17g,%.17g\n",
                    d.generator.c_str(), d.n, d.min, d.max, d.range, d.stddev);
      out << buf;
    }
  }
  {
    std::ofstream out(out_dir_ / "sweep_report.md", std::ios::binary);
    out << result.markdown;
  }
  return result;
}

}  // namespace spt
