// Experiment front end: dataset generation, single runs, the generator
// comparison matrix, the learning-rate sweep, report generation and the
// gradient verification battery.

#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "spt/checkpoint.hpp"
#include "spt/errors.hpp"
#include "spt/experiments.hpp"
#include "spt/grad_check.hpp"
#include "spt/ops.hpp"
#include "spt/report.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitPartial = 3;
constexpr int kExitIo = 4;

struct CommonOpts {
  std::string config;
  std::string out = "out";
  uint64_t seed = 1;
  int jobs = 1;
};

int cmd_tasks_generate(const std::string& config, const std::string& out,
                       uint64_t seed) {
  std::vector<spt::TaskSpec> specs;
  if (!config.empty()) {
    auto cfg = spt::parse_experiment_config(config);
    specs = cfg.tasks;
  } else {
    for (const char* kind : {"copy", "reverse", "sort-digits",
                             "parity-classify", "key-value-lookup"}) {
      spt::TaskSpec spec;
      spec.kind = spt::task_kind_from_string(kind);
      spec.seed = spt::Rng::mix(seed, spt::crc32(
                                          reinterpret_cast<const uint8_t*>(kind),
                                          std::string(kind).size()));
      spec.apply_kind_defaults();
      specs.push_back(std::move(spec));
    }
  }
  for (const auto& spec : specs) {
    const auto ds = spt::make_task(spec);
    const auto dir = std::filesystem::path(out) / "tasks" / spec.task_id;
    spt::write_dataset(ds, dir);
    std::printf("wrote %s (%zu train / %zu dev / %zu test)\n",
                dir.string().c_str(), ds.train.size(), ds.dev.size(),
                ds.test.size());
  }
  return kExitOk;
}

int cmd_run(const CommonOpts& opts, const std::string& generator,
            const std::string& task_id, double lr_override, bool resume) {
  auto cfg = spt::parse_experiment_config(opts.config);
  spt::ExperimentEngine engine(cfg, opts.out, 1, true);
  engine.ensure_datasets();

  spt::RunPlan plan;
  plan.gen = cfg.generators.front();
  if (!generator.empty()) {
    plan.gen.kind = generator;
    for (const auto& g : cfg.generators)
      if (g.kind == generator) plan.gen = g;
  }
  plan.lr = lr_override > 0 ? lr_override : cfg.train.lr;
  plan.seed = opts.seed;
  if (cfg.mode == spt::TrainMode::Multi) {
    for (size_t t = 0; t < cfg.tasks.size(); ++t)
      plan.task_indices.push_back(t);
    plan.run_id = cfg.name + "__" + plan.gen.kind + "__all__lr" +
                  spt::format_lr(plan.lr) + "__seed" +
                  std::to_string(plan.seed);
  } else {
    size_t index = 0;
    if (!task_id.empty()) {
      bool found = false;
      for (size_t t = 0; t < cfg.tasks.size(); ++t)
        if (cfg.tasks[t].task_id == task_id) {
          index = t;
          found = true;
        }
      if (!found) throw spt::ConfigError("unknown task id '" + task_id + "'");
    }
    plan.task_indices = {index};
    plan.run_id = cfg.name + "__" + plan.gen.kind + "__" +
                  cfg.tasks[index].task_id + "__lr" + spt::format_lr(plan.lr) +
                  "__seed" + std::to_string(plan.seed);
  }

  if (resume) {
    // Re-enter an interrupted run from its periodic state checkpoint.
    const auto run_dir =
        std::filesystem::path(opts.out) / "runs" / plan.run_id;
    const auto state = run_dir / "state.ckpt";
    if (std::filesystem::exists(run_dir / "record.json")) {
      std::printf("run %s already complete\n", plan.run_id.c_str());
      return kExitOk;
    }
    if (!std::filesystem::exists(state))
      throw spt::IoError("no state checkpoint to resume at " + state.string());
  }
  const spt::RunRecord record = engine.execute_plan(plan);
  std::printf("run %s: %s (best dev %.4f at step %lld)\n",
              record.run_id.c_str(), record.status.c_str(), record.best_dev,
              static_cast<long long>(record.best_step));
  for (const auto& [task, v] : record.test_scores)
    std::printf("  test %s: %.4f\n", task.c_str(), v);
  return record.status.rfind("failed", 0) == 0 ? kExitPartial : kExitOk;
}

int cmd_matrix(const CommonOpts& opts) {
  auto cfg = spt::parse_experiment_config(opts.config);
  spt::ExperimentEngine engine(cfg, opts.out, opts.jobs, true);
  auto result = engine.run_matrix();
  std::printf("%s\n", result.markdown.c_str());
  std::printf("runs: %d new, %d cached\n", result.executed, result.skipped);
  return result.partial ? kExitPartial : kExitOk;
}

int cmd_lr_sweep(const CommonOpts& opts) {
  auto cfg = spt::parse_experiment_config(opts.config);
  spt::ExperimentEngine engine(cfg, opts.out, opts.jobs, true);
  auto result = engine.lr_sweep();
  std::printf("%s\n", result.markdown.c_str());
  return result.partial ? kExitPartial : kExitOk;
}

int cmd_report(const std::string& out) {
  const auto records = spt::load_records(out);
  if (records.empty()) {
    std::fprintf(stderr, "no run records under %s/runs\n", out.c_str());
    return kExitIo;
  }
  const std::string md = spt::render_report(records);
  spt::write_metrics_csv(std::filesystem::path(out) / "metrics.csv",
                         spt::collect_rows(records));
  {
    std::ofstream file(std::filesystem::path(out) / "report.md",
                       std::ios::binary);
    file << md;
  }
  std::printf("%s\n", md.c_str());
  return kExitOk;
}

// The finite-difference battery over every primitive and generator; the same
// checks the test suite runs, reachable from the command line.
int cmd_verify_gradients(uint64_t seed, bool quick);

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"structured prompt tuning lab"};
  app.require_subcommand(1);

  CommonOpts opts;

  auto* tasks = app.add_subcommand("tasks", "dataset utilities");
  tasks->require_subcommand(1);
  auto* generate = tasks->add_subcommand("generate", "materialize datasets");
  std::string gen_config;
  generate->add_option("--config", gen_config, "experiment config (optional)");
  generate->add_option("--out", opts.out, "output directory");
  generate->add_option("--seed", opts.seed, "dataset seed");

  auto* run = app.add_subcommand("run", "execute a single training run");
  std::string run_generator, run_task;
  double run_lr = 0;
  bool run_resume = false;
  run->add_option("--config", opts.config, "experiment config")->required();
  run->add_option("--out", opts.out, "output directory");
  run->add_option("--seed", opts.seed, "run seed");
  run->add_option("--generator", run_generator, "generator kind");
  run->add_option("--task", run_task, "task id (single-task modes)");
  run->add_option("--lr", run_lr, "learning-rate override");
  run->add_flag("--resume", run_resume, "resume from the state checkpoint");

  auto* matrix = app.add_subcommand("matrix", "run the generator/task matrix");
  matrix->add_option("--config", opts.config, "experiment config")->required();
  matrix->add_option("--out", opts.out, "output directory");
  matrix->add_option("--jobs", opts.jobs, "parallel runs");

  auto* sweep = app.add_subcommand("lr-sweep", "learning-rate sensitivity");
  sweep->add_option("--config", opts.config, "experiment config")->required();
  sweep->add_option("--out", opts.out, "output directory");
  sweep->add_option("--jobs", opts.jobs, "parallel runs");

  auto* report = app.add_subcommand("report", "aggregate run records");
  report->add_option("--out", opts.out, "output directory");

  auto* verify = app.add_subcommand("verify-gradients",
                                    "finite-difference gradient battery");
  bool quick = false;
  verify->add_option("--seed", opts.seed, "rng seed");
  verify->add_flag("--quick", quick, "fewer shapes per primitive");

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) return cmd_tasks_generate(gen_config, opts.out, opts.seed);
    if (run->parsed()) return cmd_run(opts, run_generator, run_task, run_lr, run_resume);
    if (matrix->parsed()) return cmd_matrix(opts);
    if (sweep->parsed()) return cmd_lr_sweep(opts);
    if (report->parsed()) return cmd_report(opts.out);
    if (verify->parsed()) return cmd_verify_gradients(opts.seed, quick);
  } catch (const spt::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const spt::FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kExitIo;
  } catch (const spt::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kExitOk;
}

namespace {

int cmd_verify_gradients(uint64_t seed, bool quick) {
  using namespace spt;
  int failures = 0;
  int checked = 0;
  Rng rng(seed);
  const double tol = 1e-5;
  const int reps = quick ? 1 : 3;

  auto report_check = [&](const std::string& name, double err) {
    ++checked;
    const bool ok = err < tol;
    if (!ok) ++failures;
    std::printf("%-38s max rel err %.3e  %s\n", name.c_str(), err,
                ok ? "ok" : "FAIL");
  };

  for (int rep = 0; rep < reps; ++rep) {
    const int m = 2 + static_cast<int>(rng.uniform_int(4));
    const int p = 2 + static_cast<int>(rng.uniform_int(4));
    const int q = 2 + static_cast<int>(rng.uniform_int(4));
    const std::string dims = " " + std::to_string(m) + "x" +
                             std::to_string(p) + "x" + std::to_string(q);

    {
      Tensor a = Tensor::randn({m, p}, rng, 1.0, true);
      Tensor b = Tensor::randn({p, q}, rng, 1.0, true);
      auto fwd = [&](Tape& t) { return ops::sum(t, ops::matmul(t, a, b)); };
      report_check("matmul/a" + dims, gradient_check(fwd, a));
      report_check("matmul/b" + dims, gradient_check(fwd, b));
    }
    {
      Tensor x = Tensor::randn({m, p}, rng, 1.5, true);
      auto fwd = [&](Tape& t) { return ops::sum(t, ops::gelu(t, x)); };
      report_check("gelu" + dims, gradient_check(fwd, x));
    }
    {
      Tensor x = Tensor::randn({m, p}, rng, 1.0, true);
      Tensor g = Tensor::randn({p}, rng, 0.5, true);
      Tensor b = Tensor::randn({p}, rng, 0.5, true);
      auto fwd = [&](Tape& t) {
        return ops::sum(t, ops::layer_norm(t, x, g, b));
      };
      report_check("layer_norm/x" + dims, gradient_check(fwd, x));
      report_check("layer_norm/gain" + dims, gradient_check(fwd, g));
      report_check("layer_norm/bias" + dims, gradient_check(fwd, b));
    }
    {
      Tensor logits = Tensor::randn({m, 7}, rng, 1.0, true);
      std::vector<int> targets;
      for (int i = 0; i < m; ++i)
        targets.push_back(static_cast<int>(rng.uniform_int(7)));
      auto fwd = [&](Tape& t) {
        return ops::softmax_cross_entropy(t, logits, targets);
      };
      report_check("softmax_cross_entropy" + dims,
                   gradient_check(fwd, logits));
    }
    {
      Tensor x = Tensor::randn({m, q}, rng, 1.0, true);
      auto fwd = [&](Tape& t) {
        Tensor s = ops::softmax_rows(t, x, /*causal=*/true);
        Tensor w = Tensor::randn({m, q}, rng, 1.0);
        return ops::sum(t, ops::mul(t, s, w));
      };
      report_check("softmax_rows/causal" + dims, gradient_check(fwd, x));
    }
    {
      Tensor table = Tensor::randn({6, p}, rng, 1.0, true);
      std::vector<int> ids{0, 3, 3, 5, 1};
      auto fwd = [&](Tape& t) {
        return ops::sum(t, ops::embedding_lookup(t, table, ids));
      };
      report_check("embedding_lookup" + dims, gradient_check(fwd, table));
    }
    {
      Tensor a = Tensor::randn({m, p}, rng, 1.0, true);
      auto fwd = [&](Tape& t) {
        Tensor tr = ops::transpose(t, a);
        Tensor flat = ops::reshape(t, tr, {m * p});
        Tensor sliced = ops::slice_cols(t, ops::reshape(t, flat, {1, m * p}),
                                        1, m * p - 1);
        return ops::sum(t, sliced);
      };
      report_check("transpose+reshape+slice" + dims, gradient_check(fwd, a));
    }
  }

  // Generator battery (Eq. 1-4 surfaces).
  for (int rep = 0; rep < reps; ++rep) {
    const int n = 2 + static_cast<int>(rng.uniform_int(3));
    const int d = 4 + static_cast<int>(rng.uniform_int(4));
    const int k = 3 + static_cast<int>(rng.uniform_int(5));
    const PromptShape shape{n, d};
    Tensor probe = Tensor::randn({n, d}, rng, 1.0);
    for (const char* kind : {"direct", "linear", "lowrank", "mlp"}) {
      auto gen = make_generator(kind, shape, k, 2, 8, rng);
      TaskEmbedding e = make_task_embedding("t", k, rng);
      auto fwd = [&](Tape& t) {
        Tensor r = gen->generate(t, e.e);
        return ops::sum(t, ops::mul(t, r, probe));
      };
      const std::string label = std::string(kind) + " n" + std::to_string(n) +
                                "d" + std::to_string(d) + "k" +
                                std::to_string(k);
      for (const auto& [pname, param] : gen->parameters())
        report_check(label + "/" + pname, gradient_check(fwd, param));
      if (gen->embed_dim() > 0)
        report_check(label + "/e", gradient_check(fwd, e.e));
    }
  }

  std::printf("%d checks, %d failures\n", checked, failures);
  return failures == 0 ? kExitOk : 1;
}

}  // namespace
