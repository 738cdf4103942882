#include "spt/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "spt/checkpoint.hpp"
#include "spt/errors.hpp"
#include "spt/ops.hpp"

namespace spt {

using json = nlohmann::json;

std::string train_mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::Single: return "single";
    case TrainMode::Multi: return "multi";
    case TrainMode::FullFinetune: return "full-finetune";
  }
  return "?";
}

TrainMode train_mode_from_string(const std::string& name) {
  if (name == "single") return TrainMode::Single;
  if (name == "multi") return TrainMode::Multi;
  if (name == "full-finetune") return TrainMode::FullFinetune;
  throw ConfigError("unknown train mode '" + name + "'");
}

void adamw_step(std::vector<NamedTensor>& params, AdamWState& state,
                const AdamWConfig& cfg) {
  for (auto& [name, t] : params) {
    if (!t.has_grad()) continue;  // untouched by the loss: leave bit-identical
    const int64_t n = t.numel();
    const double* g = t.grad();
    for (int64_t i = 0; i < n; ++i) {
      if (!std::isfinite(g[i]))
        throw NumericAbort("non-finite gradient in parameter '" + name +
                           "' at element " + std::to_string(i));
    }
    auto& slot = state.slots[name];
    if (slot.m.empty()) {
      slot.m.assign(static_cast<size_t>(n), 0.0);
      slot.v.assign(static_cast<size_t>(n), 0.0);
    }
    slot.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(slot.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(slot.step));
    double* p = t.data();
    for (int64_t i = 0; i < n; ++i) {
      slot.m[static_cast<size_t>(i)] =
          cfg.beta1 * slot.m[static_cast<size_t>(i)] + (1.0 - cfg.beta1) * g[i];
      slot.v[static_cast<size_t>(i)] = cfg.beta2 * slot.v[static_cast<size_t>(i)] +
                                       (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = slot.m[static_cast<size_t>(i)] / bc1;
      const double vhat = slot.v[static_cast<size_t>(i)] / bc2;
      p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps) +
              cfg.lr * cfg.weight_decay * p[i];
    }
  }
}

void sgd_step(std::vector<NamedTensor>& params, double lr) {
  for (auto& [name, t] : params) {
    if (!t.has_grad()) continue;
    const int64_t n = t.numel();
    const double* g = t.grad();
    double* p = t.data();
    for (int64_t i = 0; i < n; ++i) {
      if (!std::isfinite(g[i]))
        throw NumericAbort("non-finite gradient in parameter '" + name + "'");
      p[i] -= lr * g[i];
    }
  }
}

json RunRecord::to_json() const {
  json evals_j = json::array();
  for (const auto& e : evals)
    evals_j.push_back({{"step", e.step},
                       {"split", e.split},
                       {"task", e.task_id},
                       {"metric", e.metric},
                       {"value", e.value}});
  return json{{"run_id", run_id},
              {"experiment", experiment},
              {"generator", generator},
              {"tasks", task_ids},
              {"lr", lr},
              {"seed", seed},
              {"config", config_snapshot},
              {"losses", losses},
              {"evals", evals_j},
              {"best_step", best_step},
              {"best_dev", best_dev},
              {"test_scores", test_scores},
              {"wall_clock_sec", wall_clock_sec},
              {"status", status},
              {"checkpoint", checkpoint_path}};
}

RunRecord RunRecord::from_json(const json& j) {
  RunRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.experiment = j.at("experiment").get<std::string>();
  r.generator = j.at("generator").get<std::string>();
  r.task_ids = j.at("tasks").get<std::vector<std::string>>();
  r.lr = j.at("lr").get<double>();
  r.seed = j.at("seed").get<uint64_t>();
  r.config_snapshot = j.at("config");
  r.losses = j.at("losses").get<std::vector<double>>();
  for (const auto& e : j.at("evals"))
    r.evals.push_back({e.at("step").get<int64_t>(),
                       e.at("split").get<std::string>(),
                       e.at("task").get<std::string>(),
                       e.at("metric").get<std::string>(),
                       e.at("value").get<double>()});
  r.best_step = j.at("best_step").get<int64_t>();
  r.best_dev = j.at("best_dev").get<double>();
  r.test_scores = j.at("test_scores").get<std::map<std::string, double>>();
  r.wall_clock_sec = j.at("wall_clock_sec").get<double>();
  r.status = j.at("status").get<std::string>();
  r.checkpoint_path = j.at("checkpoint").get<std::string>();
  return r;
}

bool RunRecord::same_results(const RunRecord& other) const {
  if (generator != other.generator || task_ids != other.task_ids ||
      lr != other.lr || seed != other.seed || status != other.status ||
      best_step != other.best_step || best_dev != other.best_dev ||
      losses != other.losses || test_scores != other.test_scores ||
      evals.size() != other.evals.size())
    return false;
  for (size_t i = 0; i < evals.size(); ++i) {
    const auto& a = evals[i];
    const auto& b = other.evals[i];
    if (a.step != b.step || a.split != b.split || a.task_id != b.task_id ||
        a.metric != b.metric || a.value != b.value)
      return false;
  }
  return true;
}

double score_decode(const std::string& decoded, const std::string& target,
                    const std::string& metric) {
  if (metric == "exact_match") return decoded == target ? 1.0 : 0.0;
  if (metric == "token_accuracy") {
    if (target.empty()) return decoded.empty() ? 1.0 : 0.0;
    const size_t upto = std::min(decoded.size(), target.size());
    int64_t hits = 0;
    for (size_t i = 0; i < upto; ++i)
      if (decoded[i] == target[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(target.size());
  }
  throw ConfigError("unknown metric '" + metric + "'");
}

double evaluate(const Seq2SeqLM& lm, const PromptGenerator& gen,
                const TaskEmbedding& embedding,
                const std::vector<StringExample>& data,
                const std::string& metric) {
  if (data.empty()) throw ConfigError("evaluate: empty dataset");
  Tape inf = Tape::inference();
  Tensor prompt = gen.generate(inf, embedding.e);
  size_t longest = 0;
  for (const auto& ex : data) longest = std::max(longest, ex.target.size());
  const int cap = static_cast<int>(longest) + 2;
  double total = 0.0;
  for (const auto& ex : data) {
    const std::vector<int> ids = tokenize(ex.input);
    const std::vector<int> out = lm.greedy_decode(prompt, ids, cap);
    total += score_decode(detokenize(out), ex.target, metric);
  }
  return total / static_cast<double>(data.size());
}

void init_direct_prompt_from_corpus(
    DirectGenerator& gen, const Seq2SeqLM& lm,
    const std::vector<const TaskDataset*>& tasks) {
  std::vector<StringExample> corpus;
  for (const auto* t : tasks)
    corpus.insert(corpus.end(), t->train.begin(), t->train.end());
  const int n = gen.prompt_shape().n;
  const int d = gen.prompt_shape().d;
  if (d != lm.config().embed_dim)
    throw ConfigError("prompt width " + std::to_string(d) +
                      " does not match model embedding dim " +
                      std::to_string(lm.config().embed_dim));
  const std::vector<int> top = top_frequent_tokens(corpus, n);
  if (top.empty()) throw ConfigError("empty corpus for prompt initialization");
  Tensor& prompt = gen.prompt();
  for (int i = 0; i < n; ++i) {
    const int id = top[static_cast<size_t>(i) % top.size()];
    std::copy(lm.embedding().data() + static_cast<int64_t>(id) * d,
              lm.embedding().data() + static_cast<int64_t>(id) * d + d,
              prompt.data() + static_cast<int64_t>(i) * d);
  }
}

Trainer::Trainer(TrainConfig cfg, Seq2SeqLM& lm, PromptGenerator& gen,
                 std::vector<TaskEmbedding>& embeddings,
                 std::vector<const TaskDataset*> tasks)
    : cfg_(cfg), lm_(lm), gen_(gen), embeddings_(embeddings),
      tasks_(std::move(tasks)) {
  if (tasks_.empty()) throw ConfigError("trainer needs at least one task");
  if (embeddings_.size() != tasks_.size())
    throw ConfigError("trainer needs one task embedding per task, got " +
                      std::to_string(embeddings_.size()) + " for " +
                      std::to_string(tasks_.size()) + " tasks");
  if (cfg_.mode != TrainMode::Multi && tasks_.size() != 1)
    throw ConfigError(train_mode_name(cfg_.mode) +
                      " mode expects exactly one task");
  if (cfg_.mode == TrainMode::FullFinetune) {
    lm_.unfreeze();
  } else if (!lm_.frozen()) {
    throw ConfigError("the language model must stay frozen in " +
                      train_mode_name(cfg_.mode) + " mode");
  }
  record_.generator = gen_.kind();
  record_.lr = cfg_.lr;
  record_.seed = cfg_.seed;
  for (const auto* t : tasks_) record_.task_ids.push_back(t->spec.task_id);
}

std::vector<NamedTensor> Trainer::trainable_parameters() const {
  std::vector<NamedTensor> out;
  for (const auto& [name, t] : gen_.parameters())
    out.emplace_back("gen/" + name, t);
  for (const auto& emb : embeddings_)
    out.emplace_back("task_embedding/" + emb.task_id, emb.e);
  if (cfg_.mode == TrainMode::FullFinetune)
    for (const auto& [name, t] : lm_.parameters())
      out.emplace_back("lm/" + name, t);
  return out;
}

double Trainer::step(
    const std::vector<std::pair<int, const StringExample*>>& batch) {
  if (batch.empty()) throw ConfigError("empty batch");
  Tape tape;
  std::vector<std::vector<const StringExample*>> per_task(tasks_.size());
  for (const auto& [ti, ex] : batch) {
    if (ti < 0 || ti >= static_cast<int>(tasks_.size()))
      throw ConfigError("batch references unknown task index " +
                        std::to_string(ti));
    per_task[static_cast<size_t>(ti)].push_back(ex);
  }
  std::vector<Tensor> nlls;
  nlls.reserve(batch.size());
  for (size_t t = 0; t < per_task.size(); ++t) {
    if (per_task[t].empty()) continue;
    Tensor prompt = gen_.generate(tape, embeddings_[t].e);
    for (const auto* ex : per_task[t])
      nlls.push_back(lm_.conditional_nll(tape, prompt, to_example(*ex)));
  }
  Tensor loss = ops::mean_stack(tape, nlls);
  const double value = loss.item();
  if (!std::isfinite(value))
    throw NumericAbort("non-finite training loss: " + std::to_string(value));
  tape.backward(loss);
  auto params = trainable_parameters();
  adamw_step(params, opt_state_,
             {cfg_.lr, cfg_.weight_decay, cfg_.beta1, cfg_.beta2, cfg_.eps});
  for (auto& [name, t] : params) t.drop_grad();
  return value;
}

double Trainer::eval_dev(int64_t step_index) {
  double total = 0.0;
  for (size_t t = 0; t < tasks_.size(); ++t) {
    const double v = evaluate(lm_, gen_, embeddings_[t], tasks_[t]->dev,
                              tasks_[t]->spec.metric);
    record_.evals.push_back({step_index, "dev", tasks_[t]->spec.task_id,
                             tasks_[t]->spec.metric, v});
    total += v;
  }
  const double avg = total / static_cast<double>(tasks_.size());
  if (tasks_.size() > 1)
    record_.evals.push_back({step_index, "dev", "avg", "avg", avg});
  if (record_.best_step < 0 || avg > record_.best_dev) {
    record_.best_step = step_index;
    record_.best_dev = avg;
    best_params_.clear();
    for (const auto& [name, t] : trainable_parameters())
      best_params_.emplace_back(name, t.clone());
  }
  return avg;
}

std::vector<NamedTensor> Trainer::snapshot_trainables() const {
  std::vector<NamedTensor> out;
  for (const auto& [name, t] : trainable_parameters())
    out.emplace_back(name, t.clone());
  return out;
}

void Trainer::save_resume_state(const std::string& path, int64_t step_index,
                                const MultiTaskMixer& mixer) const {
  std::vector<NamedTensor> tensors;
  for (const auto& [name, t] : trainable_parameters())
    tensors.emplace_back("param/" + name, t.clone());
  for (const auto& [name, slot] : opt_state_.slots) {
    tensors.emplace_back("opt/m/" + name,
                         Tensor::from_data({static_cast<int>(slot.m.size())},
                                           slot.m));
    tensors.emplace_back("opt/v/" + name,
                         Tensor::from_data({static_cast<int>(slot.v.size())},
                                           slot.v));
    tensors.emplace_back("opt/t/" + name,
                         Tensor::scalar(static_cast<double>(slot.step)));
  }
  tensors.emplace_back("state/step", Tensor::scalar(static_cast<double>(step_index)));
  tensors.emplace_back("state/best_step",
                       Tensor::scalar(static_cast<double>(record_.best_step)));
  tensors.emplace_back("state/best_dev", Tensor::scalar(record_.best_dev));
  const auto& ms = mixer.state();
  tensors.emplace_back("state/mixer/batch_index",
                       Tensor::scalar(static_cast<double>(ms.batch_index)));
  for (size_t t = 0; t < ms.epoch.size(); ++t) {
    tensors.emplace_back("state/mixer/epoch/" + std::to_string(t),
                         Tensor::scalar(static_cast<double>(ms.epoch[t])));
    tensors.emplace_back("state/mixer/cursor/" + std::to_string(t),
                         Tensor::scalar(static_cast<double>(ms.cursor[t])));
  }
  for (const auto& [name, t] : best_params_)
    tensors.emplace_back("best/" + name, t);
  save_checkpoint(path, tensors, record_.config_snapshot.dump(), cfg_.seed);
}

int64_t Trainer::load_resume_state(const std::string& path,
                                   MultiTaskMixer& mixer) {
  Checkpoint ck = load_checkpoint(path);
  std::vector<NamedTensor> params, best;
  MultiTaskMixer::State ms;
  ms.epoch.assign(tasks_.size(), 0);
  ms.cursor.assign(tasks_.size(), 0);
  int64_t step_index = -1;
  for (auto& [name, t] : ck.tensors) {
    if (name.rfind("param/", 0) == 0) {
      params.emplace_back(name.substr(6), t);
    } else if (name.rfind("best/", 0) == 0) {
      best.emplace_back(name.substr(5), t);
    } else if (name.rfind("opt/m/", 0) == 0) {
      opt_state_.slots[name.substr(6)].m = t.vec();
    } else if (name.rfind("opt/v/", 0) == 0) {
      opt_state_.slots[name.substr(6)].v = t.vec();
    } else if (name.rfind("opt/t/", 0) == 0) {
      opt_state_.slots[name.substr(6)].step =
          static_cast<int64_t>(t.item());
    } else if (name == "state/step") {
      step_index = static_cast<int64_t>(t.item());
    } else if (name == "state/best_step") {
      record_.best_step = static_cast<int64_t>(t.item());
    } else if (name == "state/best_dev") {
      record_.best_dev = t.item();
    } else if (name == "state/mixer/batch_index") {
      ms.batch_index = static_cast<int64_t>(t.item());
    } else if (name.rfind("state/mixer/epoch/", 0) == 0) {
      ms.epoch.at(std::stoul(name.substr(18))) = static_cast<int64_t>(t.item());
    } else if (name.rfind("state/mixer/cursor/", 0) == 0) {
      ms.cursor.at(std::stoul(name.substr(19))) = static_cast<int64_t>(t.item());
    }
  }
  if (step_index < 0)
    throw FormatError("resume checkpoint lacks state/step: " + path);
  load_parameters(trainable_parameters(), params);
  best_params_ = std::move(best);
  mixer.restore(ms);
  return step_index;
}

RunRecord Trainer::run(const std::string& run_dir,
                       const std::optional<std::string>& resume_from) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<int64_t> sizes;
  for (const auto* t : tasks_)
    sizes.push_back(static_cast<int64_t>(t->train.size()));
  MultiTaskMixer mixer(sizes, cfg_.batch_size, Rng::mix(cfg_.seed, 0x6D697865ull));

  int64_t start_step = 0;
  if (resume_from) start_step = load_resume_state(*resume_from, mixer);

  if (record_.config_snapshot.is_null())
    record_.config_snapshot = json{{"mode", train_mode_name(cfg_.mode)},
                                   {"lr", cfg_.lr},
                                   {"weight_decay", cfg_.weight_decay},
                                   {"beta1", cfg_.beta1},
                                   {"beta2", cfg_.beta2},
                                   {"eps", cfg_.eps},
                                   {"batch_size", cfg_.batch_size},
                                   {"steps", cfg_.steps},
                                   {"eval_every", cfg_.eval_every},
                                   {"seed", cfg_.seed},
                                   {"prompt_len", cfg_.prompt_len},
                                   {"task_embed_dim", cfg_.task_embed_dim},
                                   {"generator", cfg_.generator}};

  if (start_step == 0) eval_dev(0);

  std::string abort_reason;
  for (int64_t s = start_step + 1; s <= cfg_.steps; ++s) {
    auto items = mixer.next_batch();
    std::vector<std::pair<int, const StringExample*>> batch;
    batch.reserve(items.size());
    for (const auto& it : items)
      batch.emplace_back(
          it.task_index,
          &tasks_[static_cast<size_t>(it.task_index)]
               ->train[static_cast<size_t>(it.example_index)]);
    try {
      record_.losses.push_back(step(batch));
    } catch (const NumericAbort& e) {
      abort_reason = e.what();
      break;
    }
    if (cfg_.eval_every > 0 && (s % cfg_.eval_every == 0 || s == cfg_.steps))
      eval_dev(s);
    if (!run_dir.empty() && cfg_.checkpoint_every > 0 &&
        s % cfg_.checkpoint_every == 0)
      save_resume_state(run_dir + "/state.ckpt", s, mixer);
  }

  // Score the best-dev parameters on test, even for aborted runs.
  if (!best_params_.empty())
    load_parameters(trainable_parameters(), best_params_);
  for (size_t t = 0; t < tasks_.size(); ++t) {
    if (tasks_[t]->test.empty()) continue;
    const double v = evaluate(lm_, gen_, embeddings_[t], tasks_[t]->test,
                              tasks_[t]->spec.metric);
    record_.test_scores[tasks_[t]->spec.task_id] = v;
    record_.evals.push_back({record_.best_step, "test",
                             tasks_[t]->spec.task_id, tasks_[t]->spec.metric,
                             v});
  }
  record_.status = abort_reason.empty() ? "complete" : "aborted: " + abort_reason;

  record_.wall_clock_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  if (!run_dir.empty()) {
    std::filesystem::create_directories(run_dir);
    const int64_t last_step =
        start_step + static_cast<int64_t>(record_.losses.size());
    save_resume_state(run_dir + "/state.ckpt", last_step, mixer);
    if (!best_params_.empty()) {
      std::vector<NamedTensor> best;
      for (const auto& [name, t] : best_params_) best.emplace_back(name, t);
      record_.checkpoint_path = run_dir + "/best.ckpt";
      save_checkpoint(record_.checkpoint_path, best,
                      record_.config_snapshot.dump(), cfg_.seed);
    }
    std::ofstream out(run_dir + "/record.json", std::ios::binary);
    if (!out) throw IoError("cannot write " + run_dir + "/record.json");
    out << record_.to_json().dump(2) << '\n';
  }
  return record_;
}

}  // namespace spt
