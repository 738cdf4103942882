#include "spt/tasks.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "spt/errors.hpp"

namespace spt {

using json = nlohmann::json;

namespace {

constexpr const char* kLetters = "abcdefghijklmnopqrstuvwxyz";
constexpr const char* kDigits = "0123456789";
constexpr const char* kBits = "01";
constexpr const char* kKvKeys = "abcdefghij";

std::string resolve_alphabet(const std::string& name) {
  if (name == "letters") return kLetters;
  if (name == "digits") return kDigits;
  if (name == "bits") return kBits;
  return name;  // literal character set
}

std::string random_string(Rng& rng, const std::string& alphabet, int len) {
  std::string s(static_cast<size_t>(len), ' ');
  for (auto& c : s)
    c = alphabet[static_cast<size_t>(
        rng.uniform_int(static_cast<int64_t>(alphabet.size())))];
  return s;
}

StringExample draw_example(const TaskSpec& spec, const std::string& alphabet,
                           Rng& rng) {
  const int len = spec.min_len + static_cast<int>(rng.uniform_int(
                                     spec.max_len - spec.min_len + 1));
  switch (spec.kind) {
    case TaskKind::Copy: {
      std::string x = random_string(rng, alphabet, len);
      return {x, x};
    }
    case TaskKind::Reverse: {
      std::string x = random_string(rng, alphabet, len);
      return {x, std::string(x.rbegin(), x.rend())};
    }
    case TaskKind::SortDigits: {
      std::string x = random_string(rng, alphabet, len);
      std::string y = x;
      std::sort(y.begin(), y.end());
      return {x, y};
    }
    case TaskKind::ParityClassify: {
      std::string x = random_string(rng, alphabet, len);
      const auto ones = std::count(x.begin(), x.end(), '1');
      return {x, ones % 2 == 1 ? "odd" : "even"};
    }
    case TaskKind::KeyValueLookup: {
      // len = number of key/value pairs; two-part input "<pairs>|<query key>".
      std::string keys = kKvKeys;
      shuffle(keys, rng);
      std::string x;
      std::vector<char> values(static_cast<size_t>(len));
      for (int i = 0; i < len; ++i) {
        values[static_cast<size_t>(i)] =
            kDigits[static_cast<size_t>(rng.uniform_int(10))];
        x.push_back(keys[static_cast<size_t>(i)]);
        x.push_back(values[static_cast<size_t>(i)]);
      }
      const int q = static_cast<int>(rng.uniform_int(len));
      x.push_back('|');
      x.push_back(keys[static_cast<size_t>(q)]);
      return {x, std::string(1, values[static_cast<size_t>(q)])};
    }
  }
  throw ConfigError("unhandled task kind");
}

}  // namespace

TaskKind task_kind_from_string(const std::string& name) {
  if (name == "copy") return TaskKind::Copy;
  if (name == "reverse") return TaskKind::Reverse;
  if (name == "sort-digits") return TaskKind::SortDigits;
  if (name == "parity-classify") return TaskKind::ParityClassify;
  if (name == "key-value-lookup") return TaskKind::KeyValueLookup;
  throw ConfigError("unknown task kind '" + name +
                    "' (expected copy, reverse, sort-digits, parity-classify "
                    "or key-value-lookup)");
}

std::string task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::Copy: return "copy";
    case TaskKind::Reverse: return "reverse";
    case TaskKind::SortDigits: return "sort-digits";
    case TaskKind::ParityClassify: return "parity-classify";
    case TaskKind::KeyValueLookup: return "key-value-lookup";
  }
  return "?";
}

void TaskSpec::apply_kind_defaults() {
  if (task_id.empty()) task_id = task_kind_name(kind);
  if (alphabet.empty()) {
    switch (kind) {
      case TaskKind::Copy:
      case TaskKind::Reverse: alphabet = "letters"; break;
      case TaskKind::SortDigits: alphabet = "digits"; break;
      case TaskKind::ParityClassify: alphabet = "bits"; break;
      case TaskKind::KeyValueLookup: alphabet = "digits"; break;
    }
  }
  if (min_len == 0 || max_len == 0) {
    switch (kind) {
      case TaskKind::Copy:
      case TaskKind::Reverse:
      case TaskKind::SortDigits:
        min_len = 3;
        max_len = 8;
        break;
      case TaskKind::ParityClassify:
        min_len = 4;
        max_len = 12;
        break;
      case TaskKind::KeyValueLookup:
        min_len = 2;  // pairs
        max_len = 4;
        break;
    }
  }
}

TaskDataset make_task(const TaskSpec& raw) {
  TaskSpec spec = raw;
  spec.apply_kind_defaults();
  if (spec.min_len < 1 || spec.max_len < spec.min_len)
    throw ConfigError("task '" + spec.task_id + "': bad length range [" +
                      std::to_string(spec.min_len) + ", " +
                      std::to_string(spec.max_len) + "]");
  if (spec.train_size < 1 || spec.dev_size < 0 || spec.test_size < 0)
    throw ConfigError("task '" + spec.task_id + "': bad split sizes");

  const std::string alphabet = resolve_alphabet(spec.alphabet);
  Rng rng(Rng::mix(spec.seed, 0x7461736bull));  // "task"
  const int64_t want = spec.train_size + spec.dev_size + spec.test_size;

  std::vector<StringExample> pool;
  pool.reserve(static_cast<size_t>(want));
  std::unordered_set<std::string> seen;
  int64_t attempts = 0;
  const int64_t max_attempts = want * 1000;
  while (static_cast<int64_t>(pool.size()) < want) {
    if (++attempts > max_attempts)
      throw ConfigError("task '" + spec.task_id +
                        "': input space too small for requested sizes");
    StringExample ex = draw_example(spec, alphabet, rng);
    if (!seen.insert(ex.input).second) continue;
    pool.push_back(std::move(ex));
  }

  TaskDataset ds;
  ds.spec = spec;
  auto it = pool.begin();
  ds.train.assign(it, it + spec.train_size);
  it += spec.train_size;
  ds.dev.assign(it, it + spec.dev_size);
  it += spec.dev_size;
  ds.test.assign(it, it + spec.test_size);
  return ds;
}

namespace {

void write_split(const std::filesystem::path& path,
                 const std::vector<StringExample>& split) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& ex : split) out << ex.input << '\t' << ex.target << '\n';
}

std::vector<StringExample> read_split(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<StringExample> out;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": missing tab separator");
    out.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return out;
}

}  // namespace

void write_dataset(const TaskDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_split(dir / "train.tsv", ds.train);
  write_split(dir / "dev.tsv", ds.dev);
  write_split(dir / "test.tsv", ds.test);
  json j{{"task_id", ds.spec.task_id},
         {"kind", task_kind_name(ds.spec.kind)},
         {"seed", ds.spec.seed},
         {"min_len", ds.spec.min_len},
         {"max_len", ds.spec.max_len},
         {"alphabet", ds.spec.alphabet},
         {"train_size", ds.spec.train_size},
         {"dev_size", ds.spec.dev_size},
         {"test_size", ds.spec.test_size},
         {"metric", ds.spec.metric}};
  std::ofstream out(dir / "task.json", std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / "task.json").string());
  out << j.dump(2) << '\n';
}

TaskDataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "task.json", std::ios::binary);
  if (!in) throw IoError("cannot read " + (dir / "task.json").string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError((dir / "task.json").string() + ": " + e.what());
  }
  TaskDataset ds;
  ds.spec.task_id = j.at("task_id").get<std::string>();
  ds.spec.kind = task_kind_from_string(j.at("kind").get<std::string>());
  ds.spec.seed = j.at("seed").get<uint64_t>();
  ds.spec.min_len = j.at("min_len").get<int>();
  ds.spec.max_len = j.at("max_len").get<int>();
  ds.spec.alphabet = j.at("alphabet").get<std::string>();
  ds.spec.train_size = j.at("train_size").get<int>();
  ds.spec.dev_size = j.at("dev_size").get<int>();
  ds.spec.test_size = j.at("test_size").get<int>();
  ds.spec.metric = j.at("metric").get<std::string>();
  ds.train = read_split(dir / "train.tsv");
  ds.dev = read_split(dir / "dev.tsv");
  ds.test = read_split(dir / "test.tsv");
  return ds;
}

std::vector<int> tokenize(const std::string& text) {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (unsigned char c : text) ids.push_back(static_cast<int>(c));
  return ids;
}

std::string detokenize(const std::vector<int>& ids) {
  std::string s;
  s.reserve(ids.size());
  for (int id : ids) s.push_back(static_cast<char>(static_cast<unsigned char>(id)));
  return s;
}

Example to_example(const StringExample& ex) {
  return Example{tokenize(ex.input), tokenize(ex.target)};
}

std::vector<int> top_frequent_tokens(const std::vector<StringExample>& data,
                                     int n) {
  std::map<int, int64_t> counts;
  for (const auto& ex : data) {
    for (unsigned char c : ex.input) ++counts[static_cast<int>(c)];
    for (unsigned char c : ex.target) ++counts[static_cast<int>(c)];
  }
  std::vector<std::pair<int, int64_t>> ranked(counts.begin(), counts.end());
  // Stable on id order already; sort by count descending, lower id wins ties.
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<int> out;
  for (const auto& [id, cnt] : ranked) {
    if (static_cast<int>(out.size()) == n) break;
    out.push_back(id);
  }
  return out;
}

MultiTaskMixer::MultiTaskMixer(std::vector<int64_t> task_sizes, int batch_size,
                               uint64_t seed)
    : sizes_(std::move(task_sizes)), batch_size_(batch_size), seed_(seed) {
  if (sizes_.empty()) throw ConfigError("mixer needs at least one task");
  for (int64_t s : sizes_)
    if (s < 1) throw ConfigError("mixer: every task dataset must be nonempty");
  if (batch_size_ < static_cast<int>(sizes_.size()))
    throw ConfigError("mixer: batch size " + std::to_string(batch_size_) +
                      " smaller than task count " +
                      std::to_string(sizes_.size()));
  state_.epoch.assign(sizes_.size(), 0);
  state_.cursor.assign(sizes_.size(), 0);
  perms_.resize(sizes_.size());
  for (size_t t = 0; t < sizes_.size(); ++t) refresh_perm(t);
}

void MultiTaskMixer::refresh_perm(size_t task) {
  auto& perm = perms_[task];
  perm.resize(static_cast<size_t>(sizes_[task]));
  for (int64_t i = 0; i < sizes_[task]; ++i)
    perm[static_cast<size_t>(i)] = i;
  Rng rng(Rng::mix(Rng::mix(seed_, static_cast<uint64_t>(task) + 1),
                   static_cast<uint64_t>(state_.epoch[task])));
  shuffle(perm, rng);
}

std::vector<MultiTaskMixer::Item> MultiTaskMixer::next_batch() {
  const int64_t T = num_tasks();
  const int base = batch_size_ / static_cast<int>(T);
  const int extra = batch_size_ % static_cast<int>(T);
  // Rotate which tasks receive the ceil quota so shares even out over time.
  std::vector<int> quota(static_cast<size_t>(T), base);
  const int64_t start = (state_.batch_index * extra) % T;
  for (int j = 0; j < extra; ++j)
    ++quota[static_cast<size_t>((start + j) % T)];

  std::vector<Item> batch;
  batch.reserve(static_cast<size_t>(batch_size_));
  for (int64_t t = 0; t < T; ++t) {
    for (int j = 0; j < quota[static_cast<size_t>(t)]; ++j) {
      if (state_.cursor[static_cast<size_t>(t)] == sizes_[static_cast<size_t>(t)]) {
        ++state_.epoch[static_cast<size_t>(t)];
        state_.cursor[static_cast<size_t>(t)] = 0;
        refresh_perm(static_cast<size_t>(t));
      }
      batch.push_back(
          {static_cast<int>(t),
           perms_[static_cast<size_t>(t)]
                 [static_cast<size_t>(state_.cursor[static_cast<size_t>(t)]++)]});
    }
  }
  ++state_.batch_index;
  return batch;
}

void MultiTaskMixer::restore(const State& s) {
  if (s.epoch.size() != sizes_.size() || s.cursor.size() != sizes_.size())
    throw FormatError("mixer state does not match task count");
  state_ = s;
  for (size_t t = 0; t < sizes_.size(); ++t) refresh_perm(t);
}

}  // namespace spt
