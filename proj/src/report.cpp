#include "spt/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "spt/errors.hpp"

namespace spt {

namespace {

std::string full_precision(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string two_decimals(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string join_tasks(const std::vector<std::string>& ids) {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out += "+";
    out += ids[i];
  }
  return out;
}

}  // namespace

std::vector<MetricRow> collect_rows(const std::vector<RunRecord>& records) {
  std::vector<MetricRow> rows;
  for (const auto& r : records) {
    for (const auto& e : r.evals) {
      rows.push_back({r.experiment, r.generator, e.task_id, r.lr, r.seed,
                      e.step, e.split, e.metric, e.value});
    }
  }
  std::sort(rows.begin(), rows.end(), [](const MetricRow& a, const MetricRow& b) {
    return std::tie(a.generator, a.task, a.lr, a.seed, a.step, a.split,
                    a.metric) < std::tie(b.generator, b.task, b.lr, b.seed,
                                         b.step, b.split, b.metric);
  });
  return rows;
}

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<MetricRow>& rows) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "experiment,generator,task,lr,seed,step,split,metric,value\n";
  for (const auto& r : rows) {
    out << r.experiment << ',' << r.generator << ',' << r.task << ','
        << full_precision(r.lr) << ',' << r.seed << ',' << r.step << ','
        << r.split << ',' << r.metric << ',' << full_precision(r.value)
        << '\n';
  }
}

std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw FormatError(path.string() + ": empty metrics file");
  if (line != "experiment,generator,task,lr,seed,step,split,metric,value")
    throw FormatError(path.string() + ": unexpected header '" + line + "'");
  std::vector<MetricRow> rows;
  int64_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 9)
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": expected 9 fields, got " +
                        std::to_string(fields.size()));
    MetricRow r;
    r.experiment = fields[0];
    r.generator = fields[1];
    r.task = fields[2];
    r.lr = std::stod(fields[3]);
    r.seed = std::stoull(fields[4]);
    r.step = std::stoll(fields[5]);
    r.split = fields[6];
    r.metric = fields[7];
    r.value = std::stod(fields[8]);
    rows.push_back(std::move(r));
  }
  return rows;
}

CellStats cell_stats(const std::vector<double>& values) {
  CellStats s;
  s.n = static_cast<int>(values.size());
  if (values.empty()) return s;
  double total = 0;
  for (double v : values) total += v;
  s.mean = total / static_cast<double>(values.size());
  if (values.size() >= 2) {
    double sq = 0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(values.size()));
  }
  return s;
}

std::string format_cell(const CellStats& stats) {
  if (stats.n == 0) return "failed";
  std::string out = two_decimals(stats.mean);
  if (stats.stddev) out += "_" + two_decimals(*stats.stddev);
  return out;
}

std::map<std::string, std::map<std::string, CellStats>> aggregate_test_scores(
    const std::vector<RunRecord>& records) {
  // generator -> task -> seed values
  std::map<std::string, std::map<std::string, std::vector<double>>> acc;
  for (const auto& r : records) {
    if (r.status.rfind("failed", 0) == 0) {
      for (const auto& id : r.task_ids) acc[r.generator][id];
      continue;
    }
    for (const auto& [task, v] : r.test_scores) acc[r.generator][task].push_back(v);
  }
  std::map<std::string, std::map<std::string, CellStats>> out;
  for (const auto& [gen, tasks] : acc)
    for (const auto& [task, values] : tasks)
      out[gen][task] = cell_stats(values);
  return out;
}

std::string render_results_table(const std::vector<RunRecord>& records) {
  const auto stats = aggregate_test_scores(records);
  std::set<std::string> task_set;
  for (const auto& [gen, tasks] : stats)
    for (const auto& [task, cell] : tasks) task_set.insert(task);

  // Best mean per task among generators, for bolding.
  std::map<std::string, double> best;
  for (const auto& task : task_set) {
    double mx = -1;
    for (const auto& [gen, tasks] : stats) {
      auto it = tasks.find(task);
      if (it != tasks.end() && it->second.n > 0)
        mx = std::max(mx, it->second.mean);
    }
    best[task] = mx;
  }

  std::ostringstream md;
  md << "| generator |";
  for (const auto& task : task_set) md << ' ' << task << " |";
  md << "\n|---|";
  for (size_t i = 0; i < task_set.size(); ++i) md << "---|";
  md << "\n";
  for (const auto& [gen, tasks] : stats) {
    md << "| " << gen << " |";
    for (const auto& task : task_set) {
      auto it = tasks.find(task);
      if (it == tasks.end()) {
        md << " - |";
        continue;
      }
      const std::string cell = format_cell(it->second);
      const bool is_best =
          it->second.n > 0 && it->second.mean == best[task];
      md << ' ' << (is_best ? "**" + cell + "**" : cell) << " |";
    }
    md << "\n";
  }
  return md.str();
}

std::string render_report(const std::vector<RunRecord>& records) {
  std::ostringstream md;
  md << "# Results\n\n";
  md << render_results_table(records) << "\n";
  md << "## Runs\n\n";
  md << "| generator | task | lr | seed | status | best_dev | test |\n";
  md << "|---|---|---|---|---|---|---|\n";
  std::vector<const RunRecord*> sorted;
  for (const auto& r : records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const RunRecord* a, const RunRecord* b) {
              return std::tie(a->generator, a->task_ids, a->lr, a->seed) <
                     std::tie(b->generator, b->task_ids, b->lr, b->seed);
            });
  for (const auto* r : sorted) {
    double mean_test = 0;
    int n = 0;
    for (const auto& [task, v] : r->test_scores) {
      mean_test += v;
      ++n;
    }
    if (n > 0) mean_test /= n;
    md << "| " << r->generator << " | " << join_tasks(r->task_ids) << " | "
       << full_precision(r->lr) << " | " << r->seed << " | " << r->status
       << " | " << two_decimals(r->best_dev) << " | "
       << (n > 0 ? two_decimals(mean_test) : std::string("-")) << " |\n";
  }
  return md.str();
}

std::vector<RunRecord> load_records(const std::filesystem::path& out_dir) {
  std::vector<RunRecord> records;
  const auto runs = out_dir / "runs";
  if (!std::filesystem::exists(runs)) return records;
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(runs))
    if (entry.is_directory() &&
        std::filesystem::exists(entry.path() / "record.json"))
      dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    std::ifstream in(dir / "record.json", std::ios::binary);
    if (!in) throw IoError("cannot read " + (dir / "record.json").string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError((dir / "record.json").string() + ": " + e.what());
    }
    records.push_back(RunRecord::from_json(j));
  }
  return records;
}

}  // namespace spt
