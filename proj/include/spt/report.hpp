#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spt/trainer.hpp"

namespace spt {

// One line of the metrics CSV; the column set is fixed:
// experiment, generator, task, lr, seed, step, split, metric, value
struct MetricRow {
  std::string experiment;
  std::string generator;
  std::string task;
  double lr = 0;
  uint64_t seed = 0;
  int64_t step = 0;
  std::string split;
  std::string metric;
  double value = 0;
};

std::vector<MetricRow> collect_rows(const std::vector<RunRecord>& records);

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);

struct CellStats {
  double mean = 0;
  std::optional<double> stddev;  // absent with fewer than 2 seeds
  int n = 0;
};

CellStats cell_stats(const std::vector<double>& values);

// "0.87_0.02" to two decimals; no std part for a single value.
std::string format_cell(const CellStats& stats);

// Per (generator, task) test-score statistics over seeds.
std::map<std::string, std::map<std::string, CellStats>> aggregate_test_scores(
    const std::vector<RunRecord>& records);

// Markdown table in the generator-rows × task-columns shape with mean_std
// cells; the best mean per task column is bold. Rows and columns are ordered
// lexicographically. Failed cells render as "failed".
std::string render_results_table(const std::vector<RunRecord>& records);

// Full report: results table plus per-run listing; deterministic ordering
// by (generator, task, lr).
std::string render_report(const std::vector<RunRecord>& records);

// All record.json files under dir/runs/, sorted by run id.
std::vector<RunRecord> load_records(const std::filesystem::path& out_dir);

}  // namespace spt
