// Experiment runner: the five task regimes over a dataset or a synthetic SBM,
// event generation, per-timestamp evaluation, report emission, and parameter
// sweeps. The canonical CSV artifacts are deterministic for a fixed config;
// wall-clock timings go to the JSON report only.

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bgml/engine.hpp"
#include "bgml/metrics.hpp"

namespace bgml {

enum class TaskRegime { Regular, Memory, Unlearning, DataIncremental, ClassIncremental };

std::string to_string(TaskRegime r);
TaskRegime regime_from_string(const std::string& s);

struct RunConfig {
  // Dataset: TSV files when nodes_file is set, otherwise a generated SBM.
  std::string nodes_file;
  std::string edges_file;
  int sbm_blocks = 3;
  int sbm_per_block = 100;
  double sbm_p_in = 0.1;
  double sbm_p_out = 0.01;
  int sbm_feature_dim = 16;
  double sbm_signal = 2.0;
  std::uint64_t sbm_seed = 7;

  EngineConfig engine;

  double train_frac = 0.8;
  double valid_frac_of_train = 0.1;
  std::uint64_t split_seed = 3;

  TaskRegime regime = TaskRegime::Regular;
  int timestamps = 5;
  int fr_per_t = 0;
  int ir_per_t = 0;
  std::vector<int> withheld_classes;  // class-incremental; default: highest class
  std::uint64_t events_seed = 4;
  std::string events_file;  // overrides the generators when set

  std::string out_dir;       // empty: no artifacts written
  int checkpoint_every = 0;  // also snapshot state every N timestamps (0 = final only)

  bool use_files() const { return !nodes_file.empty(); }
};

struct TimestampMetrics {
  int t = 0;
  double micro_f1 = 0.0;
  double wall_ms = 0.0;
  std::map<int, double> class_acc;
  int n_eval = 0;
};

struct MetricsReport {
  std::vector<TimestampMetrics> rows;
  std::vector<double> forgetting;  // parallel to rows
  double baseline_majority_f1 = 0.0;
  double baseline_logistic_f1 = 0.0;
};

MetricsReport run_task(const RunConfig& config);

struct SweepRow {
  std::string axis;
  double value = 0.0;
  double micro_f1 = 0.0;  // final timestamp
  bool failed = false;
  std::string error;
};

// axis in {k, l, tau, mu, fr, ir}; failed values are recorded and skipped.
std::vector<SweepRow> sweep(const RunConfig& base, const std::string& axis,
                            const std::vector<double>& values);

void write_report_csv(const MetricsReport& report, const std::string& path);
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);
std::string report_to_json(const RunConfig& config, const MetricsReport& report);

struct ConvertReport {
  std::size_t nodes = 0;
  std::size_t edges = 0;
  std::size_t dropped_dangling = 0;
  int feat_dim = 0;
  int num_classes = 0;
};

// Converts a whitespace-separated content/cites pair (one node with features
// and a label string per content line; one citation pair per cites line) into
// the TSV dataset formats.
ConvertReport convert_content_cites(const std::string& content_path,
                                    const std::string& cites_path,
                                    const std::string& out_nodes_path,
                                    const std::string& out_edges_path);

}  // namespace bgml
