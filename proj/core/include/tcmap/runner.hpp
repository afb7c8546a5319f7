#pragma once

#include <string>
#include <vector>

#include "tcmap/metrics.hpp"
#include "tcmap/strategies.hpp"
#include "tcmap/world.hpp"

namespace tcmap {

struct RunConfig {
  std::string scenario_path;
  Scenario scenario;  // loaded from scenario_path (or injected directly)
  StrategyConfig strategy;
  FieldConfig field;
  LossWeights loss;
  RenderConfig render;
  MetricsConfig metrics;
  int smooth_patch_count = 64;
  std::uint64_t seed = 1;
  std::string out_dir;  // empty: in-memory record only
  long eval_interval = 25;
  bool write_points = true;
  bool write_checkpoints = true;
};

/// Parses the JSON run configuration (schema_version 1) and loads the
/// referenced scenario. Throws std::runtime_error on malformed input.
RunConfig load_run_config(const std::string& path);

struct EvalRow {
  long step = 0;
  int stage_index = 0;
  MetricsReport report;
};

struct LossRow {
  long step = 0;
  StepLog log;
};

struct RunRecord {
  std::string scenario_name;
  std::string strategy;
  std::uint64_t seed = 0;
  std::vector<LossRow> losses;
  std::vector<EvalRow> evals;
  std::vector<double> wall_ms;  // per step; kept out of the deterministic CSVs
  std::size_t peak_state_bytes = 0;
  std::uint64_t importance_violations = 0;
  bool aborted = false;
  std::string abort_reason;
  long aborted_step = -1;
};

/// Streams the scenario's observations through the configured strategy,
/// evaluating metrics every eval_interval steps plus around stage boundaries.
/// Deterministic for a fixed (config, seed). A strategy numerical failure
/// flushes the partial record and returns with aborted=true.
RunRecord run(const RunConfig& config);

struct ComparisonTable {
  std::vector<std::string> strategies;
  struct Row {
    long step = 0;
    int stage = 0;
    std::string metric;
    std::vector<double> values;
  };
  std::vector<Row> rows;

  std::string to_text() const;
  std::string to_csv() const;
};

/// Aligns per-stage metrics of runs that share scenario and seed, one column
/// per strategy in input order. Mismatched scenarios or seeds are an error.
ComparisonTable compare(const std::vector<RunRecord>& records);

/// Reads a record back from a run output directory (run_meta.json + metrics.csv).
RunRecord load_record(const std::string& dir);

/// Shortest round-trip decimal form; used for all CSV number output so that
/// identical doubles produce identical bytes.
std::string format_double(double v);

}  // namespace tcmap
