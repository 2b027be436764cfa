#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "focal/acquisition.hpp"
#include "focal/classifier.hpp"
#include "focal/feature_store.hpp"
#include "focal/gmm_memory.hpp"

namespace focal {

inline constexpr const char* kVersionString = "focal 1.0.0";

enum class OracleMode { simulated, interactive };

std::string_view to_string(OracleMode mode);
OracleMode parse_oracle_mode(std::string_view text);

struct ProtocolConfig {
  int pool_size = 5;    // m
  int label_budget = 1; // k
  MemoryConfig memory{};
  double delta = 0.7;
  AcquisitionMode acquisition = AcquisitionMode::combined;
  bool normalize_terms = false;
  ViewPredictor view_predictor = ViewPredictor::gmm;
  TrainConfig train{};
  bool retrain_from_scratch = false;
  int max_increments = 70;
  int eval_every = 1;
  std::uint64_t master_seed = 0;
  OracleMode oracle = OracleMode::simulated;
  // Sequential, fixed-order execution and wall_time_ms written as 0 so
  // metrics files are byte-reproducible.
  bool deterministic = false;
  unsigned threads = 1;

  void validate() const;
};

nlohmann::json to_json(const ProtocolConfig& cfg);

struct IncrementRecord {
  int increment = 0;
  std::vector<std::string> selected_ids;
  std::vector<std::string> selected_labels;
  std::vector<IngestOutcome> outcomes;
  std::size_t learned_objects = 0;
  std::size_t learned_classes = 0;
  std::optional<double> test_accuracy;
  std::optional<double> object_majority_accuracy;
  double avg_incremental_accuracy = 0.0;
  std::size_t component_count = 0;
  std::uint64_t memory_bytes = 0;
  double wall_time_ms = 0.0;
  std::size_t pool_remaining = 0;
  std::vector<ObjectScore> scores; // acquisition table for the drawn pool
};

/// Thrown by an oracle when no label can be obtained (end of input).
class OracleAborted : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class Oracle {
public:
  virtual ~Oracle() = default;
  virtual std::string label(const ObjectInstance& obj) = 0;
};

/// Returns the ground-truth label verbatim.
class SimulatedOracle final : public Oracle {
public:
  std::string label(const ObjectInstance& obj) override { return obj.label; }
};

/// Prompts on `out` and reads one trimmed, non-empty line per object from
/// `in`. Blank lines re-prompt; end of input throws OracleAborted.
class InteractiveOracle final : public Oracle {
public:
  InteractiveOracle(std::istream& in, std::ostream& out) : in_(in), out_(out) {}
  std::string label(const ObjectInstance& obj) override;

private:
  std::istream& in_;
  std::ostream& out_;
};

std::string oracle_label(const ObjectInstance& obj, OracleMode mode, std::istream& in, std::ostream& out);

/// Stable per-increment seed; independent of execution history.
std::uint64_t increment_seed(std::uint64_t master_seed, int increment);

struct RunResult {
  std::vector<IncrementRecord> records;
  bool aborted = false;
  MemoryBank bank;
  ClassifierHead head;
};

using RecordSink = std::function<void(const IncrementRecord&)>;

/// Runs the few-shot continual active learning loop on the dataset's train
/// split, evaluating on its test split. `sink` is called after each increment.
RunResult run(const Dataset& dataset, const ProtocolConfig& cfg, Oracle& oracle, const RecordSink& sink = {});

/// Smallest increment index at which `total_classes` categories are known.
std::optional<int> increments_to_all_classes(const std::vector<IncrementRecord>& records, std::size_t total_classes);

// Metrics CSV
std::string metrics_header();
std::string metrics_row(const IncrementRecord& record);

/// Appends one row per record and flushes after each, so partial runs leave
/// a valid file.
class MetricsWriter {
public:
  explicit MetricsWriter(const std::string& path);
  void append(const IncrementRecord& record);

private:
  std::unique_ptr<std::ostream> out_;
};

std::string scores_header();
std::string scores_rows(const IncrementRecord& record);

// Sweeps
enum class SweepParam { delta, threshold };

std::string_view to_string(SweepParam param);
SweepParam parse_sweep_param(std::string_view text);

struct SweepRun {
  std::uint64_t seed = 0;
  double avg_incremental_accuracy = 0.0;
  double final_accuracy = 0.0;
  std::size_t total_components = 0;
  std::optional<int> increments_to_all;
};

struct SweepRow {
  double value = 0.0;
  std::vector<SweepRun> runs;

  double mean_avg_accuracy() const;
  double std_avg_accuracy() const;
  double mean_final_accuracy() const;
  double mean_components() const;
};

/// Runs the protocol once per (value, seed) with the parameter overridden.
std::vector<SweepRow> sweep(const Dataset& dataset, const ProtocolConfig& cfg, SweepParam param,
                            const std::vector<double>& values, const std::vector<std::uint64_t>& seeds);

std::string sweep_header();
std::string sweep_row(SweepParam param, const SweepRow& row);

} // namespace focal
