#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "classify/dataset.hpp"
#include "classify/error.hpp"
#include "classify/explain.hpp"
#include "classify/metrics.hpp"
#include "classify/models.hpp"
#include "classify/synth.hpp"
#include "classify/tuner.hpp"

namespace classify {

enum class Task { binary, multiclass };
enum class SynthMode { none, impute, balance, generate };

std::string_view to_string(Task t);
std::string_view to_string(SynthMode m);

struct FeatureEvalSpec {
  std::vector<std::string> features;
  std::size_t k = 1;
};

struct FeatureEvalCap {
  std::size_t max_combinations = 1000;
};

struct JobSpec {
  std::string dataset_id;
  std::optional<std::string> test_dataset_id;
  double test_fraction = 0.2;
  Task task = Task::binary;
  std::vector<ModelKind> models;
  bool tune = false;
  std::size_t n_iterations = 100;
  std::map<ModelKind, SearchSpace> param_overrides;
  bool shap = false;
  SynthMode synth_mode = SynthMode::none;
  bool save_synthetic = false;
  std::optional<FeatureEvalSpec> feature_eval;
  std::uint64_t seed = 0;

  // Knobs with defaults; rarely set by hand.
  std::string synthesizer = std::string(kDefaultSynthesizer);
  std::size_t shap_max_rows = 100;
  std::size_t shap_background = 50;
  FeatureEvalCap feature_eval_cap;

  nlohmann::json to_json() const;
  /// Throws InvalidSpec naming the offending field.
  static JobSpec from_json(const nlohmann::json& doc);
};

struct FieldError {
  std::string field;
  ErrorCode code = ErrorCode::InvalidSpec;
  std::string message;

  nlohmann::json to_json() const;
};

/// Checks a spec on its own and, when given, against the training dataset
/// (class count, feature names, combination budget). Empty means valid.
std::vector<FieldError> validate_job_spec(const JobSpec& spec, const Dataset* train = nullptr);

struct TuningSummary {
  std::size_t n_trials = 0;
  std::size_t n_pruned = 0;
  std::size_t n_failed = 0;
  double best_validation_score = 0.0;
};

struct ModelReport {
  ModelKind kind = ModelKind::RandomForest;
  bool ok = false;
  std::string failure;
  HyperParams chosen_params;
  MetricSet metrics;
  std::optional<FeatureReport> shap;
  std::string shap_method;
  std::optional<TuningSummary> tuning;
  double train_seconds = 0.0;

  nlohmann::json to_json() const;
  static ModelReport from_json(const nlohmann::json& doc);
};

struct FeatureEvalRow {
  ModelKind kind = ModelKind::RandomForest;
  std::vector<std::string> features;
  MetricSet metrics;
};

struct ArtifactRef {
  std::string name;
  std::string content_type;
};

inline constexpr int kReportFormatVersion = 1;

struct JobReport {
  Task task = Task::binary;
  std::vector<std::string> class_names;
  std::vector<ModelReport> models;
  std::optional<SynthQuality> synth_quality;
  std::vector<FeatureEvalRow> feature_eval_table;
  std::vector<std::string> warnings;
  std::vector<std::size_t> train_class_counts;
  std::vector<std::size_t> test_class_counts;
  std::vector<std::string> plots;
  std::vector<ArtifactRef> artifacts;
  /// Reads of the test rows made before they were opened for scoring.
  std::size_t test_reads_before_scoring = 0;

  bool multiclass() const { return task == Task::multiclass; }
  nlohmann::json to_json() const;
  static JobReport from_json(const nlohmann::json& doc);
};

struct Artifact {
  std::string name;
  std::string content_type;
  std::string bytes;
};

struct JobOutput {
  JobReport report;
  std::vector<Artifact> artifacts;
};

/// Returns a parsed dataset by id; throws DatasetNotFound.
using DatasetProvider = std::function<Dataset(const std::string& id)>;
using LogSink = std::function<void(const std::string& line)>;

/// Test rows behind a gate: reads while closed are counted, so the pipeline
/// can prove it never looked at them before scoring.
class GuardedRows {
 public:
  explicit GuardedRows(Dataset rows) : rows_(std::move(rows)) {}
  const Dataset& read() {
    ++(open_ ? reads_ : early_reads_);
    return rows_;
  }
  void open() { open_ = true; }
  void close() { open_ = false; }
  std::size_t early_reads() const { return early_reads_; }
  /// Replaces the gated rows; only allowed while open.
  void replace(Dataset rows);

 private:
  Dataset rows_;
  bool open_ = false;
  std::size_t reads_ = 0;
  std::size_t early_reads_ = 0;
};

/// Runs one job end to end. Per-model failures are recorded in the report;
/// spec, dataset and synthesis problems throw.
JobOutput run_job(const JobSpec& spec, const DatasetProvider& datasets, const LogSink& log = {});

/// Trains untuned models on every k-subset of the declared features.
/// Sorted by AUC descending, ties by feature names. Throws
/// CombinationBudgetExceeded.
std::vector<FeatureEvalRow> evaluate_feature_subsets(const JobSpec& spec, ModelKind kind,
                                                     const Dataset& train, const Dataset& test,
                                                     const FeatureEvalCap& cap = {});

/// C(n, k), saturating.
std::size_t combination_count(std::size_t n, std::size_t k);

/// Report JSON with timing fields removed, for determinism comparisons.
nlohmann::json without_timings(nlohmann::json report);

}  // namespace classify
