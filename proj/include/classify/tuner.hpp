#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "classify/dataset.hpp"
#include "classify/models.hpp"
#include "classify/rng.hpp"

namespace classify {

struct Trial {
  enum class State { running, complete, pruned, failed };

  std::size_t id = 0;
  HyperParams params;
  /// (step, validation score), steps strictly increasing.
  std::vector<std::pair<std::size_t, double>> intermediate;
  State state = State::running;
  /// Set for complete trials; -inf for failed ones.
  double final_score = 0.0;
  std::string error;
  double seconds = 0.0;

  std::optional<double> score_at(std::size_t step) const;
  nlohmann::json to_json() const;
  static Trial from_json(const nlohmann::json& doc);
};

std::string_view to_string(Trial::State s);

struct TunerConfig {
  std::size_t n_iterations = 100;
  std::size_t n_startup_random = 10;
  double gamma = 0.25;
  std::size_t n_candidates = 24;
  bool pruning_enabled = true;
  std::uint64_t seed = 0;
  /// Metric name; empty means AUC (macro one-vs-rest for multiclass).
  std::string objective;
  double validation_fraction = 0.2;
  /// Evaluate the untuned defaults as the first trial.
  bool enqueue_defaults = false;

  /// Throws InvalidSpec on inconsistent settings.
  void validate() const;
  nlohmann::json to_json() const;
};

struct StudyResult {
  HyperParams best_params;
  double best_score = 0.0;
  std::size_t best_trial = 0;
  std::vector<Trial> trials;

  nlohmann::json to_json() const;
};

/// Next parameter set given the trial history. Uniform sampling during
/// startup, then independent per-parameter TPE. Throws EmptySpace.
HyperParams suggest(const SearchSpace& space, const std::vector<Trial>& history, Rng& rng,
                    const TunerConfig& config = {});

/// Median rule: prune when at least five complete trials recorded a score at
/// `step` and this trial's score there is strictly below their median.
bool should_prune(const Trial& trial, const std::vector<Trial>& completed, std::size_t step);

/// Validation objective of a trained model on held-out rows.
std::optional<double> objective_score(const TrainedModel& model, const Dataset& validation,
                                      const std::string& objective);

struct StudyHooks {
  /// After each trial finishes.
  std::function<void(const Trial&)> on_trial;
  /// Polled between trials; true abandons the study.
  std::function<bool()> cancelled;
};

/// Runs `config.n_iterations` sequential trials on a stratified split of
/// `train`. Throws AllTrialsFailed, EmptySpace, ParamOutOfRange.
StudyResult run_study(ModelKind kind, const SearchSpace& space, const Dataset& train,
                      const TunerConfig& config, const StudyHooks& hooks = {});

/// The fixed fit/validation partition a study with this config uses.
TrainTest validation_split(const Dataset& train, const TunerConfig& config);

/// Model seed shared by every trial of a study, so score differences come
/// from parameters alone.
std::uint64_t study_model_seed(std::uint64_t study_seed);

}  // namespace classify
