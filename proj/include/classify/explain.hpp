#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "classify/dataset.hpp"
#include "classify/matrix.hpp"
#include "classify/models.hpp"

namespace classify {

/// Scores a batch of rows; one column per explained output.
using BatchPredict = std::function<Matrix(const Matrix& rows)>;

struct ShapMatrix {
  Matrix values;  // rows x features
  double base_value = 0.0;
  /// Model output for each explained row; efficiency means
  /// values.row(i).sum() == outputs[i] - base_value.
  Vector outputs;
  std::vector<std::string> feature_names;

  double efficiency_residual() const;
  nlohmann::json to_json() const;
  static ShapMatrix from_json(const nlohmann::json& doc);
};

/// Closed form for f(x) = w.x + b. Throws DimensionMismatch.
ShapMatrix linear_shap(const Vector& weights, double intercept, const Matrix& X,
                       const Matrix& background, std::vector<std::string> feature_names = {});

inline constexpr std::size_t kMaxExactFeatures = 15;

/// Shapley values by enumerating every coalition; v(S) averages the model
/// over background rows with features outside S taken from the background.
/// Returns features x outputs. Throws TooManyFeatures, DimensionMismatch.
Matrix exact_shap(const BatchPredict& predict, const Vector& x, const Matrix& background);

/// Weighted least-squares approximation with exact efficiency. When
/// `n_samples` covers every proper non-empty coalition they are enumerated
/// and the result is exact. Throws SingularSystem after three reseeded
/// attempts, DimensionMismatch.
Matrix kernel_shap(const BatchPredict& predict, const Vector& x, const Matrix& background,
                   std::size_t n_samples, std::uint64_t seed);

/// Mean output over the background, per output column.
Vector background_mean_output(const BatchPredict& predict, const Matrix& background);

struct FeatureScore {
  std::string name;
  double mean_signed = 0.0;
  double mean_abs = 0.0;
  double percentage = 0.0;
  int sign = 0;
  /// Multiclass only: signed mean per class.
  std::vector<double> class_mean_signed;
};

struct FeatureReport {
  std::vector<FeatureScore> features;

  nlohmann::json to_json() const;
  static FeatureReport from_json(const nlohmann::json& doc);
};

FeatureReport aggregate(const ShapMatrix& shap);
/// Multiclass: magnitudes add across classes; the overall sign is 0 and the
/// per-class signed means are reported instead.
FeatureReport aggregate(const std::vector<ShapMatrix>& per_class);

struct ExplainConfig {
  std::size_t max_background = 100;
  std::size_t max_rows = 500;
  /// 0 picks 2M + 256.
  std::size_t kernel_samples = 0;
  /// Feature counts up to this use full enumeration.
  std::size_t exact_max_features = 10;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

struct ModelExplanation {
  /// "margin" (linear kinds) or "probability".
  std::string target;
  std::string method;
  /// One matrix for binary tasks (positive class), one per class otherwise.
  std::vector<ShapMatrix> shap;
  /// Raw feature values of the explained rows, for coloring beeswarms.
  Matrix feature_values;
  std::vector<std::string> row_index;
  FeatureReport report;

  nlohmann::json to_json() const;
};

/// Explains `model` on (a seeded subsample of) `rows`, with a seeded
/// background sample of `train`.
ModelExplanation explain_model(const TrainedModel& model, const Dataset& train, const Dataset& rows,
                               const ExplainConfig& config);

/// Up to `k` sorted row indices of [0, n), sampled without replacement.
std::vector<std::size_t> sample_rows(std::size_t n, std::size_t k, std::uint64_t seed);

}  // namespace classify
