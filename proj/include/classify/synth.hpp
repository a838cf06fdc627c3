#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "classify/dataset.hpp"
#include "classify/matrix.hpp"

namespace classify {

// ---- soft impute ------------------------------------------------------------

struct ImputeConfig {
  /// Singular-value shrinkage. Unset picks 0.1 x the largest singular value
  /// of the mean-filled matrix.
  std::optional<double> lambda;
  std::size_t max_iter = 200;
  double tol = 1e-5;
  /// 0 means min(rows, cols).
  std::size_t rank_cap = 0;
  /// Warm starts: solve for a geometric sequence of shrinkages that ends at
  /// `lambda`, starting near the largest singular value. 1 disables.
  std::size_t path_length = 10;

  void validate() const;
  nlohmann::json to_json() const;
};

struct ImputeResult {
  Matrix completed;
  /// The low-rank fit the missing cells were read from.
  Matrix low_rank;
  double lambda = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  /// Objective 0.5*|P(X - Z)|^2 + lambda*|Z|_* after each iteration at the
  /// final shrinkage.
  std::vector<double> objective;
};

/// NaN cells are missing. Observed cells come back bit-identical.
/// Throws EmptyColumn when a column has no observed value.
ImputeResult soft_impute_detailed(const Matrix& X, const ImputeConfig& config = {});
Matrix soft_impute(const Matrix& X, const ImputeConfig& config = {});

/// Fills MISSING feature cells of a dataset. Fitted on one dataset (the
/// training rows) and then applied to others without refitting, so rows
/// passed to `transform` never influence the fit.
class DatasetImputer {
 public:
  /// Returns `train` with every missing cell filled.
  Dataset fit_transform(const Dataset& train, const ImputeConfig& config = {});
  /// Fills missing cells of `rows` from the fitted low-rank structure.
  Dataset transform(const Dataset& rows) const;

  bool fitted() const { return fitted_; }
  double lambda() const { return lambda_; }

 private:
  struct Block {
    std::size_t column;  // feature column
    std::size_t first;   // first encoded column
    std::size_t width;   // one-hot width (1 for numerical / boolean)
    double mean = 0.0, scale = 1.0;
  };
  Matrix encode(const FeatureTable& features) const;
  void decode_into(const Matrix& filled, Dataset& out) const;

  bool fitted_ = false;
  double lambda_ = 0.0;
  std::vector<Block> blocks_;
  std::vector<std::string> names_;
  std::size_t width_ = 0;
  /// Row-space basis scaled by singular values (rank x encoded width).
  Matrix basis_;
  Vector column_means_;
};

// ---- Gaussian copula ---------------------------------------------------------

struct Marginal {
  ColumnType type = ColumnType::numerical;
  /// Numerical: sorted observed values.
  std::vector<double> sorted;
  /// Categorical/boolean: cumulative frequency per code; the last is 1.
  std::vector<double> cumulative;

  /// Value -> probability in (0, 1).
  double to_uniform(double value) const;
  /// Probability -> value; numerical results stay inside the observed range.
  double from_uniform(double u) const;
};

struct ClassCopula {
  int label = 0;
  std::size_t n_rows = 0;
  std::vector<Marginal> marginals;
  /// Correlation of the latent normal scores: symmetric, unit diagonal, PSD.
  Matrix correlation;
  /// factor * factor^T == correlation.
  Matrix factor;
};

struct CopulaModel {
  std::vector<Column> schema;  // names, types and category dictionaries; no values
  std::vector<std::string> class_names;
  DatasetMeta meta;
  std::vector<ClassCopula> classes;

  const ClassCopula& for_class(int label) const;
  nlohmann::json to_json() const;
};

/// Throws ClassTooSmall (fewer than 5 rows in a class), MissingValuesPresent.
CopulaModel fit_copula(const Dataset& ds, const DatasetMeta& meta);

/// Seed-deterministic rows of one class with fresh index identifiers
/// `<prefix><k>`. Throws UnknownClass.
Dataset sample(const CopulaModel& model, int class_label, std::size_t n, std::uint64_t seed,
               const std::string& index_prefix = "synthetic-");

/// Projects a symmetric matrix onto PSD matrices with unit diagonal by
/// clipping eigenvalues at zero.
Matrix nearest_correlation(const Matrix& m);

/// Pluggable generator; the copula is the only built-in one.
class Synthesizer {
 public:
  virtual ~Synthesizer() = default;
  virtual std::string name() const = 0;
  virtual void fit(const Dataset& ds, const DatasetMeta& meta) = 0;
  virtual Dataset sample(int class_label, std::size_t n, std::uint64_t seed,
                         const std::string& index_prefix) const = 0;
};

inline constexpr std::string_view kDefaultSynthesizer = "gaussian_copula";

/// Throws InvalidSpec for unknown names.
std::unique_ptr<Synthesizer> make_synthesizer(std::string_view name = kDefaultSynthesizer);
std::vector<std::string> synthesizer_names();

struct Balanced {
  Dataset augmented;
  Dataset synthetic;
};

/// Tops every class up to the majority count. Original rows come first.
Balanced balance(const Dataset& ds, const DatasetMeta& meta, std::uint64_t seed,
                 std::string_view synthesizer = kDefaultSynthesizer);

/// A fully synthetic dataset of the same size with classes as equal as
/// possible; the remainder goes to the lowest class codes.
Dataset generate_full(const Dataset& ds, const DatasetMeta& meta, std::uint64_t seed,
                      std::string_view synthesizer = kDefaultSynthesizer);

/// Per-class row counts for generate_full.
std::vector<std::size_t> equal_class_counts(std::size_t n_rows, std::size_t n_classes);

// ---- quality -----------------------------------------------------------------

struct SynthQuality {
  double column_shapes = 1.0;
  double column_pair_trends = 1.0;
  double overall = 1.0;
  std::map<std::string, double> per_column;
  /// "a|b" -> score, one per unordered feature pair.
  std::map<std::string, double> per_pair;

  nlohmann::json to_json() const;
  static SynthQuality from_json(const nlohmann::json& doc);
};

/// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> a, std::vector<double> b);

/// Throws SchemaMismatch when feature names or types differ.
SynthQuality quality(const Dataset& real, const Dataset& synth, const DatasetMeta& meta);

}  // namespace classify
