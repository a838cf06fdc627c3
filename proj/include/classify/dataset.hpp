#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace classify {

enum class ColumnType { numerical, categorical, boolean, id };

std::string_view to_string(ColumnType type);
/// Throws Error{MetadataMismatch} on an unknown token.
ColumnType column_type_from_string(std::string_view token);

enum class MetaSource { user_provided, inferred };

struct ColumnMeta {
  std::string name;
  ColumnType type;

  bool operator==(const ColumnMeta&) const = default;
};

/// Per-column type declarations, in header order. Includes the index and
/// class columns.
struct DatasetMeta {
  std::vector<ColumnMeta> columns;
  MetaSource source = MetaSource::inferred;

  std::optional<ColumnType> type_of(std::string_view name) const;

  /// `{"columns": {"<name>": "numerical"|"categorical"|"boolean"|"id"}}`,
  /// keys in header order.
  nlohmann::ordered_json to_json() const;
  /// Parses user metadata. Column order follows the JSON object; callers
  /// that need header order go through parse_csv / validate_metadata.
  static DatasetMeta from_json(const nlohmann::json& doc);
  static DatasetMeta from_json_text(std::string_view text);

  bool operator==(const DatasetMeta&) const = default;
};

/// MISSING is a quiet NaN in feature storage. No valid cell is ever NaN.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return std::isnan(v); }

struct Column {
  std::string name;
  ColumnType type = ColumnType::numerical;
  /// numerical: the value; categorical: code into `categories`;
  /// boolean: 0 or 1. MISSING as kMissing.
  std::vector<double> values;
  /// Category tokens (categorical columns only); parse_csv sorts them.
  std::vector<std::string> categories;

  std::size_t missing_count() const;
};

/// Column-major feature cells.
class FeatureTable {
 public:
  FeatureTable() = default;
  explicit FeatureTable(std::vector<Column> columns);

  std::size_t n_rows() const { return columns_.empty() ? 0 : columns_.front().values.size(); }
  std::size_t n_columns() const { return columns_.size(); }
  const std::vector<Column>& columns() const { return columns_; }
  std::vector<Column>& columns() { return columns_; }
  const Column& column(std::size_t j) const { return columns_[j]; }
  Column& column(std::size_t j) { return columns_[j]; }

  std::optional<std::size_t> find(std::string_view name) const;
  std::vector<std::string> names() const;
  bool has_missing() const;
  std::size_t missing_count() const;

  FeatureTable take_rows(std::span<const std::size_t> rows) const;
  /// Subset of columns by name, in the given order. Throws SchemaMismatch.
  FeatureTable select(std::span<const std::string> names) const;
  /// Appends the rows of `other`, whose schema must match.
  void append(const FeatureTable& other);

 private:
  std::vector<Column> columns_;
};

struct Dataset {
  std::vector<std::string> index;
  /// Encoded 0..C-1; encoding order is the sorted order of `class_names`.
  std::vector<int> labels;
  std::vector<std::string> class_names;
  FeatureTable features;
  DatasetMeta meta;

  std::size_t n_rows() const { return labels.size(); }
  std::size_t n_classes() const { return class_names.size(); }
  std::vector<std::size_t> class_counts() const;

  Dataset take_rows(std::span<const std::size_t> rows) const;
  /// Keeps only the named features; meta is narrowed to match.
  Dataset select_features(std::span<const std::string> names) const;
  /// Appends rows of `other` (same schema and class names).
  void append(const Dataset& other);

  /// Cell-for-cell equality, MISSING equal to MISSING.
  bool same_cells(const Dataset& other) const;
};

/// Parses a comma-delimited, double-quote-escaped CSV with a header row.
/// Without `meta`, column types are inferred from the tokens; with `meta`,
/// declared types are enforced and categorical columns may carry arbitrary
/// tokens.
Dataset parse_csv(std::string_view raw, const DatasetMeta* meta = nullptr);

/// Serializes in the input dialect, columns in `meta` order.
std::string to_csv(const Dataset& ds);

struct InferredMeta {
  DatasetMeta meta;
  std::vector<std::string> warnings;
};

InferredMeta infer_metadata(const Dataset& ds);

/// Throws MetadataMismatch on name/type problems, returns heuristic warnings.
std::vector<std::string> validate_metadata(const Dataset& ds, const DatasetMeta& meta);

/// True for numerical columns that hold few distinct integer values.
bool looks_integer_coded(const Column& column);

struct SplitSpec {
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
  bool stratified = true;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

SplitIndices split_indices(std::span<const int> labels, std::size_t n_classes,
                           const SplitSpec& spec);

struct TrainTest {
  Dataset train;
  Dataset test;
};

TrainTest split(const Dataset& ds, const SplitSpec& spec);

/// Re-encodes `ds` onto the class names and category dictionaries of
/// `reference` (an external test set onto the training encoding). Throws
/// UnknownClass for labels the reference lacks and SchemaMismatch when the
/// feature columns differ. Unseen category tokens are appended to the
/// dictionary.
Dataset align_encoding(const Dataset& ds, const Dataset& reference);

}  // namespace classify
