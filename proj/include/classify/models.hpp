#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "classify/dataset.hpp"
#include "classify/matrix.hpp"

namespace classify {

enum class ModelKind {
  RandomForest,
  GradientBoosting,
  RegularizedGradientBoosting,
  HistogramGradientBoosting,
  Bagging,
  MultiLayerPerceptron,
  StochasticGradientLinear,
  LogisticRegression,
  KNearestNeighbors,
};

/// Every kind, in roster order.
const std::vector<ModelKind>& all_model_kinds();
std::string_view to_string(ModelKind kind);
/// Throws UnknownModel.
ModelKind model_kind_from_string(std::string_view name);
bool supports_multiclass(ModelKind kind);
/// Kinds that report intermediate validation scores and can be pruned.
bool is_iterative(ModelKind kind);

using ParamValue = std::variant<std::int64_t, double, std::string>;
using HyperParams = std::map<std::string, ParamValue>;

nlohmann::json to_json(const ParamValue& v);
nlohmann::json params_to_json(const HyperParams& params);
HyperParams params_from_json(const nlohmann::json& doc);
std::string format_param(const ParamValue& v);

struct ParamRange {
  enum class Domain { integer, real_linear, real_log, categorical };

  std::string name;
  Domain domain = Domain::real_linear;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::string> tokens;

  static ParamRange integer(std::string name, std::int64_t lo, std::int64_t hi);
  static ParamRange real(std::string name, double lo, double hi);
  static ParamRange log_real(std::string name, double lo, double hi);
  static ParamRange categorical(std::string name, std::vector<std::string> tokens);

  bool is_numeric() const { return domain != Domain::categorical; }
  bool contains(const ParamValue& v) const;
  /// Throws ParamOutOfRange when lo >= hi, a log domain has lo <= 0, or a
  /// categorical domain is empty.
  void validate() const;

  nlohmann::json to_json() const;
  static ParamRange from_json(const nlohmann::json& doc);

  bool operator==(const ParamRange&) const = default;
};

using SearchSpace = std::vector<ParamRange>;

/// Tuning ranges used when the user supplies none.
SearchSpace default_search_space(ModelKind kind);
/// Hard limits on every parameter the kind accepts; user-supplied ranges and
/// values must fall inside them.
SearchSpace parameter_limits(ModelKind kind);
/// Untuned defaults.
HyperParams default_params(ModelKind kind);
/// Checks keys and ranges against parameter_limits and fills unset keys from
/// default_params. Throws UnknownParam / ParamOutOfRange.
HyperParams resolve_params(ModelKind kind, const HyperParams& params);

std::int64_t get_int(const HyperParams& p, const std::string& name);
double get_real(const HyperParams& p, const std::string& name);
const std::string& get_token(const HyperParams& p, const std::string& name);

/// Turns feature tables into model inputs. The raw view keeps one column per
/// feature (categoricals as codes into the training dictionary, -1 when
/// unseen); the encoded view one-hot expands categoricals and, optionally,
/// standardizes numerical and boolean columns with training statistics.
class Encoder {
 public:
  struct Feature {
    std::string name;
    ColumnType type = ColumnType::numerical;
    std::vector<std::string> categories;
    double mean = 0.0;
    double scale = 1.0;
  };

  Encoder() = default;
  static Encoder fit(const FeatureTable& train, bool standardize);

  std::size_t n_raw() const { return features_.size(); }
  std::size_t n_encoded() const { return source_.size(); }
  bool standardizes() const { return standardize_; }
  const std::vector<Feature>& features() const { return features_; }
  std::vector<std::string> feature_names() const;
  /// Raw feature index that produced encoded column `k`.
  std::size_t source_of(std::size_t k) const { return source_[k]; }

  /// Throws SchemaMismatch if names/types differ from training.
  Matrix raw_view(const FeatureTable& table) const;
  /// Throws MissingValues if any raw cell is MISSING.
  Matrix encode(const Matrix& raw) const;

  nlohmann::json to_json() const;
  static Encoder from_json(const nlohmann::json& doc);

 private:
  void build_layout();

  std::vector<Feature> features_;
  std::vector<std::size_t> source_;
  std::vector<std::size_t> offset_;
  bool standardize_ = false;
};

/// A fitted learner on encoded inputs. Implementations live under
/// classify/models/.
class Estimator {
 public:
  virtual ~Estimator() = default;
  virtual Matrix predict_proba(const Matrix& encoded) const = 0;
  virtual nlohmann::json to_json() const = 0;
};

/// Affine score over encoded columns: margin = weights . x + intercept.
struct LinearForm {
  Vector weights;
  double intercept = 0.0;
};

class TrainedModel;

/// Called by iterative kinds every few rounds/epochs with the partially
/// trained model. Returning true stops training early.
using FitObserver = std::function<bool(std::size_t step, const TrainedModel& partial)>;

class TrainedModel {
 public:
  TrainedModel(ModelKind kind, HyperParams params, std::size_t n_classes, std::uint64_t seed,
               Encoder encoder, std::vector<std::string> class_names,
               std::unique_ptr<Estimator> estimator);
  TrainedModel(TrainedModel&&) noexcept = default;
  TrainedModel& operator=(TrainedModel&&) noexcept = default;

  ModelKind kind() const { return kind_; }
  const HyperParams& params() const { return params_; }
  std::size_t n_classes() const { return n_classes_; }
  std::uint64_t seed() const { return seed_; }
  const Encoder& encoder() const { return encoder_; }
  const Estimator& estimator() const { return *estimator_; }
  const std::vector<std::string>& class_names() const { return class_names_; }
  std::vector<std::string> feature_names() const { return encoder_.feature_names(); }

  Matrix raw_view(const FeatureTable& rows) const { return encoder_.raw_view(rows); }
  Matrix predict_proba(const FeatureTable& rows) const;
  Matrix predict_proba_raw(const Matrix& raw) const;

  /// Binary linear kinds: the positive-class margin over encoded columns.
  std::optional<LinearForm> linear_margin() const;

  /// Versioned, self-describing artifact.
  nlohmann::json to_json() const;
  static TrainedModel from_json(const nlohmann::json& doc);

 private:
  ModelKind kind_;
  HyperParams params_;
  std::size_t n_classes_;
  std::uint64_t seed_;
  Encoder encoder_;
  std::vector<std::string> class_names_;
  std::unique_ptr<Estimator> estimator_;
};

inline constexpr int kModelFormatVersion = 1;

/// Deterministic in (kind, params, train, seed). Throws MissingValues,
/// UnknownParam, ParamOutOfRange, MulticlassUnsupported, TooFewRows.
TrainedModel fit(ModelKind kind, const HyperParams& params, const Dataset& train,
                 std::uint64_t seed, const FitObserver& observer = {});

}  // namespace classify
