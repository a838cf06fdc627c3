#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "classify/matrix.hpp"

namespace classify {

/// Counts M[true][pred]. For two classes, class 1 is the positive class.
class ConfusionCounts {
 public:
  explicit ConfusionCounts(std::size_t n_classes)
      : n_classes_(n_classes), counts_(n_classes * n_classes, 0) {}

  std::size_t n_classes() const { return n_classes_; }
  std::size_t at(std::size_t truth, std::size_t pred) const {
    return counts_[truth * n_classes_ + pred];
  }
  std::size_t& at(std::size_t truth, std::size_t pred) { return counts_[truth * n_classes_ + pred]; }
  std::size_t total() const;
  std::size_t row_sum(std::size_t truth) const;
  std::size_t col_sum(std::size_t pred) const;
  std::size_t trace() const;

  std::size_t tp() const { return at(1, 1); }
  std::size_t fp() const { return at(0, 1); }
  std::size_t tn() const { return at(0, 0); }
  std::size_t fn() const { return at(1, 0); }

 private:
  std::size_t n_classes_;
  std::vector<std::size_t> counts_;
};

/// `n_classes` of 0 means max(label, pred) + 1, at least 2.
ConfusionCounts confusion(std::span<const int> labels, std::span<const int> preds,
                          std::size_t n_classes = 0);

/// UNDEFINED metrics (0/0) are empty optionals and serialize as null.
struct MetricSet {
  bool multiclass = false;
  double accuracy = 0.0;
  std::optional<double> auc;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> npv;
  std::optional<double> ppv;
  std::optional<double> kappa;

  /// Metric names for the task, in reporting order.
  static std::vector<std::string> names(bool multiclass);
  /// Throws UnknownMetric for names outside the task's set.
  std::optional<double> get(std::string_view name) const;

  nlohmann::ordered_json to_json() const;
  static MetricSet from_json(const nlohmann::json& doc);

  bool operator==(const MetricSet&) const = default;
};

/// Mann-Whitney AUC of `scores` for labels in {0,1}. Throws NoPositives or
/// NoNegatives when a class is absent.
double binary_auc(std::span<const double> scores, std::span<const int> labels);

MetricSet binary_metrics(const ConfusionCounts& cc, std::span<const double> scores,
                         std::span<const int> labels);

/// Cohen's kappa; empty when chance agreement is 1.
std::optional<double> cohen_kappa(const ConfusionCounts& cc);

/// Unweighted mean over classes of one-vs-rest AUC. Classes absent from (or
/// universal in) `labels` are skipped; throws AllClassesDegenerate if none remain.
double macro_ovr_auc(const Matrix& scores, std::span<const int> labels);

/// Hard predictions: P(class 1) >= 0.5 for two columns, argmax (lowest index
/// on ties) otherwise.
std::vector<int> predict_labels(const Matrix& proba);

/// Full metric set from a probability table. `multiclass` picks the reported
/// set; an undefined AUC (single-class labels) is left empty.
MetricSet evaluate_probabilities(const Matrix& proba, std::span<const int> labels, bool multiclass);

}  // namespace classify
