#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "classify/models.hpp"
#include "classify/rng.hpp"

namespace classify::trees {

/// Flat binary tree. Internal nodes send x[feature] <= threshold left.
/// Leaves hold `leaf_width` values starting at `value_offset`.
struct Tree {
  struct Node {
    std::int32_t feature = -1;
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::int32_t value_offset = -1;
  };

  std::vector<Node> nodes;
  std::vector<double> values;
  std::size_t leaf_width = 1;

  const double* leaf_for(const double* row) const;
  std::size_t depth() const;
  std::size_t leaf_count() const;

  nlohmann::json to_json() const;
  static Tree from_json(const nlohmann::json& doc);
};

struct ClassificationTreeOptions {
  std::size_t max_depth = 32;
  std::size_t min_leaf = 1;
  /// Features examined per split; 0 means all.
  std::size_t max_features = 0;
};

/// CART with Gini impurity. `samples` are row indices and may repeat
/// (bootstrap draws). Leaves store class frequencies.
Tree grow_classification_tree(const Matrix& X, std::span<const int> y, std::size_t n_classes,
                              std::span<const std::size_t> samples,
                              const ClassificationTreeOptions& options, Rng& rng);

struct GradientTreeOptions {
  std::size_t max_depth = 3;
  std::size_t min_leaf = 1;
  double lambda = 0.0;
  double min_child_hessian = 0.0;
  /// Plain gradient boosting finds splits by squared error on the
  /// gradients (unit hessians) and only uses true hessians for leaf values.
  bool unit_hessian_splits = false;
};

/// Regression tree on per-sample gradients/hessians. Split gain is
/// G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda); leaf values are
/// the Newton step -G/(H+lambda).
Tree grow_gradient_tree(const Matrix& X, std::span<const double> grad, std::span<const double> hess,
                        std::span<const std::size_t> samples, const GradientTreeOptions& options);

/// Quantile bins per feature, at most `max_bins` bins.
struct BinMapper {
  std::vector<std::vector<double>> edges;

  static BinMapper fit(const Matrix& X, std::size_t max_bins);
  std::size_t n_bins(std::size_t feature) const { return edges[feature].size() + 1; }
  std::uint8_t bin(std::size_t feature, double x) const;
};

struct HistogramTreeOptions {
  std::size_t max_depth = 8;
  std::size_t max_leaves = 31;
  std::size_t min_leaf = 20;
  double lambda = 0.0;
  double min_child_hessian = 1e-3;
};

/// Leaf-wise (best-first) growth over pre-binned features. Thresholds are
/// stored as raw-value bin edges so prediction needs no binning.
Tree grow_histogram_tree(const std::vector<std::uint8_t>& binned, std::size_t n_features,
                         const BinMapper& mapper, std::span<const double> grad,
                         std::span<const double> hess, std::span<const std::size_t> samples,
                         const HistogramTreeOptions& options);

/// Random forest and bagging: an average of class-frequency trees.
class TreeEnsemble final : public Estimator {
 public:
  TreeEnsemble(std::size_t n_classes, std::vector<Tree> trees)
      : n_classes_(n_classes), trees_(std::move(trees)) {}

  Matrix predict_proba(const Matrix& X) const override;
  /// Output of member `t` alone.
  Matrix member_proba(std::size_t t, const Matrix& X) const;
  std::size_t size() const { return trees_.size(); }
  const std::vector<Tree>& trees() const { return trees_; }

  nlohmann::json to_json() const override;
  static std::unique_ptr<TreeEnsemble> from_json(const nlohmann::json& doc);

 private:
  std::size_t n_classes_;
  std::vector<Tree> trees_;
};

struct EnsembleOptions {
  std::size_t n_trees = 100;
  bool bootstrap = true;
  double sample_fraction = 1.0;
  ClassificationTreeOptions tree;
};

/// Per-tree seeds come from derive_seed(seed, tree index).
std::unique_ptr<TreeEnsemble> fit_ensemble(const Matrix& X, std::span<const int> y,
                                           std::size_t n_classes, const EnsembleOptions& options,
                                           std::uint64_t seed);

/// Binary logistic-loss boosting; the score is base + sum of tree outputs
/// (learning rate already folded into leaf values).
class BoostedTrees final : public Estimator {
 public:
  BoostedTrees() = default;
  explicit BoostedTrees(double base_score) : base_score_(base_score) {}

  Matrix predict_proba(const Matrix& X) const override;
  Vector decision_function(const Matrix& X) const;
  void add_tree(Tree tree) { trees_.push_back(std::move(tree)); }
  std::size_t rounds() const { return trees_.size(); }
  double base_score() const { return base_score_; }
  void set_base_score(double v) { base_score_ = v; }

  nlohmann::json to_json() const override;
  static std::unique_ptr<BoostedTrees> from_json(const nlohmann::json& doc);

 private:
  double base_score_ = 0.0;
  std::vector<Tree> trees_;
};

enum class BoostingFlavor { classic, regularized, histogram };

struct BoostingOptions {
  BoostingFlavor flavor = BoostingFlavor::classic;
  std::size_t n_rounds = 100;
  double learning_rate = 0.1;
  double subsample = 1.0;
  std::size_t max_depth = 3;
  std::size_t min_leaf = 1;
  double lambda = 0.0;
  double min_child_hessian = 0.0;
  std::size_t max_leaves = 31;
  std::size_t max_bins = 255;
  /// Report to the observer every this many rounds.
  std::size_t report_every = 10;
};

/// Called after round r (1-based) with the running model; true stops.
using RoundCallback = std::function<bool(std::size_t round)>;

/// Grows `model` in place so a callback can score the partial ensemble.
void fit_boosting(BoostedTrees& model, const Matrix& X, std::span<const int> y,
                  const BoostingOptions& options, std::uint64_t seed,
                  const RoundCallback& on_round = {});

/// Mean logistic loss of a boosted model on (X, y).
double logistic_loss(const BoostedTrees& model, const Matrix& X, std::span<const int> y);

}  // namespace classify::trees
