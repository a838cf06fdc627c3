#pragma once

#include <span>

#include "classify/models.hpp"

namespace classify::linear {

/// Multinomial logistic regression: softmax over `weights * x + bias`.
class Softmax final : public Estimator {
 public:
  Softmax(Matrix weights, Vector bias) : weights_(std::move(weights)), bias_(std::move(bias)) {}

  Matrix predict_proba(const Matrix& X) const override;
  Matrix scores(const Matrix& X) const;
  const Matrix& weights() const { return weights_; }  // classes x features
  const Vector& bias() const { return bias_; }

  nlohmann::json to_json() const override;
  static std::unique_ptr<Softmax> from_json(const nlohmann::json& doc);

 private:
  Matrix weights_;
  Vector bias_;
};

struct LogisticOptions {
  double l2 = 1.0;
  std::size_t max_iter = 2000;
  double tol = 1e-6;
};

/// Objective: mean cross-entropy + l2 |W|^2 / (2n), intercepts unpenalized.
double logistic_objective(const Softmax& model, const Matrix& X, std::span<const int> y, double l2,
                          Matrix* grad_w, Vector* grad_b);

/// Batch gradient descent with backtracking line search until the gradient
/// max-norm drops below `tol` or `max_iter` is reached.
std::unique_ptr<Softmax> fit_logistic(const Matrix& X, std::span<const int> y,
                                      std::size_t n_classes, const LogisticOptions& options);

enum class SgdLoss { logistic, hinge };

/// Binary linear model; P(class 1) = logistic(margin). For hinge loss the
/// result is an uncalibrated monotone score.
class BinaryLinear final : public Estimator {
 public:
  BinaryLinear(Vector weights, double intercept)
      : weights_(std::move(weights)), intercept_(intercept) {}

  Matrix predict_proba(const Matrix& X) const override;
  Vector margin(const Matrix& X) const;
  const Vector& weights() const { return weights_; }
  double intercept() const { return intercept_; }

  nlohmann::json to_json() const override;
  static std::unique_ptr<BinaryLinear> from_json(const nlohmann::json& doc);

 private:
  Vector weights_;
  double intercept_;
};

struct SgdOptions {
  SgdLoss loss = SgdLoss::hinge;
  double alpha = 1e-4;
  std::size_t epochs = 50;
};

/// Per-sample SGD with L2 decay and the step schedule
/// eta_t = 1 / (alpha (t0 + t)).
std::unique_ptr<BinaryLinear> fit_sgd(const Matrix& X, std::span<const int> y,
                                      const SgdOptions& options, std::uint64_t seed);

}  // namespace classify::linear
