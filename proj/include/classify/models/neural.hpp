#pragma once

#include <functional>
#include <span>

#include "classify/models.hpp"

namespace classify::neural {

/// One hidden ReLU layer, softmax output.
struct MlpWeights {
  Matrix w1;  // inputs x hidden
  Vector b1;
  Matrix w2;  // hidden x classes
  Vector b2;

  std::size_t size() const;
  Vector flatten() const;
  void assign(const Vector& flat);
};

/// Mean cross-entropy over the batch plus (l2/2)(|w1|^2 + |w2|^2).
/// Writes the analytic gradient into `grad` when non-null.
double mlp_loss(const MlpWeights& weights, const Matrix& X, std::span<const int> y, double l2,
                MlpWeights* grad);

Matrix mlp_forward(const MlpWeights& weights, const Matrix& X);

struct MlpOptions {
  std::size_t hidden = 100;
  double learning_rate = 0.01;
  std::size_t epochs = 200;
  double l2 = 1e-4;
  std::size_t batch_size = 32;
  double momentum = 0.9;
  std::size_t report_every = 10;
};

class Mlp final : public Estimator {
 public:
  Mlp() = default;
  explicit Mlp(MlpWeights weights) : weights_(std::move(weights)) {}

  Matrix predict_proba(const Matrix& X) const override { return mlp_forward(weights_, X); }
  const MlpWeights& weights() const { return weights_; }
  MlpWeights& weights() { return weights_; }

  nlohmann::json to_json() const override;
  static std::unique_ptr<Mlp> from_json(const nlohmann::json& doc);

 private:
  MlpWeights weights_;
};

/// Glorot-uniform initialization, then mini-batch gradient descent with
/// momentum. `on_epoch(e)` runs after every `report_every` epochs; true stops.
void fit_mlp(Mlp& model, const Matrix& X, std::span<const int> y, std::size_t n_classes,
             const MlpOptions& options, std::uint64_t seed,
             const std::function<bool(std::size_t)>& on_epoch = {});

}  // namespace classify::neural
