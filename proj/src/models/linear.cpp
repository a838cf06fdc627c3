#include "classify/models/linear.hpp"

#include <cmath>
#include <numeric>

#include "classify/error.hpp"
#include "classify/rng.hpp"
#include "json_util.hpp"

namespace classify::linear {

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double ez = std::exp(z);
  return ez / (1.0 + ez);
}

}  // namespace

Matrix Softmax::scores(const Matrix& X) const {
  return (X * weights_.transpose()).rowwise() + bias_.transpose();
}

Matrix Softmax::predict_proba(const Matrix& X) const {
  Matrix z = scores(X);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    z.row(i) = (z.row(i).array() - m).exp();
    z.row(i) /= z.row(i).sum();
  }
  return z;
}

nlohmann::json Softmax::to_json() const {
  return {{"type", "softmax"},
          {"weights", detail::matrix_to_json(weights_)},
          {"bias", detail::vector_to_json(bias_)}};
}

std::unique_ptr<Softmax> Softmax::from_json(const nlohmann::json& doc) {
  return std::make_unique<Softmax>(detail::matrix_from_json(doc.at("weights")),
                                   detail::vector_from_json(doc.at("bias")));
}

double logistic_objective(const Softmax& model, const Matrix& X, std::span<const int> y, double l2,
                          Matrix* grad_w, Vector* grad_b) {
  const double n = static_cast<double>(X.rows());
  const Matrix z = model.scores(X);
  Matrix p(z.rows(), z.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    double s = 0.0;
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      p(i, c) = std::exp(z(i, c) - m);
      s += p(i, c);
    }
    p.row(i) /= s;
    loss += m + std::log(s) - z(i, y[std::size_t(i)]);
  }
  loss = loss / n + l2 * model.weights().squaredNorm() / (2.0 * n);
  if (grad_w) {
    for (Eigen::Index i = 0; i < p.rows(); ++i) p(i, y[std::size_t(i)]) -= 1.0;
    p /= n;
    *grad_w = p.transpose() * X + (l2 / n) * model.weights();
    *grad_b = p.colwise().sum().transpose();
  }
  return loss;
}

std::unique_ptr<Softmax> fit_logistic(const Matrix& X, std::span<const int> y,
                                      std::size_t n_classes, const LogisticOptions& options) {
  const auto c = Eigen::Index(n_classes);
  Softmax model(Matrix::Zero(c, X.cols()), Vector::Zero(c));
  Matrix gw;
  Vector gb;
  double loss = logistic_objective(model, X, y, options.l2, &gw, &gb);
  double step = 1.0;
  for (std::size_t iter = 0; iter < options.max_iter; ++iter) {
    const double gnorm = std::max(gw.cwiseAbs().maxCoeff(), gb.cwiseAbs().maxCoeff());
    if (gnorm < options.tol) break;
    const double gsq = gw.squaredNorm() + gb.squaredNorm();
    step *= 2.0;
    for (int tries = 0; tries < 60; ++tries) {
      Softmax trial(model.weights() - step * gw, model.bias() - step * gb);
      const double trial_loss = logistic_objective(trial, X, y, options.l2, nullptr, nullptr);
      if (trial_loss <= loss - 0.5 * step * gsq) {
        model = std::move(trial);
        break;
      }
      step *= 0.5;
    }
    loss = logistic_objective(model, X, y, options.l2, &gw, &gb);
  }
  return std::make_unique<Softmax>(std::move(model));
}

Vector BinaryLinear::margin(const Matrix& X) const {
  return (X * weights_).array() + intercept_;
}

Matrix BinaryLinear::predict_proba(const Matrix& X) const {
  const Vector m = margin(X);
  Matrix out(X.rows(), 2);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double p = sigmoid(m[i]);
    out(i, 1) = p;
    out(i, 0) = 1.0 - p;
  }
  return out;
}

nlohmann::json BinaryLinear::to_json() const {
  return {{"type", "binary_linear"},
          {"weights", detail::vector_to_json(weights_)},
          {"intercept", intercept_}};
}

std::unique_ptr<BinaryLinear> BinaryLinear::from_json(const nlohmann::json& doc) {
  return std::make_unique<BinaryLinear>(detail::vector_from_json(doc.at("weights")),
                                        doc.at("intercept").get<double>());
}

std::unique_ptr<BinaryLinear> fit_sgd(const Matrix& X, std::span<const int> y,
                                      const SgdOptions& options, std::uint64_t seed) {
  const std::size_t n = static_cast<std::size_t>(X.rows());
  Vector w = Vector::Zero(X.cols());
  double b = 0.0;
  // dloss/dmargin for a sample with label sign s at margin m.
  const auto dloss = [&](double m, double s) {
    if (options.loss == SgdLoss::hinge) return s * m < 1.0 ? -s : 0.0;
    const double z = s * m;
    return -s * (z > 0 ? std::exp(-z) / (1.0 + std::exp(-z)) : 1.0 / (1.0 + std::exp(z)));
  };
  const double alpha = options.alpha;
  const double typw = std::sqrt(1.0 / std::sqrt(alpha));
  const double eta0 = typw / std::max(1.0, std::abs(dloss(-typw, 1.0)));
  const double t0 = 1.0 / (alpha * eta0);

  Rng rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Keep w as scale * v so the L2 decay is O(1) per step.
  double scale = 1.0;
  double t = 0.0;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t r : order) {
      const double eta = 1.0 / (alpha * (t0 + t));
      const double s = y[r] == 1 ? 1.0 : -1.0;
      const auto row = X.row(Eigen::Index(r));
      const double m = scale * row.dot(w) + b;
      const double g = dloss(m, s);
      scale *= 1.0 - eta * alpha;
      if (scale < 1e-9) {
        w *= scale;
        scale = 1.0;
      }
      if (g != 0.0) {
        w -= (eta * g / scale) * row.transpose();
        b -= eta * g;
      }
      t += 1.0;
    }
    if (!w.allFinite() || !std::isfinite(b)) {
      throw Error(ErrorCode::Internal, "SGD diverged at epoch " + std::to_string(epoch + 1));
    }
  }
  w *= scale;
  return std::make_unique<BinaryLinear>(std::move(w), b);
}

}  // namespace classify::linear
