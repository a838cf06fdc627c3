#include "classify/models/neural.hpp"

#include <cmath>
#include <numeric>

#include "classify/error.hpp"
#include "classify/rng.hpp"
#include "json_util.hpp"

namespace classify::neural {

namespace {

/// Row-wise softmax; also returns per-row log-sum-exp through `lse`.
Matrix softmax(const Matrix& z, Vector* lse = nullptr) {
  Matrix p(z.rows(), z.cols());
  if (lse) lse->resize(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    double s = 0.0;
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      p(i, c) = std::exp(z(i, c) - m);
      s += p(i, c);
    }
    p.row(i) /= s;
    if (lse) (*lse)[i] = m + std::log(s);
  }
  return p;
}

}  // namespace

std::size_t MlpWeights::size() const {
  return std::size_t(w1.size() + b1.size() + w2.size() + b2.size());
}

Vector MlpWeights::flatten() const {
  Vector flat(static_cast<Eigen::Index>(size()));
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < w1.size(); ++i) flat[k++] = w1.data()[i];
  for (Eigen::Index i = 0; i < b1.size(); ++i) flat[k++] = b1[i];
  for (Eigen::Index i = 0; i < w2.size(); ++i) flat[k++] = w2.data()[i];
  for (Eigen::Index i = 0; i < b2.size(); ++i) flat[k++] = b2[i];
  return flat;
}

void MlpWeights::assign(const Vector& flat) {
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < w1.size(); ++i) w1.data()[i] = flat[k++];
  for (Eigen::Index i = 0; i < b1.size(); ++i) b1[i] = flat[k++];
  for (Eigen::Index i = 0; i < w2.size(); ++i) w2.data()[i] = flat[k++];
  for (Eigen::Index i = 0; i < b2.size(); ++i) b2[i] = flat[k++];
}

Matrix mlp_forward(const MlpWeights& w, const Matrix& X) {
  Matrix a1 = ((X * w.w1).rowwise() + w.b1.transpose()).cwiseMax(0.0);
  Matrix z2 = (a1 * w.w2).rowwise() + w.b2.transpose();
  return softmax(z2);
}

double mlp_loss(const MlpWeights& w, const Matrix& X, std::span<const int> y, double l2,
                MlpWeights* grad) {
  const auto n = X.rows();
  const Matrix z1 = (X * w.w1).rowwise() + w.b1.transpose();
  const Matrix a1 = z1.cwiseMax(0.0);
  const Matrix z2 = (a1 * w.w2).rowwise() + w.b2.transpose();
  Vector lse;
  Matrix p = softmax(z2, &lse);

  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) loss += lse[i] - z2(i, y[std::size_t(i)]);
  loss /= static_cast<double>(n);
  loss += 0.5 * l2 * (w.w1.squaredNorm() + w.w2.squaredNorm());

  if (grad) {
    Matrix dz2 = p;
    for (Eigen::Index i = 0; i < n; ++i) dz2(i, y[std::size_t(i)]) -= 1.0;
    dz2 /= static_cast<double>(n);
    grad->w2 = a1.transpose() * dz2 + l2 * w.w2;
    grad->b2 = dz2.colwise().sum().transpose();
    Matrix dz1 = dz2 * w.w2.transpose();
    for (Eigen::Index i = 0; i < dz1.size(); ++i) {
      if (z1.data()[i] <= 0.0) dz1.data()[i] = 0.0;
    }
    grad->w1 = X.transpose() * dz1 + l2 * w.w1;
    grad->b1 = dz1.colwise().sum().transpose();
  }
  return loss;
}

nlohmann::json Mlp::to_json() const {
  return {{"type", "mlp"},
          {"w1", detail::matrix_to_json(weights_.w1)},
          {"b1", detail::vector_to_json(weights_.b1)},
          {"w2", detail::matrix_to_json(weights_.w2)},
          {"b2", detail::vector_to_json(weights_.b2)}};
}

std::unique_ptr<Mlp> Mlp::from_json(const nlohmann::json& doc) {
  MlpWeights w;
  w.w1 = detail::matrix_from_json(doc.at("w1"));
  w.b1 = detail::vector_from_json(doc.at("b1"));
  w.w2 = detail::matrix_from_json(doc.at("w2"));
  w.b2 = detail::vector_from_json(doc.at("b2"));
  return std::make_unique<Mlp>(std::move(w));
}

void fit_mlp(Mlp& model, const Matrix& X, std::span<const int> y, std::size_t n_classes,
             const MlpOptions& options, std::uint64_t seed,
             const std::function<bool(std::size_t)>& on_epoch) {
  const auto d = X.cols();
  const auto h = Eigen::Index(options.hidden);
  const auto c = Eigen::Index(n_classes);
  Rng rng(seed);

  MlpWeights& w = model.weights();
  const auto init = [&](Eigen::Index fan_in, Eigen::Index fan_out, double* data, Eigen::Index count) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (Eigen::Index i = 0; i < count; ++i) data[i] = rng.uniform(-limit, limit);
  };
  w.w1.resize(d, h);
  w.b1.resize(h);
  w.w2.resize(h, c);
  w.b2.resize(c);
  init(d, h, w.w1.data(), w.w1.size());
  init(d, h, w.b1.data(), w.b1.size());
  init(h, c, w.w2.data(), w.w2.size());
  init(h, c, w.b2.data(), w.b2.size());

  MlpWeights velocity{Matrix::Zero(d, h), Vector::Zero(h), Matrix::Zero(h, c), Vector::Zero(c)};
  MlpWeights grad;

  const std::size_t n = static_cast<std::size_t>(X.rows());
  const std::size_t batch = std::max<std::size_t>(1, std::min(options.batch_size, n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Matrix xb;
  std::vector<int> yb;

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      xb.resize(Eigen::Index(stop - start), d);
      yb.resize(stop - start);
      for (std::size_t k = start; k < stop; ++k) {
        xb.row(Eigen::Index(k - start)) = X.row(Eigen::Index(order[k]));
        yb[k - start] = y[order[k]];
      }
      mlp_loss(w, xb, yb, options.l2, &grad);
      const double mu = options.momentum;
      const double lr = options.learning_rate;
      velocity.w1 = mu * velocity.w1 - lr * grad.w1;
      velocity.b1 = mu * velocity.b1 - lr * grad.b1;
      velocity.w2 = mu * velocity.w2 - lr * grad.w2;
      velocity.b2 = mu * velocity.b2 - lr * grad.b2;
      w.w1 += velocity.w1;
      w.b1 += velocity.b1;
      w.w2 += velocity.w2;
      w.b2 += velocity.b2;
    }
    if (!w.w1.allFinite() || !w.w2.allFinite()) {
      throw Error(ErrorCode::Internal,
                  "perceptron training diverged at epoch " + std::to_string(epoch + 1) +
                      "; lower the learning rate");
    }
    const std::size_t done = epoch + 1;
    if (on_epoch && (done % options.report_every == 0 || done == options.epochs)) {
      if (on_epoch(done)) break;
    }
  }
}

}  // namespace classify::neural
