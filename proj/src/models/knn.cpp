#include "classify/models/knn.hpp"

#include <algorithm>
#include <numeric>

#include "json_util.hpp"

namespace classify::knn {

Matrix NearestNeighbors::predict_proba(const Matrix& X) const {
  const std::size_t n_train = y_.size();
  const std::size_t k = std::min(k_, n_train);
  Matrix out = Matrix::Zero(X.rows(), Eigen::Index(n_classes_));
  std::vector<std::pair<double, std::size_t>> dist(n_train);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (std::size_t j = 0; j < n_train; ++j) {
      dist[j] = {(X_.row(Eigen::Index(j)) - X.row(i)).squaredNorm(), j};
    }
    std::partial_sort(dist.begin(), dist.begin() + std::ptrdiff_t(k), dist.end());
    const bool exact = dist.front().first == 0.0;
    for (std::size_t m = 0; m < k; ++m) {
      const auto [d2, j] = dist[m];
      double w = 1.0;
      if (weighting_ == Weighting::distance) {
        if (exact) {
          w = d2 == 0.0 ? 1.0 : 0.0;
        } else {
          w = 1.0 / std::sqrt(d2);
        }
      }
      out(i, y_[j]) += w;
    }
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

nlohmann::json NearestNeighbors::to_json() const {
  return {{"type", "knn"},
          {"X", detail::matrix_to_json(X_)},
          {"y", y_},
          {"n_classes", n_classes_},
          {"k", k_},
          {"weights", weighting_ == Weighting::uniform ? "uniform" : "distance"}};
}

std::unique_ptr<NearestNeighbors> NearestNeighbors::from_json(const nlohmann::json& doc) {
  return std::make_unique<NearestNeighbors>(
      detail::matrix_from_json(doc.at("X")), doc.at("y").get<std::vector<int>>(),
      doc.at("n_classes").get<std::size_t>(), doc.at("k").get<std::size_t>(),
      doc.at("weights").get<std::string>() == "uniform" ? Weighting::uniform : Weighting::distance);
}

}  // namespace classify::knn
