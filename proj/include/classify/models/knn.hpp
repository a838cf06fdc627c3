#pragma once

#include <span>

#include "classify/models.hpp"

namespace classify::knn {

enum class Weighting { uniform, distance };

/// Stores the (standardized) training rows. Neighbors are ranked by
/// (distance, training row index). With distance weighting, exact matches
/// take all of the vote.
class NearestNeighbors final : public Estimator {
 public:
  NearestNeighbors(Matrix X, std::vector<int> y, std::size_t n_classes, std::size_t k,
                   Weighting weighting)
      : X_(std::move(X)), y_(std::move(y)), n_classes_(n_classes), k_(k), weighting_(weighting) {}

  Matrix predict_proba(const Matrix& X) const override;

  nlohmann::json to_json() const override;
  static std::unique_ptr<NearestNeighbors> from_json(const nlohmann::json& doc);

 private:
  Matrix X_;
  std::vector<int> y_;
  std::size_t n_classes_;
  std::size_t k_;
  Weighting weighting_;
};

}  // namespace classify::knn
